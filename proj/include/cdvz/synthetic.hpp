#pragma once

#include <cstdint>
#include <vector>

#include "cdvz/image.hpp"

namespace cdvz {

// Deterministic textured test image: Gaussian blobs of assorted scales over
// a low-frequency sinusoidal texture, normalized into [0.02, 0.98].
GrayImage synth_image(std::uint64_t seed, int width, int height);

std::vector<GrayImage> synth_corpus(std::uint64_t seed, int count, int width, int height);

// Lossless quarter-turn rotation (clockwise).
GrayImage rotate90(const GrayImage& img, int quarter_turns);

struct SynthTransform {
  int quarter_turns = 0;   // clockwise
  double scale = 1.0;      // bilinear rescale factor
  double blur_sigma = 0.0; // 0 disables the blur
};

GrayImage apply_transform(const GrayImage& img, const SynthTransform& t, const Engine& eng = {});

// Maps a point (and its scale) of the source image into the transformed
// image's coordinates.
void map_point(const SynthTransform& t, int src_w, int src_h, double& x, double& y, double& sigma);

}  // namespace cdvz
