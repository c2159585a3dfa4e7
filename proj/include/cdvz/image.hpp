#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <vector>

#include "cdvz/parallel.hpp"

namespace cdvz {

using ImageArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single-channel luminance raster, row-major, values in [0, 1].
struct GrayImage {
  ImageArray pix;  // rows = height, cols = width
  int width() const { return static_cast<int>(pix.cols()); }
  int height() const { return static_cast<int>(pix.rows()); }
};

GrayImage make_image(int width, int height, double fill = 0.0);

// Throws DataError when the raster breaks the type invariants
// (dimensions >= 8, finite values in [0, 1]).
void validate(const GrayImage& img);

// Binary PGM (P5) and PPM (P6) with maxval 255. PPM converts to luminance
// with BT.601 weights 0.299/0.587/0.114.
GrayImage load_image(const std::filesystem::path& path);
void save_pgm(const GrayImage& img, const std::filesystem::path& path);

// Bilinear resample with half-pixel center alignment.
GrayImage rescale_bilinear(const GrayImage& img, int out_w, int out_h);

// Caps the longer side at `limit`, preserving aspect ratio (rounded to the
// nearest pixel). Images already within the limit pass through unchanged.
GrayImage resize_max_side(const GrayImage& img, int limit = 640);

// Even-coordinate decimation to floor(w/2) x floor(h/2). Input must be at
// least 16 px on both sides; the octave loop stops before violating that.
GrayImage downsample_half(const GrayImage& img);
ImageArray downsample_half(const ImageArray& img);

// Taps for offsets -r..r with r = ceil(3 sigma), L1-normalized.
std::vector<double> gaussian_kernel(double sigma);

// Separable Gaussian filter, mirror boundary. Tile-parallel; output is
// bit-identical for any tile size or worker count.
ImageArray gaussian_blur(const ImageArray& img, double sigma, const Engine& eng = {});
GrayImage gaussian_blur(const GrayImage& img, double sigma, const Engine& eng = {});

// 4-neighbor Laplacian stencil [0 1 0; 1 -4 1; 0 1 0], mirror boundary.
ImageArray laplacian_3x3(const ImageArray& img, const Engine& eng = {});

}  // namespace cdvz
