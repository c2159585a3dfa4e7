#pragma once

#include <vector>

#include "cdvz/container.hpp"
#include "cdvz/eval.hpp"
#include "cdvz/model_io.hpp"
#include "cdvz/synthetic.hpp"

namespace cdvz {

struct EncodeOptions {
  int max_side = 640;
};

// Full encoder: detection, selection, description, compression, aggregation.
// Deterministic for fixed inputs regardless of worker count or tile size.
EncodedImage encode_image(const GrayImage& img, const ModelBundle& bundle, const ModeSpec& mode,
                          const Engine& eng = {}, StageTimings* timings = nullptr,
                          const EncodeOptions& opts = {});

struct TrainOptions {
  std::uint64_t seed = 7;
  int gmm_components = 8;
  int em_iterations = 25;
  int select_n = 300;
  int max_side = 640;
  int relevance_bins = 16;
};

// Trains every learned part of the bundle from a corpus of at least 20
// images. Relevance tables come from synthetic rotation/scale/blur pairs of
// the corpus images. Byte-identical output for a fixed seed.
ModelBundle train_model(const std::vector<GrayImage>& corpus, const TrainOptions& opts = {},
                        const Engine& eng = {});

}  // namespace cdvz
