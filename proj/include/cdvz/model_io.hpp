#pragma once

#include <filesystem>
#include <string>

#include "cdvz/relevance.hpp"
#include "cdvz/scale_space.hpp"
#include "cdvz/scfv.hpp"
#include "cdvz/transform_coding.hpp"

namespace cdvz {

// Everything the encoder needs, trained off-line and shipped as one file.
struct ModelBundle {
  ScaleSpaceConfig detector;
  int select_n = 300;
  RelevanceModel relevance;
  TransformPair transforms;
  QuantizerModel quantizer;
  PCAModel pca;
  GMMModel gmm;

  void validate() const;
  // Identity of the bundle; stamped into every container it encodes.
  std::uint32_t crc() const;
};

// Versioned text serialization with a per-section checksum.
std::string serialize_model(const ModelBundle& bundle);
ModelBundle parse_model(const std::string& text);

void save_model(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace cdvz
