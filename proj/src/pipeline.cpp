#include "cdvz/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "cdvz/common.hpp"

namespace cdvz {

namespace {

// Descriptor extraction shared by the encoder and the trainers: detect,
// select, orient, describe. Returns the selected points through `selected`.
std::vector<RawDescriptor> extract_descriptors(const GrayImage& prepared,
                                               const ModelBundle& bundle, const Engine& eng,
                                               StageTimings* timings,
                                               std::vector<InterestPoint>* selected_out = nullptr) {
  Pyramid pyramid;
  auto points = time_stage(timings, "detection", [&] {
    return detect_keypoints(prepared, bundle.detector, &pyramid, eng);
  });

  auto selected = time_stage(timings, "selection", [&] {
    fill_center_distance(points, prepared.width(), prepared.height());
    return select_top(points, bundle.relevance, static_cast<std::size_t>(bundle.select_n));
  });

  auto descriptors = time_stage(timings, "description", [&] {
    const auto oriented = assign_orientations(pyramid, bundle.detector.sigmas, selected, eng);
    return describe_batch(pyramid, bundle.detector.sigmas, oriented, eng);
  });

  if (selected_out) *selected_out = std::move(selected);
  return descriptors;
}

std::vector<TernaryCode> compress_descriptors(const std::vector<RawDescriptor>& descriptors,
                                              const ModelBundle& bundle, const ModeSpec& mode,
                                              int width, int height, const Engine& eng) {
  auto codes = par_for_items(descriptors, [&](const RawDescriptor& raw) {
    const auto transformed = transform_descriptor(raw.values, bundle.transforms);
    TernaryCode code = quantize_ternary(transformed, bundle.quantizer, mode);
    code.xq = quantize_coord(raw.point.pt.x, width);
    code.yq = quantize_coord(raw.point.pt.y, height);
    code.sigma_q = quantize_sigma_log(raw.point.pt.sigma);
    code.theta_q = quantize_theta(raw.point.theta);
    return code;
  }, eng);
  return codes;
}

}  // namespace

EncodedImage encode_image(const GrayImage& img, const ModelBundle& bundle, const ModeSpec& mode,
                          const Engine& eng, StageTimings* timings, const EncodeOptions& opts) {
  validate(img);
  const GrayImage prepared = resize_max_side(img, opts.max_side);

  std::vector<RawDescriptor> descriptors =
      extract_descriptors(prepared, bundle, eng, timings);

  // The global signature size is fixed by the mode, so the local budget is
  // known before either block is built.
  const int nc = bundle.gmm.components();
  const int k = std::min(nc, std::max(1, static_cast<int>(std::lround(nc * mode.scfv_fraction))));
  const std::size_t global_bytes = scfv_serialized_bytes(nc, k, mode.variance_planes);
  if (global_bytes + kLocalHeaderBytes > mode.budget_bytes)
    throw DataError("global descriptor alone exceeds the mode budget");
  const std::size_t local_payload = mode.budget_bytes - global_bytes - kLocalHeaderBytes;
  const std::size_t max_codes = local_payload / packed_code_bytes(mode.elements);

  EncodedImage enc;
  enc.mode_id = mode.id;
  enc.width = prepared.width();
  enc.height = prepared.height();
  enc.model_crc = bundle.crc();

  enc.codes = time_stage(timings, "compression", [&] {
    auto codes = compress_descriptors(descriptors, bundle, mode, prepared.width(),
                                      prepared.height(), eng);
    // Selection ordered the descriptors by relevance, so dropping from the
    // tail sheds the least relevant codes first.
    if (codes.size() > max_codes) codes.resize(max_codes);
    return codes;
  });

  enc.global_desc = time_stage(timings, "aggregation", [&] {
    const Eigen::MatrixXd x = pca_reduce(descriptors, bundle.pca);
    const Eigen::MatrixXd gamma = posteriors_matrix(x, bundle.gmm);
    const Eigen::MatrixXd gm = fv_mean_matrix(x, gamma, bundle.gmm);
    Eigen::MatrixXd gv;
    if (mode.variance_planes) gv = fv_var_matrix(x, gamma, bundle.gmm);
    return scfv_encode(gm, gv, bundle.gmm, mode);
  });

  return enc;
}

ModelBundle train_model(const std::vector<GrayImage>& corpus, const TrainOptions& opts,
                        const Engine& eng) {
  if (corpus.size() < 20) throw DataError("training corpus needs at least 20 images");

  ModelBundle bundle;
  bundle.detector = ScaleSpaceConfig::defaults();
  bundle.select_n = opts.select_n;
  bundle.relevance = RelevanceModel::uniform();
  bundle.transforms = TransformPair::defaults();

  // Pass 1 with a neutral selector: raw descriptors feed the PCA, GMM and
  // quantizer; geometric self-pairs label the relevance samples.
  std::vector<Eigen::MatrixXd> raw_blocks;
  std::vector<LabeledStats> labeled;
  Eigen::Index total_rows = 0;

  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const GrayImage prepared = resize_max_side(corpus[i], opts.max_side);
    std::vector<InterestPoint> selected;
    const auto descriptors = extract_descriptors(prepared, bundle, eng, nullptr, &selected);

    Eigen::MatrixXd block(static_cast<Eigen::Index>(descriptors.size()), 128);
    for (std::size_t r = 0; r < descriptors.size(); ++r)
      block.row(static_cast<Eigen::Index>(r)) = descriptors[r].values.transpose();
    total_rows += block.rows();
    raw_blocks.push_back(std::move(block));

    // One deterministic transformed partner per image.
    SynthTransform t;
    t.quarter_turns = 1 + static_cast<int>(i % 3);
    t.scale = 0.75 + 0.05 * static_cast<double>(i % 4);
    t.blur_sigma = (i % 2) ? 1.0 : 0.5;
    const GrayImage partner = apply_transform(prepared, t, eng);
    Pyramid partner_pyr;
    auto partner_points = detect_keypoints(partner, bundle.detector, &partner_pyr, eng);

    std::vector<MappedPoint> mapped(selected.size());
    for (std::size_t s = 0; s < selected.size(); ++s) {
      double mx = selected[s].x, my = selected[s].y, ms = selected[s].sigma;
      map_point(t, prepared.width(), prepared.height(), mx, my, ms);
      mapped[s] = {mx, my, ms};
    }
    auto labels = label_matches_by_geometry(selected, partner_points, mapped);
    labeled.insert(labeled.end(), labels.begin(), labels.end());
  }

  Eigen::MatrixXd raw_corpus(total_rows, 128);
  Eigen::Index row = 0;
  for (const auto& block : raw_blocks) {
    raw_corpus.middleRows(row, block.rows()) = block;
    row += block.rows();
  }

  bundle.relevance = train_relevance_tables(labeled, opts.relevance_bins);
  bundle.pca = train_pca(raw_corpus);

  const Eigen::MatrixXd corpus32 = pca_reduce(raw_corpus, bundle.pca);
  bundle.gmm = train_gmm(corpus32, opts.gmm_components, opts.em_iterations, opts.seed);

  Eigen::MatrixXd transformed(total_rows, 128);
  for (Eigen::Index r = 0; r < total_rows; ++r)
    transformed.row(r) =
        transform_descriptor(raw_corpus.row(r).transpose(), bundle.transforms).transpose();
  bundle.quantizer = train_thresholds(transformed);

  bundle.validate();
  return bundle;
}

}  // namespace cdvz
