#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "cdvz/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cdvz;

namespace {

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .pgm/.ppm images in " + dir.string());
  return files;
}

int run_extract(const std::vector<std::string>& images, const std::string& model_path,
                const std::string& mode_name, const std::string& out_dir, int max_side,
                const Engine& eng, const std::string& timings_path) {
  const ModelBundle bundle = load_model(model_path);
  const ModeSpec& mode = mode_by_name(mode_name);
  fs::create_directories(out_dir);

  StageTimings timings;
  EncodeOptions opts;
  opts.max_side = max_side;
  int failures = 0;
  for (const auto& image_path : images) {
    try {
      const GrayImage img = load_image(image_path);
      const EncodedImage enc =
          encode_image(img, bundle, mode, eng, timings_path.empty() ? nullptr : &timings, opts);
      const fs::path out = fs::path(out_dir) / (fs::path(image_path).stem().string() + ".cdvz");
      save_container(enc, out);
      std::cout << image_path << " -> " << out.string() << "\n";
    } catch (const std::exception& e) {
      std::cerr << "error: " << image_path << ": " << e.what() << "\n";
      ++failures;
    }
  }
  if (!timings_path.empty()) {
    std::ofstream out(timings_path);
    if (!out) throw DataError("cannot write timings: " + timings_path);
    out << timings.to_csv();
  }
  return failures == 0 ? 0 : 2;
}

int run_train(const std::string& corpus_dir, const std::string& out_path, const TrainOptions& opts,
              const Engine& eng) {
  std::vector<GrayImage> corpus;
  for (const auto& p : list_images(corpus_dir)) corpus.push_back(load_image(p));
  const ModelBundle bundle = train_model(corpus, opts, eng);
  save_model(bundle, out_path);
  char crc_hex[16];
  std::snprintf(crc_hex, sizeof(crc_hex), "%08x", bundle.crc());
  std::cout << "model bundle written to " << out_path << " (crc " << crc_hex << ")\n";
  return 0;
}

int run_train_relevance(const std::string& corpus_dir, const std::string& out_path,
                        const TrainOptions& opts, const Engine& eng) {
  std::vector<GrayImage> corpus;
  for (const auto& p : list_images(corpus_dir)) corpus.push_back(load_image(p));
  const ModelBundle bundle = train_model(corpus, opts, eng);
  save_relevance(bundle.relevance, out_path);
  std::cout << "relevance tables written to " << out_path << "\n";
  return 0;
}

int run_match(const std::string& a_path, const std::string& b_path) {
  const EncodedImage a = load_container(a_path);
  const EncodedImage b = load_container(b_path);
  const MatchResult r = match_pair(a, b);
  std::cout << "global_similarity " << format_double(r.global_similarity) << "\n";
  std::cout << "local_match_count " << r.local_match_count << "\n";
  return 0;
}

int run_retrieve(const std::vector<std::string>& query_paths, const std::string& index_dir,
                 const std::string& gt_path, const std::string& csv_path, const Engine& eng) {
  std::vector<std::pair<std::string, EncodedImage>> index_store;
  for (const auto& entry : fs::directory_iterator(index_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".cdvz") continue;
    index_store.emplace_back(entry.path().stem().string(), load_container(entry.path()));
  }
  std::sort(index_store.begin(), index_store.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  if (index_store.empty()) throw DataError("no .cdvz containers in " + index_dir);

  std::vector<std::pair<std::string, const EncodedImage*>> index;
  index.reserve(index_store.size());
  for (const auto& [id, enc] : index_store) index.emplace_back(id, &enc);

  std::vector<RankedList> lists;
  CsvTable csv;
  csv.push_back({"query", "rank", "item", "score"});
  for (const auto& qp : query_paths) {
    const std::string qid = fs::path(qp).stem().string();
    const EncodedImage query = load_container(qp);
    RankedList ranked = retrieve(query, qid, index, {}, eng);
    for (std::size_t r = 0; r < ranked.items.size(); ++r)
      csv.push_back({qid, std::to_string(r + 1), ranked.items[r].id,
                     format_double(ranked.items[r].score)});
    std::cout << qid << " -> " << (ranked.items.empty() ? "(none)" : ranked.items.front().id)
              << "\n";
    lists.push_back(std::move(ranked));
  }

  if (!gt_path.empty()) {
    const RelevanceJudgments judgments = load_judgments(gt_path);
    const double map_value = compute_map(lists, judgments);
    std::cout << "mAP " << format_double(map_value) << "\n";
    csv.push_back({"mAP", "", "", format_double(map_value)});
  }
  if (!csv_path.empty()) export_csv(csv, csv_path);
  return 0;
}

int run_bench(const std::string& images_dir, const std::string& model_path,
              const std::string& mode_name, const std::string& csv_path, const Engine& eng) {
  const ModelBundle bundle = load_model(model_path);
  const ModeSpec& mode = mode_by_name(mode_name);

  std::vector<GrayImage> images;
  for (const auto& p : list_images(images_dir)) images.push_back(load_image(p));

  StageTimings timings;
  for (const auto& img : images) encode_image(img, bundle, mode, eng, &timings);
  std::cout << timings.to_csv();
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw DataError("cannot write timings: " + csv_path);
    out << timings.to_csv();
  }

  // Detection speedup: 1 worker versus the configured count.
  {
    Engine single = eng;
    single.workers = 1;
    StageTimings t1, tn;
    Pyramid scratch;
    for (const auto& img : images) {
      const GrayImage prepared = resize_max_side(img);
      time_stage(&t1, "detection", [&] { return detect_keypoints(prepared, bundle.detector, nullptr, single); });
      time_stage(&tn, "detection", [&] { return detect_keypoints(prepared, bundle.detector, nullptr, eng); });
    }
    const double ms1 = t1.entries().front().total_ms;
    const double msn = tn.entries().front().total_ms;
    std::cout << "detection_speedup " << format_double(ms1 / msn) << " (1 -> "
              << eng.resolved_workers() << " workers)\n";
  }

  // Naive versus matrix aggregation on the last image's descriptors.
  {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd x(300, 32);
    for (Eigen::Index t = 0; t < x.rows(); ++t)
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(t, j) = gauss(rng);

    const double t0 = detail::monotonic_ms();
    const Eigen::MatrixXd gn = posteriors_naive(x, bundle.gmm);
    const Eigen::MatrixXd gmn = fv_mean_naive(x, gn, bundle.gmm);
    const Eigen::MatrixXd gvn = fv_var_naive(x, gn, bundle.gmm);
    const double t1 = detail::monotonic_ms();
    const Eigen::MatrixXd gm_ = posteriors_matrix(x, bundle.gmm);
    const Eigen::MatrixXd gmm_ = fv_mean_matrix(x, gm_, bundle.gmm);
    const Eigen::MatrixXd gvm_ = fv_var_matrix(x, gm_, bundle.gmm);
    const double t2 = detail::monotonic_ms();
    std::cout << "aggregation_naive_ms " << format_double(t1 - t0) << "\n";
    std::cout << "aggregation_matrix_ms " << format_double(t2 - t1) << "\n";
    std::cout << "aggregation_speedup " << format_double((t1 - t0) / (t2 - t1)) << "\n";
  }
  return 0;
}

int run_gen_corpus(const std::string& out_dir, int count, int width, int height,
                   std::uint64_t seed, bool variants, const Engine& eng) {
  fs::create_directories(out_dir);
  CsvTable gt;
  gt.push_back({"query_id", "relevant_id"});
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img%03d", i);
    const GrayImage img = synth_image(seed + static_cast<std::uint64_t>(i) * 0x9E3779B97F4A7C15ull,
                                      width, height);
    save_pgm(img, fs::path(out_dir) / (std::string(name) + ".pgm"));
    if (variants) {
      SynthTransform t{1, 0.75, 1.0};
      const GrayImage query = apply_transform(img, t, eng);
      char qname[32];
      std::snprintf(qname, sizeof(qname), "query%03d", i);
      save_pgm(query, fs::path(out_dir) / (std::string(qname) + ".pgm"));
      gt.push_back({qname, name});
    }
  }
  if (variants) export_csv(gt, fs::path(out_dir) / "ground_truth.csv");
  std::cout << count << " images written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compact visual descriptor encoder and retrieval harness"};
  app.require_subcommand(1);

  int workers = 0;
  int tile_size = 32;
  app.add_option("--workers", workers, "worker threads (0 = auto, env CDVZ_WORKERS)");
  app.add_option("--tile-size", tile_size, "tile size for data-parallel stages");

  // extract
  auto* extract = app.add_subcommand("extract", "encode images into containers");
  std::vector<std::string> extract_images;
  std::string model_path, mode_name = "4K", out_dir = ".", timings_path;
  int max_side = 640;
  extract->add_option("images", extract_images, "input images (.pgm/.ppm)")->required();
  extract->add_option("--model", model_path, "model bundle file")->required();
  extract->add_option("--mode", mode_name, "budget mode: 512B 1K 2K 4K 8K 16K");
  extract->add_option("--out", out_dir, "output directory");
  extract->add_option("--max-side", max_side, "resolution cap before encoding");
  extract->add_option("--timings", timings_path, "write per-stage timing CSV here");

  // train
  auto* train = app.add_subcommand("train", "train a model bundle from a corpus directory");
  std::string corpus_dir, bundle_out = "model.cdvzm";
  TrainOptions train_opts;
  train->add_option("corpus", corpus_dir, "directory of training images")->required();
  train->add_option("--out", bundle_out, "output bundle path");
  train->add_option("--seed", train_opts.seed, "training seed");
  train->add_option("--gmm-n", train_opts.gmm_components, "GMM component count");
  train->add_option("--iters", train_opts.em_iterations, "EM iterations");
  train->add_option("--select-n", train_opts.select_n, "feature selection budget");
  train->add_option("--max-side", train_opts.max_side, "resolution cap");

  // train-relevance
  auto* trel = app.add_subcommand("train-relevance", "train only the relevance tables");
  std::string trel_corpus, trel_out = "relevance.txt";
  trel->add_option("corpus", trel_corpus, "directory of training images")->required();
  trel->add_option("--out", trel_out, "output table file");
  trel->add_option("--seed", train_opts.seed, "training seed");

  // match
  auto* match = app.add_subcommand("match", "compare two containers");
  std::string match_a, match_b;
  match->add_option("a", match_a, "first container")->required();
  match->add_option("b", match_b, "second container")->required();

  // retrieve
  auto* retrieve_cmd = app.add_subcommand("retrieve", "rank an index against query containers");
  std::vector<std::string> query_paths;
  std::string index_dir, gt_path, csv_out;
  retrieve_cmd->add_option("queries", query_paths, "query containers")->required();
  retrieve_cmd->add_option("--index", index_dir, "directory of index containers")->required();
  retrieve_cmd->add_option("--ground-truth", gt_path, "query_id,relevant_id CSV");
  retrieve_cmd->add_option("--csv", csv_out, "write the ranking CSV here");

  // bench
  auto* bench = app.add_subcommand("bench", "timing report over an image directory");
  std::string bench_dir, bench_model, bench_mode = "4K", bench_csv;
  bench->add_option("images", bench_dir, "directory of images")->required();
  bench->add_option("--model", bench_model, "model bundle file")->required();
  bench->add_option("--mode", bench_mode, "budget mode");
  bench->add_option("--csv", bench_csv, "write the timing CSV here");

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "write a synthetic image corpus");
  std::string gen_out = "corpus";
  int gen_count = 20, gen_w = 256, gen_h = 256;
  std::uint64_t gen_seed = 1;
  bool gen_variants = false;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--count", gen_count, "number of images");
  gen->add_option("--width", gen_w, "image width");
  gen->add_option("--height", gen_h, "image height");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_flag("--variants", gen_variants, "also write transformed queries and ground truth");

  CLI11_PARSE(app, argc, argv);

  Engine eng;
  eng.workers = workers;
  eng.tile_size = tile_size;

  try {
    if (*extract)
      return run_extract(extract_images, model_path, mode_name, out_dir, max_side, eng,
                         timings_path);
    if (*train) return run_train(corpus_dir, bundle_out, train_opts, eng);
    if (*trel) return run_train_relevance(trel_corpus, trel_out, train_opts, eng);
    if (*match) return run_match(match_a, match_b);
    if (*retrieve_cmd) return run_retrieve(query_paths, index_dir, gt_path, csv_out, eng);
    if (*bench) return run_bench(bench_dir, bench_model, bench_mode, bench_csv, eng);
    if (*gen) return run_gen_corpus(gen_out, gen_count, gen_w, gen_h, gen_seed, gen_variants, eng);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
