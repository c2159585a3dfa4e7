#include <doctest.h>

#include <random>

#include "cdvz/common.hpp"
#include "cdvz/pipeline.hpp"

using namespace cdvz;

namespace {

// One shared bundle and corpus for the whole suite; training is the
// expensive part. 20 images is the minimum the trainer accepts.
struct Fixture {
  std::vector<GrayImage> corpus;
  ModelBundle bundle;

  Fixture() {
    corpus = synth_corpus(401, 20, 224, 168);
    TrainOptions opts;
    opts.seed = 11;
    opts.gmm_components = 8;
    opts.em_iterations = 15;
    bundle = train_model(corpus, opts);
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("training below 20 images is rejected") {
  const auto small = synth_corpus(1, 5, 64, 64);
  CHECK_THROWS_AS(train_model(small, {}), DataError);
}

TEST_CASE("training is reproducible for a fixed seed") {
  // Byte-identical bundles from two runs over the same corpus.
  TrainOptions opts;
  opts.seed = 11;
  opts.gmm_components = 8;
  opts.em_iterations = 15;
  const ModelBundle again = train_model(fixture().corpus, opts);
  CHECK(serialize_model(again) == serialize_model(fixture().bundle));
}

TEST_CASE("encoded payloads respect every mode budget") {
  const GrayImage img = synth_image(77, 320, 240);
  for (const auto& mode : default_modes()) {
    const EncodedImage enc = encode_image(img, fixture().bundle, mode);
    const auto global_bytes = serialize_scfv(enc.global_desc);
    const auto local_bytes = pack_local(enc.codes, mode);
    CHECK(global_bytes.size() + local_bytes.size() <= mode.budget_bytes);
    // The container itself enforces the same bound.
    const auto bytes = serialize_container(enc);
    CHECK(bytes.size() <= mode.budget_bytes + kContainerHeaderBytes + kContainerTrailerBytes);
  }
}

TEST_CASE("encoding twice gives byte-identical containers") {
  const GrayImage img = synth_image(78, 320, 240);
  const ModeSpec& mode = mode_by_name("4K");
  const auto a = serialize_container(encode_image(img, fixture().bundle, mode));
  const auto b = serialize_container(encode_image(img, fixture().bundle, mode));
  CHECK(a == b);
}

TEST_CASE("containers are byte-identical across worker counts and tile sizes") {
  const GrayImage img = synth_image(79, 256, 192);
  const ModeSpec& mode = mode_by_name("2K");
  Engine base;
  base.workers = 1;
  base.tile_size = 32;
  const auto ref = serialize_container(encode_image(img, fixture().bundle, mode, base));
  for (int workers : {2, 8}) {
    Engine eng;
    eng.workers = workers;
    eng.tile_size = 32;
    CHECK(serialize_container(encode_image(img, fixture().bundle, mode, eng)) == ref);
  }
  for (int tile_size : {16, 64, 128}) {
    Engine eng;
    eng.workers = 8;
    eng.tile_size = tile_size;
    CHECK(serialize_container(encode_image(img, fixture().bundle, mode, eng)) == ref);
  }
}

TEST_CASE("stage timings cover the five pipeline stages") {
  const GrayImage img = synth_image(80, 256, 192);
  StageTimings timings;
  encode_image(img, fixture().bundle, mode_by_name("4K"), {}, &timings);
  const auto entries = timings.entries();
  REQUIRE(entries.size() == 5);
  CHECK(entries[0].stage == "detection");
  CHECK(entries[1].stage == "selection");
  CHECK(entries[2].stage == "description");
  CHECK(entries[3].stage == "compression");
  CHECK(entries[4].stage == "aggregation");
  double pct = 0.0;
  for (const auto& e : entries) pct += 100.0 * e.total_ms / timings.total_ms();
  CHECK(pct == doctest::Approx(100.0).epsilon(1e-3));
}

TEST_CASE("an image matches itself perfectly") {
  const GrayImage img = synth_image(81, 320, 240);
  const EncodedImage enc = encode_image(img, fixture().bundle, mode_by_name("4K"));
  const MatchResult r = match_pair(enc, enc);
  CHECK(r.global_similarity == 1.0);
  CHECK(r.local_match_count == static_cast<int>(enc.codes.size()));
  CHECK(enc.codes.size() > 20);
}

TEST_CASE("disjoint noise images share almost no local matches") {
  const GrayImage a = synth_image(82, 320, 240);
  const GrayImage b = synth_image(9999, 320, 240);
  const ModeSpec& mode = mode_by_name("4K");
  const EncodedImage ea = encode_image(a, fixture().bundle, mode);
  const EncodedImage eb = encode_image(b, fixture().bundle, mode);
  const MatchResult r = match_pair(ea, eb);
  CHECK(r.local_match_count <= static_cast<int>(0.05 * static_cast<double>(ea.codes.size())));
}

TEST_CASE("match results are symmetric in the global score") {
  const GrayImage a = synth_image(83, 320, 240);
  const GrayImage b = synth_image(84, 320, 240);
  const ModeSpec& mode = mode_by_name("1K");
  const EncodedImage ea = encode_image(a, fixture().bundle, mode);
  const EncodedImage eb = encode_image(b, fixture().bundle, mode);
  CHECK(match_pair(ea, eb).global_similarity == match_pair(eb, ea).global_similarity);
}

TEST_CASE("model and mode mismatches are rejected") {
  const GrayImage img = synth_image(85, 320, 240);
  EncodedImage a = encode_image(img, fixture().bundle, mode_by_name("1K"));
  EncodedImage b = encode_image(img, fixture().bundle, mode_by_name("2K"));
  CHECK_THROWS_AS(match_pair(a, b), DataError);
  EncodedImage c = a;
  c.model_crc ^= 1;
  CHECK_THROWS_AS(match_pair(a, c), DataError);
}

TEST_CASE("retrieval basics") {
  const ModeSpec& mode = mode_by_name("2K");
  std::vector<EncodedImage> encs;
  std::vector<std::string> ids;
  for (int i = 0; i < 6; ++i) {
    encs.push_back(encode_image(synth_image(900 + static_cast<std::uint64_t>(i), 256, 192),
                                fixture().bundle, mode));
    ids.push_back("img" + std::to_string(i));
  }
  std::vector<std::pair<std::string, const EncodedImage*>> index;
  for (std::size_t i = 0; i < encs.size(); ++i) index.emplace_back(ids[i], &encs[i]);

  SUBCASE("an empty index is rejected") {
    CHECK_THROWS_AS(retrieve(encs[0], "q", {}), DataError);
  }

  SUBCASE("an indexed image retrieves itself first") {
    for (std::size_t i = 0; i < encs.size(); ++i) {
      const RankedList list = retrieve(encs[i], "q", index);
      REQUIRE(!list.items.empty());
      CHECK(list.items.front().id == ids[i]);
    }
  }

  SUBCASE("an index of one returns that item") {
    const RankedList list = retrieve(encs[0], "q", {{"only", &encs[1]}});
    REQUIRE(list.items.size() == 1);
    CHECK(list.items.front().id == "only");
  }

  SUBCASE("scores are non-increasing") {
    const RankedList list = retrieve(encs[2], "q", index);
    for (std::size_t i = 1; i < list.items.size(); ++i)
      CHECK(list.items[i].score <= list.items[i - 1].score);
  }

  SUBCASE("re-ranking reorders the head set without changing membership") {
    MatchOptions opts;
    opts.rerank_depth = 3;
    const RankedList with_rerank = retrieve(encs[2], "q", index, opts);
    MatchOptions no_rerank;
    no_rerank.rerank_depth = 0;
    const RankedList global_only = retrieve(encs[2], "q", index, no_rerank);

    std::set<std::string> head_a, head_b;
    for (int i = 0; i < 3; ++i) {
      head_a.insert(with_rerank.items[static_cast<std::size_t>(i)].id);
      head_b.insert(global_only.items[static_cast<std::size_t>(i)].id);
    }
    CHECK(head_a == head_b);
    // The tail keeps the pure global order.
    for (std::size_t i = 3; i < with_rerank.items.size(); ++i)
      CHECK(with_rerank.items[i].id == global_only.items[i].id);
  }
}

TEST_CASE("synthetic transforms map points consistently") {
  // A bright dot tracks map_point through rotation and scaling.
  GrayImage img = make_image(64, 48, 0.2);
  img.pix(20, 30) = 1.0;
  SynthTransform t;
  t.quarter_turns = 1;
  t.scale = 0.75;
  const GrayImage moved = apply_transform(img, t);
  double x = 30.0, y = 20.0, sigma = 2.0;
  map_point(t, 64, 48, x, y, sigma);
  // The brightest output pixel sits within a pixel of the mapped point.
  int bx = 0, by = 0;
  double best = -1.0;
  for (int yy = 0; yy < moved.height(); ++yy)
    for (int xx = 0; xx < moved.width(); ++xx)
      if (moved.pix(yy, xx) > best) {
        best = moved.pix(yy, xx);
        bx = xx;
        by = yy;
      }
  CHECK(std::abs(bx - x) <= 1.0);
  CHECK(std::abs(by - y) <= 1.0);
  CHECK(sigma == doctest::Approx(1.5).epsilon(0.01));
}

}  // TEST_SUITE
