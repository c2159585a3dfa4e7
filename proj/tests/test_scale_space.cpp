#include <doctest.h>

#include <cmath>
#include <random>

#include "cdvz/common.hpp"
#include "cdvz/scale_space.hpp"
#include "oracles.hpp"

using namespace cdvz;

namespace {

GrayImage random_texture(std::uint64_t seed, int w, int h, double blur = 1.0) {
  std::mt19937_64 rng(seed);
  GrayImage img = make_image(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.pix(y, x) = (rng() % 4096) / 4095.0;
  if (blur > 0.0) img.pix = gaussian_blur(img.pix, blur);
  return img;
}

GrayImage gaussian_blob(int w, int h, double cx, double cy, double s, double amp = 0.8,
                        double background = 0.1) {
  GrayImage img = make_image(w, h, background);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.pix(y, x) += amp * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * s * s));
  img.pix = img.pix.min(1.0).max(0.0);
  return img;
}

// Interior points only, away from every border effect.
bool interior(const InterestPoint& pt, int w, int h, double margin = 16.0) {
  return pt.x >= margin && pt.x <= w - 1 - margin && pt.y >= margin && pt.y <= h - 1 - margin;
}

}  // namespace

TEST_SUITE("scale_space") {

TEST_CASE("compute_beta matches a hand-rolled 4x4 inversion") {
  const std::vector<double> sigmas = {1.0, 2.0, 3.0, 4.0};
  const Eigen::Matrix4d beta = compute_beta(sigmas);

  Eigen::MatrixXd v(4, 4);
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i) v(k, i) = std::pow(sigmas[static_cast<std::size_t>(k)], i);
  const Eigen::MatrixXd inv = oracles::invert_gauss_jordan(v);
  CHECK((beta - inv).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("beta interpolates the scale nodes exactly") {
  const ScaleSpaceConfig cfg = ScaleSpaceConfig::defaults();
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Vector4d l;
    for (int k = 0; k < 4; ++k) l[k] = (static_cast<double>(rng() % 2001) - 1000.0) / 500.0;
    const Eigen::Vector4d alpha = cfg.beta * l;
    for (int k = 0; k < 4; ++k) {
      const double s = cfg.sigmas[static_cast<std::size_t>(k)];
      const double p = alpha[0] + s * (alpha[1] + s * (alpha[2] + s * alpha[3]));
      CHECK(std::abs(p - l[k]) < 1e-9 * std::max(1.0, l.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("duplicate scales are rejected") {
  CHECK_THROWS_AS(compute_beta({1.0, 1.0, 2.0, 3.0}), DataError);
}

TEST_CASE("octave of a constant image has zero response everywhere") {
  const ScaleSpaceConfig cfg = ScaleSpaceConfig::defaults();
  const Octave oct = build_octave(make_image(48, 48, 0.42), cfg);
  for (const auto& log_img : oct.log) CHECK(log_img.abs().maxCoeff() == 0.0);
  CHECK(detect_extrema(oct, cfg).empty());
}

TEST_CASE("octave gaussian levels match the dense 2d oracle") {
  const ScaleSpaceConfig cfg = ScaleSpaceConfig::defaults();
  const GrayImage img = random_texture(23, 32, 32, 0.0);
  const Octave oct = build_octave(img, cfg);
  for (std::size_t k = 0; k < cfg.sigmas.size(); ++k) {
    const auto taps = gaussian_kernel(cfg.sigmas[k]);
    const int n = static_cast<int>(taps.size());
    Eigen::MatrixXd kernel(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        kernel(j, i) = taps[static_cast<std::size_t>(j)] * taps[static_cast<std::size_t>(i)];
    const ImageArray dense = oracles::conv2d_dense(img.pix, kernel);
    CHECK((oct.gauss[k] - dense).abs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("a centered blob yields one candidate at its characteristic scale") {
  const ScaleSpaceConfig cfg = ScaleSpaceConfig::defaults();
  const double blob_scale = 1.8;
  const GrayImage img = gaussian_blob(64, 64, 32.0, 32.0, blob_scale);
  const Octave oct = build_octave(img, cfg);
  const auto candidates = detect_extrema(oct, cfg);

  int near_center = 0;
  Candidate center_cand{};
  for (const auto& c : candidates) {
    if (std::hypot(c.x - 32.0, c.y - 32.0) <= 1.0) {
      ++near_center;
      center_cand = c;
    }
  }
  REQUIRE(near_center == 1);

  // Independent scale estimate: dense 26-neighbor scan over a finely
  // sampled response stack.
  std::vector<double> fine_sigmas;
  for (int i = 0; i <= 32; ++i) fine_sigmas.push_back(1.0 * std::pow(3.2, i / 32.0));
  const auto stack = oracles::log_stack(img, fine_sigmas);
  const auto extrema = oracles::scan_3d_extrema(stack, cfg.response_threshold, 10);
  double oracle_sigma = -1.0;
  for (const auto& e : extrema)
    if (std::hypot(e.x - 32.0, e.y - 32.0) <= 1.0)
      oracle_sigma = fine_sigmas[static_cast<std::size_t>(e.k)];
  REQUIRE(oracle_sigma > 0.0);
  CHECK(std::abs(center_cand.sigma - oracle_sigma) / oracle_sigma < 0.25);
  CHECK(std::abs(oracle_sigma - blob_scale) / blob_scale < 0.25);
}

TEST_CASE("polynomial candidates contain the discrete 3d extrema") {
  const ScaleSpaceConfig cfg = ScaleSpaceConfig::defaults();
  const int margin = static_cast<int>(std::ceil(3.0 * cfg.sigmas.back())) + 2;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const GrayImage img = random_texture(seed, 64, 64, 1.2);
    const Octave oct = build_octave(img, cfg);
    const auto candidates = detect_extrema(oct, cfg);
    const auto discrete = oracles::scan_3d_extrema(oct.log, cfg.response_threshold, margin);

    for (const auto& d : discrete) {
      // Interior scales k = 1, 2 map to sigma levels; tolerance half a level.
      const double level_of_d = d.k;
      bool covered = false;
      for (const auto& c : candidates) {
        if (c.x != d.x || c.y != d.y) continue;
        const double level_of_c = 4.0 * std::log2(c.sigma / cfg.sigmas.front());
        if (std::abs(level_of_c - level_of_d) <= 0.5) covered = true;
      }
      CHECK_MESSAGE(covered, "seed ", seed, " discrete extremum at (", d.x, ",", d.y, ",k=", d.k,
                    ") lacks a polynomial candidate");
    }
  }
}

TEST_CASE("refinement is exact against the closed-form quadratic vertex") {
  const ScaleSpaceConfig cfg = ScaleSpaceConfig::defaults();
  const GrayImage img = gaussian_blob(64, 64, 31.6, 32.3, 1.9);
  const Octave oct = build_octave(img, cfg);
  const auto candidates = detect_extrema(oct, cfg);
  REQUIRE(!candidates.empty());
  const auto refined = refine_candidates(candidates, oct, cfg);
  REQUIRE(!refined.empty());

  // Re-derive the vertex from independently computed response samples.
  const Candidate c = candidates.front();
  auto p_at = [&](int x, int y) {
    Eigen::Vector4d l;
    for (int k = 0; k < 4; ++k) l[k] = oct.log[static_cast<std::size_t>(k)](y, x);
    const Eigen::Vector4d a = oracles::invert_gauss_jordan([&] {
                                Eigen::MatrixXd v(4, 4);
                                for (int kk = 0; kk < 4; ++kk)
                                  for (int i = 0; i < 4; ++i)
                                    v(kk, i) = std::pow(cfg.sigmas[static_cast<std::size_t>(kk)], i);
                                return v;
                              }()) *
                              l;
    return a[0] + c.sigma * (a[1] + c.sigma * (a[2] + c.sigma * a[3]));
  };
  const double gx = 0.5 * (p_at(c.x + 1, c.y) - p_at(c.x - 1, c.y));
  const double gy = 0.5 * (p_at(c.x, c.y + 1) - p_at(c.x, c.y - 1));
  const double hxx = p_at(c.x + 1, c.y) + p_at(c.x - 1, c.y) - 2 * p_at(c.x, c.y);
  const double hyy = p_at(c.x, c.y + 1) + p_at(c.x, c.y - 1) - 2 * p_at(c.x, c.y);
  const double hxy = 0.25 * (p_at(c.x + 1, c.y + 1) - p_at(c.x - 1, c.y + 1) -
                             p_at(c.x + 1, c.y - 1) + p_at(c.x - 1, c.y - 1));
  Eigen::Matrix2d hess;
  hess << hxx, hxy, hxy, hyy;
  const Eigen::Vector2d vertex =
      Eigen::Vector2d(c.x, c.y) - hess.inverse() * Eigen::Vector2d(gx, gy);

  double best = 1e9;
  const InterestPoint* nearest = nullptr;
  for (const auto& pt : refined) {
    const double dist = std::hypot(pt.x - vertex[0], pt.y - vertex[1]);
    if (dist < best) {
      best = dist;
      nearest = &pt;
    }
  }
  REQUIRE(nearest != nullptr);
  CHECK(best < 1e-9);
  // A symmetric blob refines to (almost) zero offset.
  CHECK(std::abs(nearest->x - c.x) <= 0.6);
  CHECK(std::abs(nearest->y - c.y) <= 0.6);
}

TEST_CASE("a straight step edge is discarded by the edge ratio") {
  const ScaleSpaceConfig cfg = ScaleSpaceConfig::defaults();
  GrayImage img = make_image(64, 64, 0.1);
  for (int y = 0; y < 64; ++y)
    for (int x = 32; x < 64; ++x) img.pix(y, x) = 0.9;
  img.pix = gaussian_blur(img.pix, 1.0);
  const Octave oct = build_octave(img, cfg);

  // Force candidates onto the edge line by scanning it directly: every
  // refined survivor must sit away from the vertical edge.
  const auto refined = refine_candidates(detect_extrema(oct, cfg), oct, cfg);
  for (const auto& pt : refined) {
    if (!interior(pt, 64, 64, 10.0)) continue;
    CHECK(std::abs(pt.x - 31.5) > 2.0);
  }

  // And the direct Hessian ratio on the edge line confirms why: the ratio
  // explodes along a 1D ridge.
  Eigen::Vector4d l;
  const Eigen::Matrix4d beta = cfg.beta;
  auto p_at = [&](int x, int y, double s) {
    Eigen::Vector4d lv;
    for (int k = 0; k < 4; ++k) lv[k] = oct.log[static_cast<std::size_t>(k)](y, x);
    const Eigen::Vector4d a = beta * lv;
    return a[0] + s * (a[1] + s * (a[2] + s * a[3]));
  };
  (void)l;
  const int ex = 31, ey = 32;
  const double s = cfg.sigmas[1];
  const double hxx = p_at(ex + 1, ey, s) + p_at(ex - 1, ey, s) - 2 * p_at(ex, ey, s);
  const double hyy = p_at(ex, ey + 1, s) + p_at(ex, ey - 1, s) - 2 * p_at(ex, ey, s);
  const double hxy = 0.25 * (p_at(ex + 1, ey + 1, s) - p_at(ex - 1, ey + 1, s) -
                             p_at(ex + 1, ey - 1, s) + p_at(ex - 1, ey - 1, s));
  const double det = hxx * hyy - hxy * hxy;
  const double rho = (hxx + hyy) * (hxx + hyy) / det;
  CHECK((det <= 0.0 || rho > cfg.edge_rho_limit()));
}

TEST_CASE("cross-octave dedup") {
  auto mk = [](double x, double y, double sigma, double p) {
    InterestPoint pt;
    pt.x = x;
    pt.y = y;
    pt.sigma = sigma;
    pt.p = p;
    return pt;
  };

  SUBCASE("disjoint sets concatenate") {
    const std::vector<InterestPoint> cur = {mk(10, 10, 2.0, 1.0)};
    const std::vector<InterestPoint> prev = {mk(40, 40, 2.0, 2.0)};
    const auto merged = dedup_across_octaves(cur, prev);
    CHECK(merged.size() == 2);
  }

  SUBCASE("the higher response of an identical pair survives") {
    const std::vector<InterestPoint> cur = {mk(10, 10, 2.0, 5.0)};
    const std::vector<InterestPoint> prev = {mk(10, 10, 2.0, 3.0)};
    const auto merged = dedup_across_octaves(cur, prev);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].p == 5.0);

    const auto merged2 = dedup_across_octaves(prev, cur);
    REQUIRE(merged2.size() == 1);
    CHECK(merged2[0].p == 5.0);
  }

  SUBCASE("sigma ratio outside [1/1.3, 1.3] never pairs") {
    const std::vector<InterestPoint> cur = {mk(10, 10, 2.8, 1.0)};
    const std::vector<InterestPoint> prev = {mk(10, 10, 2.0, 9.0)};
    CHECK(dedup_across_octaves(cur, prev).size() == 2);
  }

  SUBCASE("survivor set is order independent for distinct responses") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<InterestPoint> cur, prev;
      for (int i = 0; i < 8; ++i)
        cur.push_back(mk(static_cast<double>(rng() % 20), static_cast<double>(rng() % 20),
                         1.8 + 0.05 * static_cast<double>(rng() % 10),
                         0.1 + 0.001 * static_cast<double>(rng() % 1000)));
      for (int i = 0; i < 8; ++i)
        prev.push_back(mk(static_cast<double>(rng() % 20), static_cast<double>(rng() % 20),
                          1.8 + 0.05 * static_cast<double>(rng() % 10),
                          0.1 + 0.001 * static_cast<double>(rng() % 1000) + 0.0005));

      // Oracle: exhaustive pairwise elimination over the original sets.
      auto in_range = [](const InterestPoint& a, const InterestPoint& b) {
        if (std::hypot(a.x - b.x, a.y - b.y) >= 2.0) return false;
        const double r = a.sigma / b.sigma;
        return r >= 1.0 / 1.3 && r <= 1.3;
      };
      std::vector<InterestPoint> expect;
      for (const auto& c : cur) {
        bool keep = true;
        for (const auto& q : prev)
          if (in_range(c, q) && std::abs(q.p) >= std::abs(c.p)) keep = false;
        if (keep) expect.push_back(c);
      }
      for (const auto& q : prev) {
        bool keep = true;
        for (const auto& c : cur)
          if (in_range(c, q) && std::abs(c.p) > std::abs(q.p)) keep = false;
        if (keep) expect.push_back(q);
      }

      const auto merged = dedup_across_octaves(cur, prev);
      REQUIRE(merged.size() == expect.size());

      // Shuffled inputs give the same survivor multiset.
      std::shuffle(cur.begin(), cur.end(), rng);
      std::shuffle(prev.begin(), prev.end(), rng);
      const auto merged_shuffled = dedup_across_octaves(cur, prev);
      auto key = [](const InterestPoint& p) { return std::make_tuple(p.x, p.y, p.sigma, p.p); };
      std::vector<std::tuple<double, double, double, double>> a, b;
      for (const auto& p : merged) a.push_back(key(p));
      for (const auto& p : merged_shuffled) b.push_back(key(p));
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      CHECK(a == b);
    }
  }
}

TEST_CASE("detection is translation covariant for interior points") {
  const ScaleSpaceConfig cfg = ScaleSpaceConfig::defaults();
  const GrayImage img = random_texture(77, 96, 96, 1.6);
  const int dx = 3, dy = 2;
  GrayImage shifted = make_image(96, 96);
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x)
      shifted.pix(y, x) = img.pix((y - dy + 96) % 96, (x - dx + 96) % 96);

  const auto pts_a = detect_keypoints(img, cfg);
  const auto pts_b = detect_keypoints(shifted, cfg);

  int checked = 0;
  for (const auto& pa : pts_a) {
    if (!interior(pa, 96, 96, 20.0)) continue;
    bool found = false;
    for (const auto& pb : pts_b) {
      if (std::hypot(pb.x - (pa.x + dx), pb.y - (pa.y + dy)) <= 0.1 &&
          std::abs(pb.sigma - pa.sigma) < 0.05 * pa.sigma)
        found = true;
    }
    CHECK_MESSAGE(found, "point (", pa.x, ",", pa.y, ") did not shift covariantly");
    ++checked;
  }
  CHECK(checked > 3);
}

TEST_CASE("two runs produce bit-identical point lists") {
  const ScaleSpaceConfig cfg = ScaleSpaceConfig::defaults();
  const GrayImage img = random_texture(88, 80, 64, 1.4);
  const auto a = detect_keypoints(img, cfg);
  const auto b = detect_keypoints(img, cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].y == b[i].y);
    CHECK(a[i].sigma == b[i].sigma);
    CHECK(a[i].p == b[i].p);
  }
}

TEST_CASE("point sets are identical across tile sizes and worker counts") {
  const ScaleSpaceConfig cfg = ScaleSpaceConfig::defaults();
  const GrayImage img = random_texture(99, 100, 76, 1.4);
  Engine base;
  base.workers = 1;
  base.tile_size = 32;
  const auto ref = detect_keypoints(img, cfg, nullptr, base);
  REQUIRE(!ref.empty());

  for (int tile_size : {16, 32, 64, 128}) {
    for (int workers : {1, 2, 8}) {
      Engine eng;
      eng.workers = workers;
      eng.tile_size = tile_size;
      const auto pts = detect_keypoints(img, cfg, nullptr, eng);
      REQUIRE(pts.size() == ref.size());
      for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(pts[i].x == ref[i].x);
        CHECK(pts[i].y == ref[i].y);
        CHECK(pts[i].sigma == ref[i].sigma);
        CHECK(pts[i].p == ref[i].p);
      }
    }
  }
}

TEST_CASE("config files round-trip") {
  ScaleSpaceConfig cfg = ScaleSpaceConfig::defaults();
  cfg.response_threshold = 0.017;
  cfg.num_octaves = 3;
  const auto path = std::filesystem::temp_directory_path() / "cdvz_tests" / "detector.cfg";
  std::filesystem::create_directories(path.parent_path());
  save_config(cfg, path);
  const ScaleSpaceConfig back = load_config(path);
  CHECK(back.num_octaves == 3);
  CHECK(back.response_threshold == 0.017);
  CHECK(back.sigmas == cfg.sigmas);
}

}  // TEST_SUITE
