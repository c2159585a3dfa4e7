#include "cdvz/scale_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cdvz/common.hpp"

namespace cdvz {

namespace {

constexpr int kScalesPerOctave = 4;

double poly_eval(const Eigen::Vector4d& a, double s) {
  return a[0] + s * (a[1] + s * (a[2] + s * a[3]));
}

// Real roots of the derivative 3 a3 s^2 + 2 a2 s + a1 = 0, stable form.
int derivative_roots(const Eigen::Vector4d& a, double roots[2]) {
  const double qa = 3.0 * a[3];
  const double qb = 2.0 * a[2];
  const double qc = a[1];
  if (qa == 0.0) {
    if (qb == 0.0) return 0;
    roots[0] = -qc / qb;
    return 1;
  }
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0.0) return 0;
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (qb + std::copysign(sq, qb));
  int n = 0;
  if (q != 0.0) {
    roots[n++] = q / qa;
    roots[n++] = qc / q;
  } else {
    roots[n++] = 0.0;  // qb == 0 and disc == 0: double root at the origin
  }
  if (n == 2 && roots[0] == roots[1]) n = 1;
  return n;
}

int detection_margin(const ScaleSpaceConfig& cfg) {
  return static_cast<int>(std::ceil(3.0 * cfg.sigmas.back())) + 2;
}

struct Refined {
  bool keep = false;
  InterestPoint pt;
};

}  // namespace

Eigen::Matrix4d compute_beta(const std::vector<double>& sigmas) {
  if (sigmas.size() != kScalesPerOctave) throw DataError("exactly 4 scales are required");
  for (std::size_t i = 0; i < sigmas.size(); ++i)
    for (std::size_t j = i + 1; j < sigmas.size(); ++j)
      if (sigmas[i] == sigmas[j]) throw DataError("duplicate scale makes the fit singular");

  Eigen::Matrix4d v;
  for (int k = 0; k < 4; ++k) {
    double pw = 1.0;
    for (int i = 0; i < 4; ++i) {
      v(k, i) = pw;
      pw *= sigmas[static_cast<std::size_t>(k)];
    }
  }
  Eigen::FullPivLU<Eigen::Matrix4d> lu(v);
  if (!lu.isInvertible()) throw DataError("scale node matrix is singular");
  return lu.inverse();
}

void ScaleSpaceConfig::finalize() {
  if (sigmas.size() != kScalesPerOctave) throw DataError("config requires 4 scales");
  for (std::size_t k = 1; k < sigmas.size(); ++k)
    if (!(sigmas[k] > sigmas[k - 1])) throw DataError("scales must be strictly increasing");
  if (!(sigmas.front() > 0.0)) throw DataError("scales must be positive");
  if (num_octaves < 1) throw DataError("at least one octave is required");
  if (!(edge_r > 0.0)) throw DataError("edge ratio parameter must be positive");
  beta = compute_beta(sigmas);
}

ScaleSpaceConfig ScaleSpaceConfig::defaults() {
  ScaleSpaceConfig cfg;
  cfg.sigmas.resize(kScalesPerOctave);
  for (int k = 0; k < kScalesPerOctave; ++k) cfg.sigmas[static_cast<std::size_t>(k)] = 1.4 * std::pow(2.0, k / 4.0);
  cfg.finalize();
  return cfg;
}

void save_config(const ScaleSpaceConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write config: " + path.string());
  out << "# detector configuration\n";
  out << "num_octaves = " << cfg.num_octaves << "\n";
  out << "sigmas =";
  for (double s : cfg.sigmas) out << " " << format_double(s);
  out << "\n";
  out << "response_threshold = " << format_double(cfg.response_threshold) << "\n";
  out << "edge_r = " << format_double(cfg.edge_r) << "\n";
}

ScaleSpaceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config: " + path.string());
  ScaleSpaceConfig cfg = ScaleSpaceConfig::defaults();
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::istringstream key_in(line.substr(0, eq));
    std::string key;
    key_in >> key;
    std::istringstream val_in(line.substr(eq + 1));
    if (key == "num_octaves") {
      val_in >> cfg.num_octaves;
    } else if (key == "sigmas") {
      cfg.sigmas.clear();
      std::string tok;
      while (val_in >> tok) cfg.sigmas.push_back(parse_double(tok));
    } else if (key == "response_threshold") {
      std::string tok;
      val_in >> tok;
      cfg.response_threshold = parse_double(tok);
    } else if (key == "edge_r") {
      std::string tok;
      val_in >> tok;
      cfg.edge_r = parse_double(tok);
    } else if (!key.empty()) {
      throw DataError("unknown config key: " + key);
    }
  }
  cfg.finalize();
  return cfg;
}

Octave build_octave(const GrayImage& base, const ScaleSpaceConfig& cfg, int octave_index,
                    const Engine& eng) {
  Octave oct;
  oct.index = octave_index;
  oct.base = base;
  oct.gauss.reserve(cfg.sigmas.size());
  oct.log.reserve(cfg.sigmas.size());
  for (double sigma : cfg.sigmas) {
    oct.gauss.push_back(gaussian_blur(base.pix, sigma, eng));
    oct.log.push_back(ImageArray(sigma * sigma * laplacian_3x3(oct.gauss.back(), eng)));
  }
  return oct;
}

std::vector<Candidate> detect_extrema(const Octave& oct, const ScaleSpaceConfig& cfg,
                                      const Engine& eng) {
  const int w = oct.base.width();
  const int h = oct.base.height();
  const int margin = detection_margin(cfg);
  if (w - 2 * margin <= 0 || h - 2 * margin <= 0) return {};

  const double s_lo = cfg.sigmas.front();
  const double s_hi = cfg.sigmas.back();
  const Eigen::Matrix4d& beta = cfg.beta;

  auto alpha_at = [&](int y, int x) {
    Eigen::Vector4d l;
    for (int k = 0; k < kScalesPerOctave; ++k) l[k] = oct.log[static_cast<std::size_t>(k)](y, x);
    return Eigen::Vector4d(beta * l);
  };

  const TileGrid grid = make_tile_grid(w, h, eng.tile_size, 1);
  auto parts = tile_map(grid, [&](const Tile& t) {
    std::vector<Candidate> found;
    const int x_lo = std::max(t.x0, margin);
    const int x_hi = std::min(t.x0 + t.w, w - margin);
    const int y_lo = std::max(t.y0, margin);
    const int y_hi = std::min(t.y0 + t.h, h - margin);
    for (int y = y_lo; y < y_hi; ++y) {
      for (int x = x_lo; x < x_hi; ++x) {
        const Eigen::Vector4d a = alpha_at(y, x);
        double roots[2];
        const int n_roots = derivative_roots(a, roots);
        for (int ri = 0; ri < n_roots; ++ri) {
          const double s = roots[ri];
          if (s < s_lo || s > s_hi) continue;
          const double p = poly_eval(a, s);
          if (std::abs(p) < cfg.response_threshold) continue;
          bool is_extremum = true;
          for (int dy = -1; dy <= 1 && is_extremum; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              if (dx == 0 && dy == 0) continue;
              const double pn = poly_eval(alpha_at(y + dy, x + dx), s);
              if (p > 0.0 ? (p <= pn) : (p >= pn)) {
                is_extremum = false;
                break;
              }
            }
          }
          if (is_extremum) found.push_back({x, y, s, p});
        }
      }
    }
    return found;
  }, eng);

  std::vector<Candidate> all = flatten(std::move(parts));
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    if (a.sigma != b.sigma) return a.sigma < b.sigma;
    return a.p < b.p;
  });
  return all;
}

std::vector<InterestPoint> refine_candidates(const std::vector<Candidate>& candidates,
                                             const Octave& oct, const ScaleSpaceConfig& cfg,
                                             const Engine& eng) {
  const double rho_limit = cfg.edge_rho_limit();
  const double oct_scale = std::ldexp(1.0, oct.index);
  const Eigen::Matrix4d& beta = cfg.beta;

  auto refine_one = [&](const Candidate& c) {
    Refined r;
    double p3[3][3];
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        Eigen::Vector4d l;
        for (int k = 0; k < kScalesPerOctave; ++k)
          l[k] = oct.log[static_cast<std::size_t>(k)](c.y + dy, c.x + dx);
        p3[dy + 1][dx + 1] = poly_eval(Eigen::Vector4d(beta * l), c.sigma);
      }
    }
    const double gx = 0.5 * (p3[1][2] - p3[1][0]);
    const double gy = 0.5 * (p3[2][1] - p3[0][1]);
    const double hxx = p3[1][2] + p3[1][0] - 2.0 * p3[1][1];
    const double hyy = p3[2][1] + p3[0][1] - 2.0 * p3[1][1];
    const double hxy = 0.25 * (p3[2][2] - p3[2][0] - p3[0][2] + p3[0][0]);
    const double det = hxx * hyy - hxy * hxy;
    if (det <= 0.0) return r;  // saddle or degenerate curvature: edge-like
    const double rho = (hxx + hyy) * (hxx + hyy) / det;
    if (rho > rho_limit) return r;
    const double ox = -(hyy * gx - hxy * gy) / det;
    const double oy = (hxy * gx - hxx * gy) / det;
    if (std::abs(ox) > 0.6 || std::abs(oy) > 0.6) return r;

    Eigen::Vector4d lc;
    for (int k = 0; k < kScalesPerOctave; ++k)
      lc[k] = oct.log[static_cast<std::size_t>(k)](c.y, c.x);
    const Eigen::Vector4d a = beta * lc;

    r.keep = true;
    r.pt.x = (c.x + ox) * oct_scale;
    r.pt.y = (c.y + oy) * oct_scale;
    r.pt.sigma = c.sigma * oct_scale;
    r.pt.octave = oct.index;
    r.pt.p = c.p;
    r.pt.rho = rho;
    r.pt.p_ss = 2.0 * a[2] + 6.0 * a[3] * c.sigma;
    return r;
  };

  auto refined = par_for_items(candidates, refine_one, eng);
  std::vector<InterestPoint> out;
  out.reserve(refined.size());
  for (const auto& r : refined)
    if (r.keep) out.push_back(r.pt);
  return out;
}

std::vector<InterestPoint> dedup_across_octaves(const std::vector<InterestPoint>& current,
                                                const std::vector<InterestPoint>& previous) {
  auto in_range = [](const InterestPoint& a, const InterestPoint& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    if (dx * dx + dy * dy >= 4.0) return false;
    const double ratio = a.sigma / b.sigma;
    return ratio >= 1.0 / 1.3 && ratio <= 1.3;
  };

  // Membership is decided against the original lists, so the outcome does
  // not depend on scan order.
  std::vector<char> drop_cur(current.size(), 0), drop_prev(previous.size(), 0);
  for (std::size_t i = 0; i < current.size(); ++i) {
    for (std::size_t j = 0; j < previous.size(); ++j) {
      if (!in_range(current[i], previous[j])) continue;
      if (std::abs(previous[j].p) >= std::abs(current[i].p))
        drop_cur[i] = 1;
      else
        drop_prev[j] = 1;
    }
  }

  std::vector<InterestPoint> merged;
  merged.reserve(current.size() + previous.size());
  for (std::size_t j = 0; j < previous.size(); ++j)
    if (!drop_prev[j]) merged.push_back(previous[j]);
  for (std::size_t i = 0; i < current.size(); ++i)
    if (!drop_cur[i]) merged.push_back(current[i]);
  return merged;
}

std::vector<InterestPoint> detect_keypoints(const GrayImage& img, const ScaleSpaceConfig& cfg,
                                            Pyramid* pyramid, const Engine& eng) {
  validate(img);
  if (pyramid) pyramid->octaves.clear();

  std::vector<InterestPoint> acc;
  GrayImage base = img;
  for (int o = 0; o < cfg.num_octaves; ++o) {
    if (base.width() < 16 || base.height() < 16) break;
    Octave oct = build_octave(base, cfg, o, eng);
    const auto candidates = detect_extrema(oct, cfg, eng);
    auto points = refine_candidates(candidates, oct, cfg, eng);
    acc = (o == 0) ? std::move(points) : dedup_across_octaves(points, acc);
    if (o + 1 < cfg.num_octaves) {
      const ImageArray& last = oct.gauss.back();
      if (last.cols() >= 16 && last.rows() >= 16) base.pix = downsample_half(last);
      else base.pix.resize(0, 0);  // terminates the loop
    }
    if (pyramid) pyramid->octaves.push_back(std::move(oct));
    if (base.width() < 16 || base.height() < 16) break;
  }
  return acc;
}

}  // namespace cdvz
