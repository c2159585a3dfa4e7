#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "cdvz/image.hpp"
#include "cdvz/parallel.hpp"

namespace cdvz {

// Inverse Vandermonde fit weights: alpha = beta * L reproduces the K
// per-scale responses exactly at the scale nodes. Throws on duplicate scales.
Eigen::Matrix4d compute_beta(const std::vector<double>& sigmas);

struct ScaleSpaceConfig {
  int num_octaves = 4;                 // stops early once the base drops below 16 px
  std::vector<double> sigmas;          // strictly increasing, K = 4
  double response_threshold = 0.02;    // |p| gate, image range [0, 1]
  double edge_r = 10.0;                // rho limit = (r+1)^2 / r
  Eigen::Matrix4d beta;                // filled by finalize()

  double edge_rho_limit() const { return (edge_r + 1.0) * (edge_r + 1.0) / edge_r; }
  void finalize();                     // validates fields and computes beta

  static ScaleSpaceConfig defaults();  // sigma_k = 1.4 * 2^(k/4), k = 0..3
};

// Key/value config file ("key = value" lines, '#' comments).
void save_config(const ScaleSpaceConfig& cfg, const std::filesystem::path& path);
ScaleSpaceConfig load_config(const std::filesystem::path& path);

struct Octave {
  int index = 0;
  GrayImage base;                   // G_{o,0} source raster
  std::vector<ImageArray> gauss;    // K Gaussian-filtered images
  std::vector<ImageArray> log;      // K sigma^2-normalized Laplacian images
};

Octave build_octave(const GrayImage& base, const ScaleSpaceConfig& cfg, int octave_index = 0,
                    const Engine& eng = {});

// Scale extremum candidate at an integer pixel of one octave.
struct Candidate {
  int x = 0, y = 0;     // octave-local integer coordinates
  double sigma = 0.0;   // root of dp/dsigma inside [sigma_0, sigma_{K-1}]
  double p = 0.0;       // polynomial response at the root
};

// Per-pixel cubic scale fit; keeps roots whose |p| clears the threshold and
// beats the eight spatial neighbors' polynomials at the same sigma. Output
// is sorted by (y, x, sigma) so it is independent of tiling.
std::vector<Candidate> detect_extrema(const Octave& oct, const ScaleSpaceConfig& cfg,
                                      const Engine& eng = {});

struct InterestPoint {
  double x = 0.0, y = 0.0;  // sub-pixel coordinates, original-image units
  double sigma = 0.0;       // detection scale, original-image units
  int octave = 0;
  double p = 0.0;     // scale-normalized response
  double rho = 0.0;   // Hessian trace^2 / det
  double p_ss = 0.0;  // d^2 p / d sigma^2 at the extremum
  double d = 0.0;     // distance to image center over half-diagonal (selector fills)
};

// Sub-pixel 2D quadratic refinement. Candidates with an offset beyond
// 0.6 px on either axis or an edge-like Hessian are dropped. Survivor
// coordinates are reported in original-image units.
std::vector<InterestPoint> refine_candidates(const std::vector<Candidate>& candidates,
                                             const Octave& oct, const ScaleSpaceConfig& cfg,
                                             const Engine& eng = {});

// Cross-octave duplicate removal. A point is removed when the other list
// holds a neighbor (xy distance < 2 px, sigma ratio within [1/1.3, 1.3])
// with larger |p|; on exact |p| ties the `current` member loses. Survivors
// of `previous` are returned first, then survivors of `current`.
std::vector<InterestPoint> dedup_across_octaves(const std::vector<InterestPoint>& current,
                                                const std::vector<InterestPoint>& previous);

struct Pyramid {
  std::vector<Octave> octaves;
};

// Full detector: octave loop of build / detect / refine / cross-octave dedup.
// The pyramid is retained for later description.
std::vector<InterestPoint> detect_keypoints(const GrayImage& img, const ScaleSpaceConfig& cfg,
                                            Pyramid* pyramid = nullptr, const Engine& eng = {});

}  // namespace cdvz
