#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "cdvz/scale_space.hpp"

namespace cdvz {

// The five interest point characteristics scored by the selector.
struct FeatureStats {
  double sigma = 0.0;
  double p = 0.0;
  double d = 0.0;  // distance to image center over half-diagonal, in [0, 1]
  double rho = 0.0;
  double p_ss = 0.0;

  static FeatureStats from(const InterestPoint& pt) {
    return {pt.sigma, pt.p, pt.d, pt.rho, pt.p_ss};
  }
  double value(int characteristic) const;
};

inline constexpr int kNumCharacteristics = 5;
inline constexpr std::array<const char*, kNumCharacteristics> kCharacteristicNames = {
    "sigma", "p", "d", "rho", "pss"};

// Piecewise-constant conditional match probability over one characteristic.
struct LookupTable {
  std::vector<double> edges;   // B+1 strictly increasing bin edges
  std::vector<double> values;  // B probabilities in [0, 1]

  // Binary search with clamping to the first/last bin.
  double operator()(double x) const;
  void validate() const;
};

struct RelevanceModel {
  std::array<LookupTable, kNumCharacteristics> tables;
  void validate() const;
  // Uniform model scoring every point 1.0 (neutral selector).
  static RelevanceModel uniform();
};

// Product of the five per-characteristic probabilities.
double relevance(const FeatureStats& stats, const RelevanceModel& model);

// Fills the normalized center distance on every point.
void fill_center_distance(std::vector<InterestPoint>& points, int width, int height);

// Top-n by relevance; ties broken by |p| descending, then (y, x) ascending.
std::vector<InterestPoint> select_top(const std::vector<InterestPoint>& points,
                                      const RelevanceModel& model, std::size_t n);

// One labeled training observation: a feature's statistics and whether it
// matched correctly across an annotated image pair.
struct LabeledStats {
  FeatureStats stats;
  bool matched = false;
};

// Per-characteristic histogram estimate of P(match | bin) over `bins`
// uniform bins spanning the empirical range. Bins with fewer than
// `min_bin_samples` observations inherit the global match rate.
RelevanceModel train_relevance_tables(const std::vector<LabeledStats>& samples, int bins = 16,
                                      int min_bin_samples = 10);

// Geometric ground-truth labeling for synthetic pairs: a point in `a`
// counts as matched when `b` holds a point within `xy_tol` px of its mapped
// location with a sigma ratio inside [1/ratio_tol, ratio_tol].
struct MappedPoint {
  double x, y, sigma;
};
std::vector<LabeledStats> label_matches_by_geometry(
    const std::vector<InterestPoint>& a, const std::vector<InterestPoint>& b,
    const std::vector<MappedPoint>& a_mapped_into_b, double xy_tol = 2.0,
    double ratio_tol = 1.3);

// Versioned table file: one "<name> bins: ... ; values: ..." line per
// characteristic.
void save_relevance(const RelevanceModel& model, const std::filesystem::path& path);
RelevanceModel load_relevance(const std::filesystem::path& path);
void write_relevance(const RelevanceModel& model, std::ostream& out);
RelevanceModel read_relevance(std::istream& in);

}  // namespace cdvz
