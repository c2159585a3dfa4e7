#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "cdvz/descriptor.hpp"
#include "cdvz/transform_coding.hpp"

namespace cdvz {

struct PCAModel {
  Eigen::Matrix<double, 128, 1> mean = Eigen::Matrix<double, 128, 1>::Zero();
  Eigen::Matrix<double, 32, 128> basis = Eigen::Matrix<double, 32, 128>::Zero();
  void validate() const;  // rows orthonormal within 1e-6
};

struct GMMModel {
  Eigen::VectorXd weights;  // N, positive, sums to 1
  Eigen::MatrixXd means;    // N x 32
  Eigen::MatrixXd stds;     // N x 32, elementwise >= sigma floor
  int components() const { return static_cast<int>(weights.size()); }
  void validate() const;
};

inline constexpr double kGmmSigmaFloor = 1e-3;

// Binarized Fisher-vector signature: a component selection mask plus one
// 32-bit sign plane per selected component (variance planes at high budgets).
struct SCFVDescriptor {
  int n_components = 0;
  bool has_variance = false;
  std::vector<std::uint8_t> mask;          // ceil(N/8) bytes, LSB-first bit per component
  std::vector<std::uint32_t> mean_planes;  // selected components in ascending index order
  std::vector<std::uint32_t> var_planes;   // parallel to mean_planes when has_variance
  std::vector<double> norms;               // delta of each selected component (not serialized)

  bool selected(int component) const;
  int popcount() const;
};

// Projects each raw descriptor onto the PCA basis: X[t] = basis * (raw[t] - mean).
Eigen::MatrixXd pca_reduce(const std::vector<RawDescriptor>& raws, const PCAModel& pca);
Eigen::MatrixXd pca_reduce(const Eigen::MatrixXd& raw_rows, const PCAModel& pca);

// Soft assignments gamma (n x N), computed in log space; rows sum to 1.
Eigen::MatrixXd posteriors_naive(const Eigen::MatrixXd& x, const GMMModel& gmm);

// Loop-form Fisher gradients with 1/(K sqrt(w_i)) scaling, K = descriptor count.
Eigen::MatrixXd fv_mean_naive(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                              const GMMModel& gmm);
Eigen::MatrixXd fv_var_naive(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                             const GMMModel& gmm);

// Matrix reformulations of the same quantities; numerically equivalent to
// the loop forms within 1e-6 relative.
Eigen::MatrixXd posteriors_matrix(const Eigen::MatrixXd& x, const GMMModel& gmm);
Eigen::MatrixXd fv_mean_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                               const GMMModel& gmm);
Eigen::MatrixXd fv_var_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                              const GMMModel& gmm);

// Spread of one component's mean-gradient values; the selection statistic.
double scfv_delta(const Eigen::VectorXd& component_gradients);

// Ranks components by delta (descending, ties by index) and keeps the
// budget's share as sign-bit planes.
SCFVDescriptor scfv_encode(const Eigen::MatrixXd& gm, const Eigen::MatrixXd& gv,
                           const GMMModel& gmm, const ModeSpec& mode);

// Normalized sign-plane correlation over components selected in both masks;
// -1 when the masks share nothing.
double scfv_similarity(const SCFVDescriptor& a, const SCFVDescriptor& b);

std::vector<std::uint8_t> serialize_scfv(const SCFVDescriptor& desc);
SCFVDescriptor parse_scfv(const std::vector<std::uint8_t>& bytes, int n_components,
                          bool has_variance);
std::size_t scfv_serialized_bytes(int n_components, int selected, bool has_variance);

PCAModel train_pca(const Eigen::MatrixXd& corpus);  // corpus rows are 128-D

// Diagonal GMM via EM with k-means++ seeding; deterministic for a fixed
// seed. Appends the per-iteration log-likelihood when `loglik` is given.
GMMModel train_gmm(const Eigen::MatrixXd& corpus32, int n_components, int iterations,
                   std::uint64_t seed, std::vector<double>* loglik = nullptr);

}  // namespace cdvz
