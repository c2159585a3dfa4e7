#include "cdvz/scfv.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "cdvz/common.hpp"

namespace cdvz {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

// Per-row log densities log(w_i p_i(x_t)), n x N.
Eigen::MatrixXd log_weighted_densities(const Eigen::MatrixXd& x, const GMMModel& gmm) {
  const Eigen::Index n = x.rows();
  const int nc = gmm.components();
  Eigen::MatrixXd logp(n, nc);
  for (int i = 0; i < nc; ++i) {
    double log_norm = 0.0;
    for (int j = 0; j < 32; ++j) log_norm += std::log(gmm.stds(i, j));
    const double log_w = std::log(gmm.weights[i]);
    for (Eigen::Index t = 0; t < n; ++t) {
      double maha = 0.0;
      for (int j = 0; j < 32; ++j) {
        const double z = (x(t, j) - gmm.means(i, j)) / gmm.stds(i, j);
        maha += z * z;
      }
      logp(t, i) = log_w - 0.5 * maha - log_norm - 16.0 * kLog2Pi;
    }
  }
  return logp;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logp) {
  Eigen::MatrixXd gamma(logp.rows(), logp.cols());
  for (Eigen::Index t = 0; t < logp.rows(); ++t) {
    const double peak = logp.row(t).maxCoeff();
    Eigen::ArrayXd e = (logp.row(t).array() - peak).exp();
    gamma.row(t) = (e / e.sum()).matrix();
  }
  return gamma;
}

}  // namespace

void PCAModel::validate() const {
  const Eigen::Matrix<double, 32, 32> gram = basis * basis.transpose();
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j)
      if (std::abs(gram(i, j) - (i == j ? 1.0 : 0.0)) > 1e-6)
        throw DataError("PCA basis rows are not orthonormal");
}

void GMMModel::validate() const {
  const int nc = components();
  if (nc < 1) throw DataError("GMM needs at least one component");
  if (means.rows() != nc || means.cols() != 32 || stds.rows() != nc || stds.cols() != 32)
    throw DataError("GMM parameter shapes disagree");
  if ((weights.array() <= 0.0).any()) throw DataError("GMM weights must be positive");
  if (std::abs(weights.sum() - 1.0) > 1e-9) throw DataError("GMM weights must sum to 1");
  if ((stds.array() < kGmmSigmaFloor - 1e-15).any())
    throw DataError("GMM stds fall below the floor");
}

bool SCFVDescriptor::selected(int component) const {
  const auto byte = static_cast<std::size_t>(component / 8);
  return byte < mask.size() && ((mask[byte] >> (component % 8)) & 1) != 0;
}

int SCFVDescriptor::popcount() const {
  int count = 0;
  for (std::uint8_t b : mask) count += std::popcount(b);
  return count;
}

Eigen::MatrixXd pca_reduce(const Eigen::MatrixXd& raw_rows, const PCAModel& pca) {
  if (raw_rows.cols() != 128) throw DataError("PCA input must have 128 columns");
  return (raw_rows.rowwise() - pca.mean.transpose()) * pca.basis.transpose();
}

Eigen::MatrixXd pca_reduce(const std::vector<RawDescriptor>& raws, const PCAModel& pca) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(raws.size()), 128);
  for (std::size_t i = 0; i < raws.size(); ++i)
    rows.row(static_cast<Eigen::Index>(i)) = raws[i].values.transpose();
  return pca_reduce(rows, pca);
}

Eigen::MatrixXd posteriors_naive(const Eigen::MatrixXd& x, const GMMModel& gmm) {
  gmm.validate();
  if (x.cols() != 32) throw DataError("descriptors must be 32-D");
  return softmax_rows(log_weighted_densities(x, gmm));
}

Eigen::MatrixXd fv_mean_naive(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                              const GMMModel& gmm) {
  const Eigen::Index n = x.rows();
  const int nc = gmm.components();
  if (gamma.rows() != n || gamma.cols() != nc) throw DataError("posterior shape mismatch");
  Eigen::MatrixXd gm = Eigen::MatrixXd::Zero(nc, 32);
  if (n == 0) return gm;
  for (int i = 0; i < nc; ++i) {
    const double scale = 1.0 / (static_cast<double>(n) * std::sqrt(gmm.weights[i]));
    for (int j = 0; j < 32; ++j) {
      double acc = 0.0;
      for (Eigen::Index t = 0; t < n; ++t)
        acc += gamma(t, i) * (x(t, j) - gmm.means(i, j)) / gmm.stds(i, j);
      gm(i, j) = scale * acc;
    }
  }
  return gm;
}

Eigen::MatrixXd fv_var_naive(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                             const GMMModel& gmm) {
  const Eigen::Index n = x.rows();
  const int nc = gmm.components();
  if (gamma.rows() != n || gamma.cols() != nc) throw DataError("posterior shape mismatch");
  Eigen::MatrixXd gv = Eigen::MatrixXd::Zero(nc, 32);
  if (n == 0) return gv;
  for (int i = 0; i < nc; ++i) {
    const double scale = 1.0 / (static_cast<double>(n) * std::sqrt(gmm.weights[i]));
    for (int j = 0; j < 32; ++j) {
      double acc = 0.0;
      for (Eigen::Index t = 0; t < n; ++t) {
        const double z = (x(t, j) - gmm.means(i, j)) / gmm.stds(i, j);
        acc += gamma(t, i) * (z * z - 1.0);
      }
      gv(i, j) = scale * acc;
    }
  }
  return gv;
}

Eigen::MatrixXd posteriors_matrix(const Eigen::MatrixXd& x, const GMMModel& gmm) {
  gmm.validate();
  if (x.cols() != 32) throw DataError("descriptors must be 32-D");
  const Eigen::Index n = x.rows();
  const int nc = gmm.components();

  const Eigen::MatrixXd var = gmm.stds.array().square().matrix();          // N x 32
  const Eigen::MatrixXd inv_var = var.array().inverse().matrix();         // 1 ./ V
  const Eigen::MatrixXd m_over_v = (gmm.means.array() / var.array()).matrix();
  const Eigen::MatrixXd m2_over_v = (gmm.means.array().square() / var.array()).matrix();
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 32);

  // Squared Mahalanobis distances as three matrix products.
  const Eigen::MatrixXd p = (x.array().square().matrix()) * inv_var.transpose() -
                            2.0 * x * m_over_v.transpose() + ones * m2_over_v.transpose();

  Eigen::RowVectorXd log_norm(nc);
  for (int i = 0; i < nc; ++i) {
    double s = 0.0;
    for (int j = 0; j < 32; ++j) s += std::log(gmm.stds(i, j));
    log_norm[i] = std::log(gmm.weights[i]) - s - 16.0 * kLog2Pi;
  }
  Eigen::MatrixXd logp = (-0.5 * p).rowwise() + log_norm;
  return softmax_rows(logp);
}

Eigen::MatrixXd fv_mean_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                               const GMMModel& gmm) {
  const Eigen::Index n = x.rows();
  const int nc = gmm.components();
  if (gamma.rows() != n || gamma.cols() != nc) throw DataError("posterior shape mismatch");
  if (n == 0) return Eigen::MatrixXd::Zero(nc, 32);

  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 32);
  Eigen::MatrixXd gm = ((gamma.transpose() * x - (gamma.transpose() * ones).cwiseProduct(gmm.means))
                            .array() / gmm.stds.array())
                           .matrix();
  const Eigen::ArrayXd scale =
      1.0 / (static_cast<double>(n) * gmm.weights.array().sqrt());
  return (gm.array().colwise() * scale).matrix();
}

Eigen::MatrixXd fv_var_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                              const GMMModel& gmm) {
  const Eigen::Index n = x.rows();
  const int nc = gmm.components();
  if (gamma.rows() != n || gamma.cols() != nc) throw DataError("posterior shape mismatch");
  if (n == 0) return Eigen::MatrixXd::Zero(nc, 32);

  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 32);
  const Eigen::MatrixXd var = gmm.stds.array().square().matrix();
  const Eigen::MatrixXd qt_x = gamma.transpose() * x;
  const Eigen::MatrixXd qt_x2 = gamma.transpose() * x.array().square().matrix();
  const Eigen::MatrixXd qt_o = gamma.transpose() * ones;

  Eigen::MatrixXd gv =
      ((qt_x2 - qt_x.cwiseProduct(2.0 * gmm.means) +
        qt_o.cwiseProduct((gmm.means.array().square() - var.array()).matrix()))
           .array() / var.array())
          .matrix();
  const Eigen::ArrayXd scale =
      1.0 / (static_cast<double>(n) * gmm.weights.array().sqrt());
  return (gv.array().colwise() * scale).matrix();
}

double scfv_delta(const Eigen::VectorXd& g) {
  const double mean = g.mean();
  return std::sqrt((g.array() - mean).square().sum() / static_cast<double>(g.size()));
}

SCFVDescriptor scfv_encode(const Eigen::MatrixXd& gm, const Eigen::MatrixXd& gv,
                           const GMMModel& gmm, const ModeSpec& mode) {
  const int nc = gmm.components();
  if (gm.rows() != nc || gm.cols() != 32) throw DataError("mean gradient shape mismatch");
  if (mode.variance_planes && (gv.rows() != nc || gv.cols() != 32))
    throw DataError("variance gradient shape mismatch");

  std::vector<double> delta(static_cast<std::size_t>(nc));
  for (int i = 0; i < nc; ++i)
    delta[static_cast<std::size_t>(i)] = scfv_delta(gm.row(i).transpose());

  std::vector<int> order(static_cast<std::size_t>(nc));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = delta[static_cast<std::size_t>(a)];
    const double db = delta[static_cast<std::size_t>(b)];
    if (da != db) return da > db;
    return a < b;
  });

  const int k = std::min(nc, std::max(1, static_cast<int>(std::lround(nc * mode.scfv_fraction))));

  SCFVDescriptor desc;
  desc.n_components = nc;
  desc.has_variance = mode.variance_planes;
  desc.mask.assign(static_cast<std::size_t>((nc + 7) / 8), 0);
  for (int r = 0; r < k; ++r) {
    const int i = order[static_cast<std::size_t>(r)];
    desc.mask[static_cast<std::size_t>(i / 8)] |= static_cast<std::uint8_t>(1u << (i % 8));
  }

  for (int i = 0; i < nc; ++i) {
    if (!desc.selected(i)) continue;
    std::uint32_t mean_bits = 0, var_bits = 0;
    for (int j = 0; j < 32; ++j) {
      if (gm(i, j) >= 0.0) mean_bits |= (1u << j);
      if (mode.variance_planes && gv(i, j) >= 0.0) var_bits |= (1u << j);
    }
    desc.mean_planes.push_back(mean_bits);
    if (mode.variance_planes) desc.var_planes.push_back(var_bits);
    desc.norms.push_back(delta[static_cast<std::size_t>(i)]);
  }
  return desc;
}

double scfv_similarity(const SCFVDescriptor& a, const SCFVDescriptor& b) {
  if (a.n_components != b.n_components)
    throw DataError("signatures come from different mixture models");

  // Planes are stored for selected components only, in ascending component
  // order, so each side keeps its own running rank.
  int common = 0;
  long long accum = 0;
  int rank_a = 0, rank_b = 0;
  for (int i = 0; i < a.n_components; ++i) {
    const bool in_a = a.selected(i);
    const bool in_b = b.selected(i);
    if (in_a && in_b) {
      const std::uint32_t xor_bits = a.mean_planes[static_cast<std::size_t>(rank_a)] ^
                                     b.mean_planes[static_cast<std::size_t>(rank_b)];
      accum += 32 - 2 * std::popcount(xor_bits);
      ++common;
    }
    if (in_a) ++rank_a;
    if (in_b) ++rank_b;
  }
  if (common == 0) return -1.0;
  return static_cast<double>(accum) / (32.0 * common);
}

std::size_t scfv_serialized_bytes(int n_components, int selected, bool has_variance) {
  return static_cast<std::size_t>((n_components + 7) / 8) +
         static_cast<std::size_t>(selected) * (has_variance ? 8 : 4);
}

std::vector<std::uint8_t> serialize_scfv(const SCFVDescriptor& desc) {
  std::vector<std::uint8_t> out(desc.mask);
  auto push_u32 = [&out](std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
  };
  for (std::size_t r = 0; r < desc.mean_planes.size(); ++r) {
    push_u32(desc.mean_planes[r]);
    if (desc.has_variance) push_u32(desc.var_planes[r]);
  }
  return out;
}

SCFVDescriptor parse_scfv(const std::vector<std::uint8_t>& bytes, int n_components,
                          bool has_variance) {
  SCFVDescriptor desc;
  desc.n_components = n_components;
  desc.has_variance = has_variance;
  const std::size_t mask_bytes = static_cast<std::size_t>((n_components + 7) / 8);
  if (bytes.size() < mask_bytes) throw DataError("global descriptor block truncated");
  desc.mask.assign(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(mask_bytes));
  const int selected = desc.popcount();
  if (bytes.size() != scfv_serialized_bytes(n_components, selected, has_variance))
    throw DataError("global descriptor length does not match its mask");

  std::size_t off = mask_bytes;
  auto read_u32 = [&bytes, &off]() {
    const std::uint32_t v = static_cast<std::uint32_t>(bytes[off]) |
                            (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
    off += 4;
    return v;
  };
  for (int r = 0; r < selected; ++r) {
    desc.mean_planes.push_back(read_u32());
    if (has_variance) desc.var_planes.push_back(read_u32());
  }
  return desc;
}

PCAModel train_pca(const Eigen::MatrixXd& corpus) {
  if (corpus.cols() != 128) throw DataError("PCA training expects 128 columns");
  if (corpus.rows() < 10 * 128) throw DataError("PCA training needs at least 1280 samples");
  if (!corpus.allFinite()) throw DataError("PCA training data contains non-finite values");

  PCAModel pca;
  pca.mean = corpus.colwise().mean().transpose();
  const Eigen::MatrixXd centered = corpus.rowwise() - pca.mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(corpus.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DataError("PCA eigendecomposition failed");

  // Eigenvalues ascend; take the strongest 32 and fix each row's sign so the
  // largest-magnitude coefficient is positive.
  for (int r = 0; r < 32; ++r) {
    Eigen::VectorXd v = solver.eigenvectors().col(127 - r);
    int arg = 0;
    for (int j = 1; j < 128; ++j)
      if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    if (v[arg] < 0.0) v = -v;
    pca.basis.row(r) = v.transpose();
  }
  pca.validate();
  return pca;
}

GMMModel train_gmm(const Eigen::MatrixXd& corpus, int n_components, int iterations,
                   std::uint64_t seed, std::vector<double>* loglik) {
  if (corpus.cols() != 32) throw DataError("GMM training expects 32 columns");
  if (n_components < 1) throw DataError("GMM needs at least one component");
  if (corpus.rows() < std::max<Eigen::Index>(10 * 32, 2 * n_components))
    throw DataError("GMM training corpus is too small");
  if (!corpus.allFinite()) throw DataError("GMM training data contains non-finite values");

  const Eigen::Index n = corpus.rows();
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  std::vector<Eigen::Index> centers;
  centers.push_back(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n)));
  Eigen::VectorXd dist2 = (corpus.rowwise() - corpus.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < n_components) {
    const double total = dist2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double run = 0.0;
      pick = n - 1;
      for (Eigen::Index t = 0; t < n; ++t) {
        run += dist2[t];
        if (run >= target) {
          pick = t;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n));
    }
    centers.push_back(pick);
    dist2 = dist2.cwiseMin((corpus.rowwise() - corpus.row(pick)).rowwise().squaredNorm());
  }

  GMMModel gmm;
  gmm.weights = Eigen::VectorXd::Constant(n_components, 1.0 / n_components);
  gmm.means.resize(n_components, 32);
  for (int i = 0; i < n_components; ++i) gmm.means.row(i) = corpus.row(centers[static_cast<std::size_t>(i)]);
  const Eigen::RowVectorXd global_mean = corpus.colwise().mean();
  Eigen::RowVectorXd global_std =
      ((corpus.rowwise() - global_mean).array().square().colwise().sum() / static_cast<double>(n))
          .sqrt();
  global_std = global_std.cwiseMax(kGmmSigmaFloor);
  gmm.stds.resize(n_components, 32);
  for (int i = 0; i < n_components; ++i) gmm.stds.row(i) = global_std;

  const Eigen::MatrixXd x2 = corpus.array().square().matrix();
  for (int iter = 0; iter < iterations; ++iter) {
    // E step in log space, recording the data log-likelihood.
    Eigen::MatrixXd logp = log_weighted_densities(corpus, gmm);
    double ll = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
      const double peak = logp.row(t).maxCoeff();
      ll += peak + std::log((logp.row(t).array() - peak).exp().sum());
    }
    if (loglik) loglik->push_back(ll);
    const Eigen::MatrixXd gamma = softmax_rows(logp);

    // M step.
    const Eigen::VectorXd nk = gamma.colwise().sum().transpose();
    for (int i = 0; i < n_components; ++i) {
      if (nk[i] < 1e-10) continue;  // starved component keeps its parameters
      const Eigen::RowVectorXd mu = gamma.col(i).transpose() * corpus / nk[i];
      const Eigen::RowVectorXd ex2 = gamma.col(i).transpose() * x2 / nk[i];
      gmm.means.row(i) = mu;
      gmm.stds.row(i) =
          (ex2.array() - mu.array().square()).max(kGmmSigmaFloor * kGmmSigmaFloor).sqrt();
    }
    Eigen::VectorXd w = nk / static_cast<double>(n);
    w = w.cwiseMax(1e-12);
    gmm.weights = w / w.sum();
  }
  gmm.validate();
  return gmm;
}

}  // namespace cdvz
