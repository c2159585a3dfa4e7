#include "cdvz/transform_coding.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cdvz/common.hpp"

namespace cdvz {

namespace {

constexpr double kSigmaQuantMin = 0.5;
constexpr double kSigmaQuantMax = 64.0;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

const std::array<ModeSpec, 6>& default_modes() {
  static const std::array<ModeSpec, 6> modes = {{
      {0, "512B", 512, 20, 32.0 / 512.0, false},
      {1, "1K", 1024, 32, 64.0 / 512.0, false},
      {2, "2K", 2048, 64, 128.0 / 512.0, false},
      {3, "4K", 4096, 103, 256.0 / 512.0, false},
      {4, "8K", 8192, 103, 320.0 / 512.0, true},
      {5, "16K", 16384, 128, 512.0 / 512.0, true},
  }};
  return modes;
}

const ModeSpec& mode_by_id(int id) {
  for (const auto& m : default_modes())
    if (m.id == id) return m;
  throw DataError("unknown mode id " + std::to_string(id));
}

const ModeSpec& mode_by_name(const std::string& name) {
  for (const auto& m : default_modes())
    if (name == m.name) return m;
  throw UsageError("unknown mode '" + name + "' (expected 512B, 1K, 2K, 4K, 8K or 16K)");
}

void TransformPair::validate() const {
  if (scale == 0.0) throw DataError("transform scale must be nonzero");
  for (const auto* m : {&a, &b}) {
    const Eigen::Matrix<double, 8, 8> gram = (*m) * m->transpose();
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        if (i != j && std::abs(gram(i, j)) > 1e-9)
          throw DataError("transform rows are not orthogonal");
      }
      if (gram(i, i) <= 0.0) throw DataError("transform has a zero row");
    }
  }
}

TransformPair TransformPair::defaults() {
  TransformPair tp;
  // Sylvester Hadamard construction.
  Eigen::Matrix<double, 8, 8> h;
  h(0, 0) = 1.0;
  for (int n = 1; n < 8; n *= 2) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double v = h(i, j);
        h(i, j + n) = v;
        h(i + n, j) = v;
        h(i + n, j + n) = -v;
      }
    }
  }
  tp.a = h;
  for (int i = 0; i < 8; ++i) tp.b.row(i) = h.row((i + 1) % 8);
  tp.scale = 1.0 / 8.0;
  tp.validate();
  return tp;
}

Eigen::Matrix<double, 128, 1> transform_descriptor(const Descriptor128& raw,
                                                   const TransformPair& tp) {
  Eigen::Matrix<double, 128, 1> out;
  for (int cell = 0; cell < 16; ++cell) {
    const int cx = cell % 4;
    const int cy = cell / 4;
    const auto& m = cell_uses_a(cx, cy) ? tp.a : tp.b;
    out.segment<8>(cell * 8) = tp.scale * (m * raw.segment<8>(cell * 8));
  }
  return out;
}

Eigen::Matrix<double, 128, 1> inverse_transform_descriptor(
    const Eigen::Matrix<double, 128, 1>& transformed, const TransformPair& tp) {
  const Eigen::Matrix<double, 8, 8> inv_a = tp.a.inverse();
  const Eigen::Matrix<double, 8, 8> inv_b = tp.b.inverse();
  Eigen::Matrix<double, 128, 1> out;
  for (int cell = 0; cell < 16; ++cell) {
    const int cx = cell % 4;
    const int cy = cell / 4;
    const auto& m = cell_uses_a(cx, cy) ? inv_a : inv_b;
    out.segment<8>(cell * 8) = m * (transformed.segment<8>(cell * 8) / tp.scale);
  }
  return out;
}

void QuantizerModel::validate() const {
  for (int e = 0; e < 128; ++e)
    if (!(t0[e] < t1[e])) throw DataError("quantizer thresholds must satisfy t0 < t1");
  std::array<int, 128> seen{};
  for (int e : priority) {
    if (e < 0 || e >= 128 || seen[static_cast<std::size_t>(e)]++)
      throw DataError("quantizer priority must be a permutation of 0..127");
  }
}

QuantizerModel QuantizerModel::neutral() {
  QuantizerModel qm;
  qm.t0.setConstant(-1.0);
  qm.t1.setConstant(1.0);
  std::iota(qm.priority.begin(), qm.priority.end(), 0);
  qm.degenerate.fill(0);
  return qm;
}

QuantizerModel train_thresholds(const Eigen::MatrixXd& corpus, double p0) {
  if (corpus.cols() != 128) throw DataError("threshold training expects 128 columns");
  if (corpus.rows() < 1000) throw DataError("threshold training needs at least 1000 descriptors");
  if (!(p0 > 0.0 && p0 < 1.0)) throw DataError("band mass must lie in (0, 1)");

  const auto n = corpus.rows();
  auto quantile = [n](const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
  };

  QuantizerModel qm;
  qm.degenerate.fill(0);
  Eigen::Matrix<double, 128, 1> variance;
  std::vector<double> column(static_cast<std::size_t>(n));
  for (int e = 0; e < 128; ++e) {
    for (Eigen::Index t = 0; t < n; ++t) column[static_cast<std::size_t>(t)] = corpus(t, e);
    std::sort(column.begin(), column.end());
    double lo = quantile(column, (1.0 - p0) / 2.0);
    double hi = quantile(column, (1.0 + p0) / 2.0);
    const double mean = corpus.col(e).mean();
    variance[e] = (corpus.col(e).array() - mean).square().sum() / static_cast<double>(n);
    if (!(lo < hi)) {
      qm.degenerate[static_cast<std::size_t>(e)] = 1;
      const double eps = std::max(1e-9, 1e-9 * std::abs(lo));
      hi = lo + eps;
      lo -= eps;
    }
    qm.t0[e] = lo;
    qm.t1[e] = hi;
  }

  std::iota(qm.priority.begin(), qm.priority.end(), 0);
  std::sort(qm.priority.begin(), qm.priority.end(), [&](int x, int y) {
    const bool dx = qm.degenerate[static_cast<std::size_t>(x)];
    const bool dy = qm.degenerate[static_cast<std::size_t>(y)];
    if (dx != dy) return !dx;  // degenerate elements sink to the tail
    if (variance[x] != variance[y]) return variance[x] > variance[y];
    return x < y;
  });
  qm.validate();
  return qm;
}

std::uint16_t quantize_coord(double v, int extent) {
  if (extent < 2) throw DataError("coordinate extent must be at least 2");
  const double clamped = std::clamp(v, 0.0, static_cast<double>(extent - 1));
  return static_cast<std::uint16_t>(std::lround(clamped / (extent - 1) * 65535.0));
}

double dequantize_coord(std::uint16_t q, int extent) {
  return static_cast<double>(q) / 65535.0 * (extent - 1);
}

std::uint8_t quantize_sigma_log(double sigma) {
  const double s = std::clamp(sigma, kSigmaQuantMin, kSigmaQuantMax);
  const double t = std::log2(s / kSigmaQuantMin) / std::log2(kSigmaQuantMax / kSigmaQuantMin);
  return static_cast<std::uint8_t>(std::lround(t * 255.0));
}

double dequantize_sigma_log(std::uint8_t q) {
  const double t = static_cast<double>(q) / 255.0;
  return kSigmaQuantMin * std::pow(kSigmaQuantMax / kSigmaQuantMin, t);
}

std::uint8_t quantize_theta(double theta) {
  double t = theta / kTwoPi;
  t -= std::floor(t);
  return static_cast<std::uint8_t>(static_cast<int>(std::lround(t * 256.0)) & 0xFF);
}

double dequantize_theta(std::uint8_t q) { return static_cast<double>(q) / 256.0 * kTwoPi; }

TernaryCode quantize_ternary(const Eigen::Matrix<double, 128, 1>& transformed,
                             const QuantizerModel& qm, const ModeSpec& mode) {
  if (mode.elements < 1 || mode.elements > 128) throw DataError("invalid element count for mode");
  TernaryCode code;
  code.mode = static_cast<std::uint8_t>(mode.id);
  code.symbols.resize(static_cast<std::size_t>(mode.elements));
  for (int j = 0; j < mode.elements; ++j) {
    const int e = qm.priority[static_cast<std::size_t>(j)];
    const double v = transformed[e];
    std::int8_t sym = 0;
    if (v < qm.t0[e]) sym = -1;
    else if (v > qm.t1[e]) sym = 1;
    code.symbols[static_cast<std::size_t>(j)] = sym;
  }
  return code;
}

int ternary_distance(const TernaryCode& a, const TernaryCode& b) {
  if (a.mode != b.mode || a.symbols.size() != b.symbols.size())
    throw DataError("ternary codes from different modes cannot be compared");
  int dist = 0;
  for (std::size_t i = 0; i < a.symbols.size(); ++i)
    dist += std::abs(static_cast<int>(a.symbols[i]) - static_cast<int>(b.symbols[i]));
  return dist;
}

std::size_t packed_code_bytes(int elements) {
  return 6 + (static_cast<std::size_t>(elements) * 2 + 7) / 8;
}

std::vector<std::uint8_t> pack_local(const std::vector<TernaryCode>& codes, const ModeSpec& mode) {
  if (codes.size() > 0xFFFF) throw DataError("too many codes for one local block");
  std::vector<std::uint8_t> out;
  out.reserve(kLocalHeaderBytes + codes.size() * packed_code_bytes(mode.elements));
  out.push_back(static_cast<std::uint8_t>(mode.id));
  out.push_back(static_cast<std::uint8_t>(mode.elements));
  out.push_back(static_cast<std::uint8_t>(codes.size() & 0xFF));
  out.push_back(static_cast<std::uint8_t>(codes.size() >> 8));

  for (const auto& code : codes) {
    if (code.mode != mode.id) throw DataError("code mode does not match block mode");
    if (code.symbols.size() != static_cast<std::size_t>(mode.elements))
      throw DataError("code symbol count does not match block mode");
    out.push_back(static_cast<std::uint8_t>(code.xq & 0xFF));
    out.push_back(static_cast<std::uint8_t>(code.xq >> 8));
    out.push_back(static_cast<std::uint8_t>(code.yq & 0xFF));
    out.push_back(static_cast<std::uint8_t>(code.yq >> 8));
    out.push_back(code.sigma_q);
    out.push_back(code.theta_q);
    std::uint8_t packed = 0;
    int filled = 0;
    for (std::size_t i = 0; i < code.symbols.size(); ++i) {
      const std::int8_t s = code.symbols[i];
      std::uint8_t bits;
      if (s == 0) bits = 0b00;
      else if (s == 1) bits = 0b01;
      else if (s == -1) bits = 0b10;
      else throw DataError("symbol outside {-1, 0, +1}");
      packed |= static_cast<std::uint8_t>(bits << (2 * filled));
      if (++filled == 4) {
        out.push_back(packed);
        packed = 0;
        filled = 0;
      }
    }
    if (filled > 0) out.push_back(packed);
  }
  return out;
}

std::vector<TernaryCode> unpack_local(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kLocalHeaderBytes) throw DataError("local block truncated");
  const int mode_id = bytes[0];
  const int elements = bytes[1];
  const std::size_t count = static_cast<std::size_t>(bytes[2]) | (static_cast<std::size_t>(bytes[3]) << 8);
  if (mode_id < 0 || mode_id > 5) throw DataError("local block has an unknown mode id");
  if (elements < 1 || elements > 128) throw DataError("local block has an invalid element count");

  const std::size_t per_code = packed_code_bytes(elements);
  if (bytes.size() != kLocalHeaderBytes + count * per_code)
    throw DataError("local block length does not match its header");

  std::vector<TernaryCode> codes(count);
  std::size_t off = kLocalHeaderBytes;
  for (auto& code : codes) {
    code.mode = static_cast<std::uint8_t>(mode_id);
    code.xq = static_cast<std::uint16_t>(bytes[off] | (bytes[off + 1] << 8));
    code.yq = static_cast<std::uint16_t>(bytes[off + 2] | (bytes[off + 3] << 8));
    code.sigma_q = bytes[off + 4];
    code.theta_q = bytes[off + 5];
    off += 6;
    code.symbols.resize(static_cast<std::size_t>(elements));
    for (int i = 0; i < elements; ++i) {
      const std::uint8_t byte = bytes[off + static_cast<std::size_t>(i / 4)];
      const std::uint8_t bits = (byte >> (2 * (i % 4))) & 0b11;
      if (bits == 0b00) code.symbols[static_cast<std::size_t>(i)] = 0;
      else if (bits == 0b01) code.symbols[static_cast<std::size_t>(i)] = 1;
      else if (bits == 0b10) code.symbols[static_cast<std::size_t>(i)] = -1;
      else throw DataError("reserved symbol pattern in local block");
    }
    off += (static_cast<std::size_t>(elements) * 2 + 7) / 8;
  }
  return codes;
}

}  // namespace cdvz
