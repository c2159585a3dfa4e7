#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <vector>

#include "cdvz/descriptor.hpp"

namespace cdvz {

// Descriptor byte budgets and the knobs tied to each.
struct ModeSpec {
  int id = 0;
  const char* name = "";
  std::size_t budget_bytes = 0;
  int elements = 0;        // ternary symbols kept per descriptor
  double scfv_fraction = 0.0;  // share of GMM components selected
  bool variance_planes = false;
};

const std::array<ModeSpec, 6>& default_modes();
const ModeSpec& mode_by_id(int id);
const ModeSpec& mode_by_name(const std::string& name);

// Two order-8 transforms assigned to cells in a checkerboard so neighboring
// cell histograms decorrelate differently. The default pair holds +-1
// matrices with mutually orthogonal rows, applied with divide-by-8 scaling.
struct TransformPair {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 8> b;
  double scale = 1.0;  // applied after the matrix product
  void validate() const;  // orthogonal rows, invertible, nonzero scale
  static TransformPair defaults();  // Hadamard A, row-rotated B, scale 1/8
};

// True when the 4x4 cell at (cell_x, cell_y) uses transform A.
inline bool cell_uses_a(int cell_x, int cell_y) { return ((cell_x + cell_y) & 1) == 0; }

// Applies A or B per cell to each 8-bin histogram, output in cell order.
Eigen::Matrix<double, 128, 1> transform_descriptor(const Descriptor128& raw,
                                                   const TransformPair& tp);
// Exact inverse of transform_descriptor.
Eigen::Matrix<double, 128, 1> inverse_transform_descriptor(
    const Eigen::Matrix<double, 128, 1>& transformed, const TransformPair& tp);

struct QuantizerModel {
  Eigen::Matrix<double, 128, 1> t0, t1;   // per-element band thresholds, t0 < t1
  std::array<int, 128> priority{};        // element consumption order per budget
  std::array<std::uint8_t, 128> degenerate{};  // constant elements, demoted to the tail
  void validate() const;
  static QuantizerModel neutral();  // symmetric unit band, identity priority
};

// Empirical band thresholds: t0/t1 at the (1-p0)/2 and (1+p0)/2 quantiles of
// each element, priority by descending variance. Requires >= 1000 rows.
QuantizerModel train_thresholds(const Eigen::MatrixXd& transformed_corpus, double p0 = 1.0 / 3.0);

struct TernaryCode {
  std::uint16_t xq = 0, yq = 0;  // location, 16-bit fixed point over the raster
  std::uint8_t sigma_q = 0;      // log-quantized scale
  std::uint8_t theta_q = 0;
  std::uint8_t mode = 0;
  std::vector<std::int8_t> symbols;  // values in {-1, 0, +1}
};

std::uint16_t quantize_coord(double v, int extent);
double dequantize_coord(std::uint16_t q, int extent);
std::uint8_t quantize_sigma_log(double sigma);
double dequantize_sigma_log(std::uint8_t q);
std::uint8_t quantize_theta(double theta);
double dequantize_theta(std::uint8_t q);

// Band quantization of the budget's priority elements: -1 below t0, 0 inside
// [t0, t1], +1 above t1. Location fields are left zero.
TernaryCode quantize_ternary(const Eigen::Matrix<double, 128, 1>& transformed,
                             const QuantizerModel& qm, const ModeSpec& mode);

// Sum of |a_i - b_i| over the shared elements; throws on mode mismatch.
int ternary_distance(const TernaryCode& a, const TernaryCode& b);

// Local block layout: mode, symbols per code, count, then per code the
// location fields and 2-bit-packed symbols (00 zero, 01 plus, 10 minus,
// 11 reserved). unpack(pack(x)) == x bit-exactly.
std::vector<std::uint8_t> pack_local(const std::vector<TernaryCode>& codes, const ModeSpec& mode);
std::vector<TernaryCode> unpack_local(const std::vector<std::uint8_t>& bytes);

// Serialized size of one code at m symbols.
std::size_t packed_code_bytes(int elements);
inline constexpr std::size_t kLocalHeaderBytes = 4;

}  // namespace cdvz
