#pragma once

#include <Eigen/Core>
#include <vector>

#include "cdvz/scale_space.hpp"

namespace cdvz {

using Descriptor128 = Eigen::Matrix<double, 128, 1>;

struct OrientedPoint {
  InterestPoint pt;
  double theta = 0.0;  // dominant orientation, radians in [0, 2pi)
};

// 128-value gradient histogram: 16 cells (4x4 row-major) x 8 orientation bins.
struct RawDescriptor {
  Descriptor128 values = Descriptor128::Zero();
  OrientedPoint point;
};

// Octave-local view of a point: the Gaussian level image nearest its scale
// plus coordinates and sigma in that image's units.
struct LocalFrame {
  const ImageArray* level = nullptr;
  double x = 0.0, y = 0.0, sigma = 0.0;
};
LocalFrame resolve_frame(const Pyramid& pyr, const std::vector<double>& sigmas,
                         const InterestPoint& pt);

// Dominant gradient directions around (x, y): 36-bin magnitude-weighted
// histogram over the disk of radius 3.96 sigma, Gaussian window 1.5 sigma,
// peaks above 0.8x the maximum kept and refined parabolically. A gradient-free
// region yields the single orientation 0.
std::vector<double> dominant_orientations(const ImageArray& level, double x, double y,
                                          double sigma);

// SIFT-style description over a 12 sigma window rotated to the point's
// orientation: 4x4 cells of 3 sigma a side, 8 orientation bins, trilinear
// soft assignment, then normalize / clamp at 0.2 / renormalize.
// Samples are accumulated per 16x16-sample sub-patch and the partial
// histograms merged in sub-patch index order, so batched execution is
// bit-identical to this sequential form.
Descriptor128 describe(const ImageArray& level, double x, double y, double sigma, double theta);

// Orientation assignment for every point, in input order. Points with
// several kept peaks expand into several OrientedPoints (peak order).
std::vector<OrientedPoint> assign_orientations(const Pyramid& pyr,
                                               const std::vector<double>& sigmas,
                                               const std::vector<InterestPoint>& points,
                                               const Engine& eng = {});

// Sub-patch-parallel description of a batch; result order equals input
// order and every descriptor is bit-identical to describe() on that point.
std::vector<RawDescriptor> describe_batch(const Pyramid& pyr, const std::vector<double>& sigmas,
                                          const std::vector<OrientedPoint>& points,
                                          const Engine& eng = {});

}  // namespace cdvz
