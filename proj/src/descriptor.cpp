#include "cdvz/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cdvz/common.hpp"

namespace cdvz {

namespace {

constexpr int kOrientationBins = 36;
constexpr int kCellGrid = 4;
constexpr int kDescOrientBins = 8;
constexpr int kSubPatchSide = 16;  // samples per sub-patch axis
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0.0 ? a + kTwoPi : a;
}

// Bilinear sample; caller guarantees q is at least 1 px inside the raster.
double sample_bilinear(const ImageArray& img, double qx, double qy) {
  const int x0 = static_cast<int>(std::floor(qx));
  const int y0 = static_cast<int>(std::floor(qy));
  const double fx = qx - x0;
  const double fy = qy - y0;
  double v = (1.0 - fy) * (1.0 - fx) * img(y0, x0);
  if (fx > 0.0) v += (1.0 - fy) * fx * img(y0, x0 + 1);
  if (fy > 0.0) v += fy * (1.0 - fx) * img(y0 + 1, x0);
  if (fx > 0.0 && fy > 0.0) v += fy * fx * img(y0 + 1, x0 + 1);
  return v;
}

struct PatchGeometry {
  double half = 0.0;   // 6 sigma
  double step = 0.0;   // sample spacing <= 1 px
  int samples = 0;     // per axis
  int sub_per_axis = 0;
  double cos_t = 1.0, sin_t = 0.0;
  double inv_cell = 0.0;      // 1 / (3 sigma)
  double gauss_denom = 0.0;   // 2 * (6 sigma)^2
};

PatchGeometry make_geometry(double sigma, double theta) {
  PatchGeometry g;
  g.half = 6.0 * sigma;
  g.samples = std::max(1, static_cast<int>(std::ceil(12.0 * sigma)));
  g.step = 2.0 * g.half / g.samples;
  g.sub_per_axis = (g.samples + kSubPatchSide - 1) / kSubPatchSide;
  g.cos_t = std::cos(theta);
  g.sin_t = std::sin(theta);
  g.inv_cell = 1.0 / (3.0 * sigma);
  g.gauss_denom = 2.0 * g.half * g.half;
  return g;
}

// Histogram contribution of one 16x16-sample block. Sample order inside the
// block is row-major, which together with ordered merging makes the result
// independent of how blocks are scheduled.
Descriptor128 subpatch_partial(const ImageArray& img, double cx, double cy, double theta,
                               const PatchGeometry& g, int sub_index) {
  Descriptor128 acc = Descriptor128::Zero();
  const int sub_x = sub_index % g.sub_per_axis;
  const int sub_y = sub_index / g.sub_per_axis;
  const int i_lo = sub_x * kSubPatchSide;
  const int j_lo = sub_y * kSubPatchSide;
  const int i_hi = std::min(g.samples, i_lo + kSubPatchSide);
  const int j_hi = std::min(g.samples, j_lo + kSubPatchSide);
  const int w = static_cast<int>(img.cols());
  const int h = static_cast<int>(img.rows());

  for (int j = j_lo; j < j_hi; ++j) {
    const double v = (j + 0.5) * g.step - g.half;
    for (int i = i_lo; i < i_hi; ++i) {
      const double u = (i + 0.5) * g.step - g.half;
      const double px = cx + u * g.cos_t - v * g.sin_t;
      const double py = cy + u * g.sin_t + v * g.cos_t;
      if (px < 1.0 || px > w - 2.0 || py < 1.0 || py > h - 2.0) continue;

      const double gx = 0.5 * (sample_bilinear(img, px + 1.0, py) - sample_bilinear(img, px - 1.0, py));
      const double gy = 0.5 * (sample_bilinear(img, px, py + 1.0) - sample_bilinear(img, px, py - 1.0));
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;

      const double weight = mag * std::exp(-(u * u + v * v) / g.gauss_denom);
      const double phi = wrap_angle(std::atan2(gy, gx) - theta);

      const double cu = u * g.inv_cell + 1.5;
      const double cv = v * g.inv_cell + 1.5;
      const double ob = phi / kTwoPi * kDescOrientBins - 0.5;
      const int cu0 = static_cast<int>(std::floor(cu));
      const int cv0 = static_cast<int>(std::floor(cv));
      const int ob0 = static_cast<int>(std::floor(ob));
      const double fu = cu - cu0;
      const double fv = cv - cv0;
      const double fo = ob - ob0;

      for (int dv = 0; dv <= 1; ++dv) {
        const int cell_y = cv0 + dv;
        if (cell_y < 0 || cell_y >= kCellGrid) continue;
        const double wv = dv ? fv : 1.0 - fv;
        for (int du = 0; du <= 1; ++du) {
          const int cell_x = cu0 + du;
          if (cell_x < 0 || cell_x >= kCellGrid) continue;
          const double wu = du ? fu : 1.0 - fu;
          for (int dob = 0; dob <= 1; ++dob) {
            const int bin = ((ob0 + dob) % kDescOrientBins + kDescOrientBins) % kDescOrientBins;
            const double wo = dob ? fo : 1.0 - fo;
            acc[(cell_y * kCellGrid + cell_x) * kDescOrientBins + bin] += weight * wv * wu * wo;
          }
        }
      }
    }
  }
  return acc;
}

// Normalize, clamp at 0.2, renormalize; repeated until clamping no longer
// bites so the result has unit norm with every value at most 0.2. Descriptors
// too sparse to reach unit norm under the cap exit through the final clamp.
Descriptor128 normalize_descriptor(Descriptor128 v) {
  for (int round = 0; round < 5; ++round) {
    const double norm = v.norm();
    if (norm == 0.0) return v;
    v /= norm;
    bool clipped = false;
    for (int i = 0; i < v.size(); ++i) {
      if (v[i] > 0.2) {
        v[i] = 0.2;
        clipped = true;
      }
    }
    if (!clipped) return v;
  }
  return v;
}

Descriptor128 merge_and_normalize(const std::vector<Descriptor128>& partials) {
  Descriptor128 sum = Descriptor128::Zero();
  for (const auto& p : partials) sum += p;
  return normalize_descriptor(sum);
}

}  // namespace

LocalFrame resolve_frame(const Pyramid& pyr, const std::vector<double>& sigmas,
                         const InterestPoint& pt) {
  if (pt.octave < 0 || static_cast<std::size_t>(pt.octave) >= pyr.octaves.size())
    throw DataError("interest point references a missing octave");
  const Octave& oct = pyr.octaves[static_cast<std::size_t>(pt.octave)];
  const double inv = std::ldexp(1.0, -pt.octave);
  LocalFrame frame;
  frame.x = pt.x * inv;
  frame.y = pt.y * inv;
  frame.sigma = pt.sigma * inv;
  std::size_t best = 0;
  double best_gap = std::abs(sigmas[0] - frame.sigma);
  for (std::size_t k = 1; k < sigmas.size(); ++k) {
    const double gap = std::abs(sigmas[k] - frame.sigma);
    if (gap < best_gap) {
      best_gap = gap;
      best = k;
    }
  }
  frame.level = &oct.gauss[best];
  return frame;
}

std::vector<double> dominant_orientations(const ImageArray& level, double x, double y,
                                          double sigma) {
  const double radius = 3.96 * sigma;
  const double window = 1.5 * sigma;
  const double denom = 2.0 * window * window;
  const int w = static_cast<int>(level.cols());
  const int h = static_cast<int>(level.rows());

  double hist[kOrientationBins] = {0.0};
  const int x_lo = std::max(1, static_cast<int>(std::ceil(x - radius)));
  const int x_hi = std::min(w - 2, static_cast<int>(std::floor(x + radius)));
  const int y_lo = std::max(1, static_cast<int>(std::ceil(y - radius)));
  const int y_hi = std::min(h - 2, static_cast<int>(std::floor(y + radius)));

  for (int iy = y_lo; iy <= y_hi; ++iy) {
    for (int ix = x_lo; ix <= x_hi; ++ix) {
      const double dx = ix - x;
      const double dy = iy - y;
      const double dist2 = dx * dx + dy * dy;
      if (dist2 >= radius * radius) continue;
      const double gx = 0.5 * (level(iy, ix + 1) - level(iy, ix - 1));
      const double gy = 0.5 * (level(iy + 1, ix) - level(iy - 1, ix));
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      const double angle = wrap_angle(std::atan2(gy, gx));
      // Bin centers sit at b * width so an exact 0-gradient lands mid-bin.
      int bin = static_cast<int>(std::floor(angle / kTwoPi * kOrientationBins + 0.5)) %
                kOrientationBins;
      hist[bin] += mag * std::exp(-dist2 / denom);
    }
  }

  // Two box-smoothing passes stabilize peak selection under resampling.
  for (int pass = 0; pass < 2; ++pass) {
    double smoothed[kOrientationBins];
    for (int b = 0; b < kOrientationBins; ++b) {
      const double l = hist[(b + kOrientationBins - 1) % kOrientationBins];
      const double r = hist[(b + 1) % kOrientationBins];
      smoothed[b] = (l + hist[b] + r) / 3.0;
    }
    for (int b = 0; b < kOrientationBins; ++b) hist[b] = smoothed[b];
  }

  double peak = 0.0;
  for (double v : hist) peak = std::max(peak, v);
  if (peak == 0.0) return {0.0};

  std::vector<double> thetas;
  const double bin_width = kTwoPi / kOrientationBins;
  for (int b = 0; b < kOrientationBins; ++b) {
    const double v = hist[b];
    const double l = hist[(b + kOrientationBins - 1) % kOrientationBins];
    const double r = hist[(b + 1) % kOrientationBins];
    if (v <= 0.8 * peak || v < l || v < r) continue;
    const double denom_fit = l - 2.0 * v + r;
    const double delta = std::abs(denom_fit) > 1e-12 ? 0.5 * (l - r) / denom_fit : 0.0;
    thetas.push_back(wrap_angle((b + delta) * bin_width));
  }
  if (thetas.empty()) thetas.push_back(0.0);
  return thetas;
}

Descriptor128 describe(const ImageArray& level, double x, double y, double sigma, double theta) {
  const PatchGeometry g = make_geometry(sigma, theta);
  const int n_sub = g.sub_per_axis * g.sub_per_axis;
  std::vector<Descriptor128> partials(static_cast<std::size_t>(n_sub));
  for (int sp = 0; sp < n_sub; ++sp)
    partials[static_cast<std::size_t>(sp)] = subpatch_partial(level, x, y, theta, g, sp);
  return merge_and_normalize(partials);
}

std::vector<OrientedPoint> assign_orientations(const Pyramid& pyr,
                                               const std::vector<double>& sigmas,
                                               const std::vector<InterestPoint>& points,
                                               const Engine& eng) {
  auto per_point = par_for_items(points, [&](const InterestPoint& pt) {
    const LocalFrame f = resolve_frame(pyr, sigmas, pt);
    return dominant_orientations(*f.level, f.x, f.y, f.sigma);
  }, eng);

  std::vector<OrientedPoint> out;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (double theta : per_point[i]) out.push_back({points[i], theta});
  return out;
}

std::vector<RawDescriptor> describe_batch(const Pyramid& pyr, const std::vector<double>& sigmas,
                                          const std::vector<OrientedPoint>& points,
                                          const Engine& eng) {
  struct WorkItem {
    std::size_t point = 0;
    int sub = 0;
  };

  std::vector<LocalFrame> frames(points.size());
  std::vector<PatchGeometry> geoms(points.size());
  std::vector<std::size_t> partial_base(points.size() + 1, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    frames[i] = resolve_frame(pyr, sigmas, points[i].pt);
    geoms[i] = make_geometry(frames[i].sigma, points[i].theta);
    partial_base[i + 1] =
        partial_base[i] + static_cast<std::size_t>(geoms[i].sub_per_axis) * geoms[i].sub_per_axis;
  }

  std::vector<WorkItem> items;
  items.reserve(partial_base.back());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int n_sub = geoms[i].sub_per_axis * geoms[i].sub_per_axis;
    for (int sp = 0; sp < n_sub; ++sp) items.push_back({i, sp});
  }

  // Phase 1: every (point, sub-patch) histogram independently.
  auto partials = par_for_items(items, [&](const WorkItem& wi) {
    const LocalFrame& f = frames[wi.point];
    return subpatch_partial(*f.level, f.x, f.y, points[wi.point].theta, geoms[wi.point], wi.sub);
  }, eng);

  // Phase 2: merge per point in sub-patch index order.
  std::vector<std::size_t> idx(points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto merged = par_for_items(idx, [&](const std::size_t& i) {
    std::vector<Descriptor128> mine(partials.begin() + static_cast<std::ptrdiff_t>(partial_base[i]),
                                    partials.begin() + static_cast<std::ptrdiff_t>(partial_base[i + 1]));
    return merge_and_normalize(mine);
  }, eng);

  std::vector<RawDescriptor> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i].values = merged[i];
    out[i].point = points[i];
  }
  return out;
}

}  // namespace cdvz
