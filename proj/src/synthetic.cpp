#include "cdvz/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "cdvz/common.hpp"

namespace cdvz {

GrayImage synth_image(std::uint64_t seed, int width, int height) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ImageArray canvas = ImageArray::Zero(height, width);

  const int n_blobs = 8 + static_cast<int>(rng() % 7);
  for (int b = 0; b < n_blobs; ++b) {
    const double cx = (0.12 + 0.76 * unit(rng)) * width;
    const double cy = (0.12 + 0.76 * unit(rng)) * height;
    const double s = 2.0 + 10.0 * unit(rng);
    const double amp = (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.4 + 0.6 * unit(rng));
    const double denom = 2.0 * s * s;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        canvas(y, x) += amp * std::exp(-(dx * dx + dy * dy) / denom);
      }
  }

  const int n_waves = 5;
  for (int wv = 0; wv < n_waves; ++wv) {
    const double freq = 1.0 / (6.0 + 26.0 * unit(rng));
    const double angle = unit(rng) * std::numbers::pi;
    const double phase = unit(rng) * 2.0 * std::numbers::pi;
    const double amp = 0.08 + 0.14 * unit(rng);
    const double fx = std::cos(angle) * freq;
    const double fy = std::sin(angle) * freq;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        canvas(y, x) += amp * std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) + phase);
  }

  const double lo = canvas.minCoeff();
  const double hi = canvas.maxCoeff();
  GrayImage img;
  if (hi > lo)
    img.pix = 0.02 + 0.96 * (canvas - lo) / (hi - lo);
  else
    img.pix = ImageArray::Constant(height, width, 0.5);
  return img;
}

std::vector<GrayImage> synth_corpus(std::uint64_t seed, int count, int width, int height) {
  std::vector<GrayImage> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(synth_image(seed + static_cast<std::uint64_t>(i) * 0x9E3779B97F4A7C15ull, width, height));
  return out;
}

GrayImage rotate90(const GrayImage& img, int quarter_turns) {
  int k = quarter_turns % 4;
  if (k < 0) k += 4;
  GrayImage out = img;
  for (int turn = 0; turn < k; ++turn) {
    const int h = out.height();
    const int w = out.width();
    ImageArray rot(w, h);  // clockwise: width and height swap
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) rot(x, h - 1 - y) = out.pix(y, x);
    out.pix = std::move(rot);
  }
  return out;
}

GrayImage apply_transform(const GrayImage& img, const SynthTransform& t, const Engine& eng) {
  GrayImage out = rotate90(img, t.quarter_turns);
  if (t.scale != 1.0) {
    const int w = std::max(8, static_cast<int>(std::lround(out.width() * t.scale)));
    const int h = std::max(8, static_cast<int>(std::lround(out.height() * t.scale)));
    out = rescale_bilinear(out, w, h);
  }
  if (t.blur_sigma > 0.0) {
    out = gaussian_blur(out, t.blur_sigma, eng);
    out.pix = out.pix.min(1.0).max(0.0);
  }
  return out;
}

void map_point(const SynthTransform& t, int src_w, int src_h, double& x, double& y, double& sigma) {
  int w = src_w, h = src_h;
  int k = t.quarter_turns % 4;
  if (k < 0) k += 4;
  for (int turn = 0; turn < k; ++turn) {
    const double nx = h - 1 - y;
    const double ny = x;
    x = nx;
    y = ny;
    std::swap(w, h);
  }
  if (t.scale != 1.0) {
    const int out_w = std::max(8, static_cast<int>(std::lround(w * t.scale)));
    const int out_h = std::max(8, static_cast<int>(std::lround(h * t.scale)));
    // Half-pixel center alignment, matching rescale_bilinear.
    x = (x + 0.5) * out_w / w - 0.5;
    y = (y + 0.5) * out_h / h - 0.5;
    sigma *= 0.5 * (static_cast<double>(out_w) / w + static_cast<double>(out_h) / h);
  }
}

}  // namespace cdvz
