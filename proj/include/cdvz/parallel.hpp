#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

#include "cdvz/common.hpp"

namespace cdvz {

// Worker count from CDVZ_WORKERS, falling back to hardware concurrency.
int default_workers();

// Execution context threaded through every parallel stage. workers == 0
// resolves to default_workers(). All schedules are deterministic: outputs
// never depend on the worker count or on scheduling order.
struct Engine {
  int workers = 0;
  int tile_size = 32;
  int resolved_workers() const;
};

struct Tile {
  int x0 = 0, y0 = 0, w = 0, h = 0;
};

// Disjoint tiles covering a raster, plus the read-only halo each tile-local
// computation may touch around its own rectangle.
struct TileGrid {
  int image_w = 0;
  int image_h = 0;
  int tile_size = 0;
  int halo = 0;
  std::vector<Tile> tiles;  // row-major tile order
};

TileGrid make_tile_grid(int image_w, int image_h, int tile_size, int halo);

namespace detail {

// Runs fn(0..n-1) on up to `workers` threads. Indices are claimed from an
// atomic counter; any exception aborts the run and the lowest-index error
// is rethrown after all workers stop.
void run_indexed(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace detail

// Read access window for a tile kernel: the tile itself plus `halo` pixels,
// clipped to the image. Out-of-window reads throw in debug builds.
template <class Array>
class TileView {
 public:
  TileView(const Array& a, const Tile& t, int halo)
      : a_(&a),
        x_lo_(std::max(0, t.x0 - halo)),
        y_lo_(std::max(0, t.y0 - halo)),
        x_hi_(std::min(static_cast<int>(a.cols()) - 1, t.x0 + t.w - 1 + halo)),
        y_hi_(std::min(static_cast<int>(a.rows()) - 1, t.y0 + t.h - 1 + halo)) {}

  double operator()(int y, int x) const {
#ifndef NDEBUG
    if (x < x_lo_ || x > x_hi_ || y < y_lo_ || y > y_hi_)
      throw std::logic_error("tile kernel read outside its halo window");
#endif
    return (*a_)(y, x);
  }

 private:
  const Array* a_;
  int x_lo_, y_lo_, x_hi_, y_hi_;
};

// Applies `work` to every item, preserving input order in the result.
template <class T, class Fn>
auto par_for_items(const std::vector<T>& items, Fn&& work, const Engine& eng = {}) {
  using R = std::invoke_result_t<Fn&, const T&>;
  static_assert(!std::is_void_v<R>, "par_for_items expects a value-returning work function");
  std::vector<R> out(items.size());
  detail::run_indexed(items.size(), eng.resolved_workers(),
                      [&](std::size_t i) { out[i] = work(items[i]); });
  return out;
}

// Runs `kernel` once per tile and returns the per-tile results in ascending
// tile index order. Kernels must be pure over their tile + halo.
template <class Fn>
auto tile_map(const TileGrid& grid, Fn&& kernel, const Engine& eng = {}) {
  using R = std::invoke_result_t<Fn&, const Tile&>;
  std::vector<R> parts(grid.tiles.size());
  detail::run_indexed(grid.tiles.size(), eng.resolved_workers(),
                      [&](std::size_t i) { parts[i] = kernel(grid.tiles[i]); });
  return parts;
}

// Tile pass without per-tile results; the kernel writes its own tile region
// of a caller-owned output.
template <class Fn>
void tile_for(const TileGrid& grid, Fn&& kernel, const Engine& eng = {}) {
  detail::run_indexed(grid.tiles.size(), eng.resolved_workers(),
                      [&](std::size_t i) { kernel(grid.tiles[i]); });
}

template <class T>
std::vector<T> flatten(std::vector<std::vector<T>> parts) {
  std::vector<T> out;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  out.reserve(total);
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// Wall-clock accumulator for pipeline stages. Nested and repeated stages
// accumulate under the same label.
class StageTimings {
 public:
  struct Entry {
    std::string stage;
    std::int64_t calls = 0;
    double total_ms = 0.0;
  };

  void add(const std::string& stage, double ms);
  std::vector<Entry> entries() const;  // first-use order
  double total_ms() const;
  // "stage,calls,total_ms,percent" rows; percents sum to 100 up to rounding.
  std::string to_csv() const;
  void clear();

 private:
  std::vector<Entry> entries_;
};

namespace detail {
double monotonic_ms();
}

template <class Fn>
auto time_stage(StageTimings* timings, const std::string& label, Fn&& fn) {
  if (!timings) return fn();
  const double t0 = detail::monotonic_ms();
  if constexpr (std::is_void_v<std::invoke_result_t<Fn&>>) {
    fn();
    timings->add(label, detail::monotonic_ms() - t0);
  } else {
    auto result = fn();
    timings->add(label, detail::monotonic_ms() - t0);
    return result;
  }
}

}  // namespace cdvz
