#include "cdvz/parallel.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace cdvz {

int default_workers() {
  if (const char* env = std::getenv("CDVZ_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

int Engine::resolved_workers() const { return workers >= 1 ? workers : default_workers(); }

TileGrid make_tile_grid(int image_w, int image_h, int tile_size, int halo) {
  if (image_w < 1 || image_h < 1) throw DataError("tile grid over empty image");
  if (tile_size < 1) throw DataError("tile size must be positive");
  TileGrid grid;
  grid.image_w = image_w;
  grid.image_h = image_h;
  grid.tile_size = tile_size;
  grid.halo = halo;
  for (int y = 0; y < image_h; y += tile_size)
    for (int x = 0; x < image_w; x += tile_size)
      grid.tiles.push_back({x, y, std::min(tile_size, image_w - x), std::min(tile_size, image_h - y)});
  return grid;
}

namespace detail {

void run_indexed(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (workers < 1) workers = 1;
  if (workers == 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::size_t first_err_index = n;
  std::exception_ptr first_err;

  // Every index runs regardless of failures elsewhere, so the reported
  // error is always the lowest-index one independent of scheduling.
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (i < first_err_index) {
          first_err_index = i;
          first_err = std::current_exception();
        }
      }
    }
  };

  std::vector<std::thread> pool;
  const int spawn = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), n));
  pool.reserve(static_cast<std::size_t>(spawn));
  for (int t = 0; t < spawn; ++t) pool.emplace_back(body);
  for (auto& th : pool) th.join();

  if (first_err) std::rethrow_exception(first_err);
}

double monotonic_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

}  // namespace detail

void StageTimings::add(const std::string& stage, double ms) {
  for (auto& e : entries_) {
    if (e.stage == stage) {
      e.calls += 1;
      e.total_ms += ms;
      return;
    }
  }
  entries_.push_back({stage, 1, ms});
}

std::vector<StageTimings::Entry> StageTimings::entries() const { return entries_; }

double StageTimings::total_ms() const {
  double sum = 0.0;
  for (const auto& e : entries_) sum += e.total_ms;
  return sum;
}

std::string StageTimings::to_csv() const {
  std::ostringstream out;
  out << "stage,calls,total_ms,percent\n";
  const double sum = total_ms();
  for (const auto& e : entries_) {
    const double pct = sum > 0.0 ? 100.0 * e.total_ms / sum : 0.0;
    char line[160];
    std::snprintf(line, sizeof(line), "%s,%lld,%.3f,%.3f\n", e.stage.c_str(),
                  static_cast<long long>(e.calls), e.total_ms, pct);
    out << line;
  }
  return out.str();
}

void StageTimings::clear() { entries_.clear(); }

}  // namespace cdvz
