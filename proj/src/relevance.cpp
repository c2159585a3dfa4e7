#include "cdvz/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "cdvz/common.hpp"

namespace cdvz {

double FeatureStats::value(int characteristic) const {
  switch (characteristic) {
    case 0: return sigma;
    case 1: return p;
    case 2: return d;
    case 3: return rho;
    case 4: return p_ss;
    default: throw DataError("characteristic index out of range");
  }
}

double LookupTable::operator()(double x) const {
  // upper_bound over edges; clamp outside the covered range.
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  std::ptrdiff_t bin = (it - edges.begin()) - 1;
  bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(values.size()) - 1);
  return values[static_cast<std::size_t>(bin)];
}

void LookupTable::validate() const {
  if (values.empty() || edges.size() != values.size() + 1)
    throw DataError("lookup table needs B+1 edges for B values");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw DataError("lookup table edges must be increasing");
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("lookup table values must lie in [0, 1]");
}

void RelevanceModel::validate() const {
  for (const auto& t : tables) t.validate();
}

RelevanceModel RelevanceModel::uniform() {
  RelevanceModel m;
  for (auto& t : m.tables) {
    t.edges = {0.0, 1.0};
    t.values = {1.0};
  }
  return m;
}

double relevance(const FeatureStats& stats, const RelevanceModel& model) {
  double score = 1.0;
  for (int c = 0; c < kNumCharacteristics; ++c)
    score *= model.tables[static_cast<std::size_t>(c)](stats.value(c));
  return score;
}

void fill_center_distance(std::vector<InterestPoint>& points, int width, int height) {
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  const double half_diag = 0.5 * std::hypot(static_cast<double>(width - 1), static_cast<double>(height - 1));
  for (auto& pt : points) {
    const double dist = std::hypot(pt.x - cx, pt.y - cy);
    pt.d = half_diag > 0.0 ? std::min(dist / half_diag, 1.0) : 0.0;
  }
}

std::vector<InterestPoint> select_top(const std::vector<InterestPoint>& points,
                                      const RelevanceModel& model, std::size_t n) {
  if (n < 1) throw DataError("selection budget must be at least 1");
  std::vector<std::pair<double, std::size_t>> scored(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    scored[i] = {relevance(FeatureStats::from(points[i]), model), i};

  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    const InterestPoint& pa = points[a.second];
    const InterestPoint& pb = points[b.second];
    const double ap = std::abs(pa.p), bp = std::abs(pb.p);
    if (ap != bp) return ap > bp;
    if (pa.y != pb.y) return pa.y < pb.y;
    if (pa.x != pb.x) return pa.x < pb.x;
    return a.second < b.second;
  });

  std::vector<InterestPoint> out;
  out.reserve(std::min(n, points.size()));
  for (std::size_t i = 0; i < scored.size() && i < n; ++i) out.push_back(points[scored[i].second]);
  return out;
}

RelevanceModel train_relevance_tables(const std::vector<LabeledStats>& samples, int bins,
                                      int min_bin_samples) {
  if (samples.empty()) throw DataError("relevance training corpus is empty");
  if (bins < 1) throw DataError("bin count must be positive");

  std::size_t matched_total = 0;
  for (const auto& s : samples) matched_total += s.matched ? 1u : 0u;
  const double global_rate = static_cast<double>(matched_total) / static_cast<double>(samples.size());

  RelevanceModel model;
  for (int c = 0; c < kNumCharacteristics; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
      const double v = s.stats.value(c);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(hi > lo)) {  // constant characteristic: single degenerate bin
      lo -= 0.5;
      hi += 0.5;
    }

    LookupTable table;
    table.edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int b = 0; b <= bins; ++b)
      table.edges[static_cast<std::size_t>(b)] = lo + (hi - lo) * b / bins;

    std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
    std::vector<std::size_t> hits(static_cast<std::size_t>(bins), 0);
    const double width = (hi - lo) / bins;
    for (const auto& s : samples) {
      const double v = s.stats.value(c);
      auto b = static_cast<std::ptrdiff_t>((v - lo) / width);
      b = std::clamp<std::ptrdiff_t>(b, 0, bins - 1);
      count[static_cast<std::size_t>(b)] += 1;
      hits[static_cast<std::size_t>(b)] += s.matched ? 1u : 0u;
    }

    table.values.resize(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) {
      const auto i = static_cast<std::size_t>(b);
      table.values[i] = count[i] < static_cast<std::size_t>(min_bin_samples)
                            ? global_rate
                            : static_cast<double>(hits[i]) / static_cast<double>(count[i]);
    }
    model.tables[static_cast<std::size_t>(c)] = std::move(table);
  }
  model.validate();
  return model;
}

std::vector<LabeledStats> label_matches_by_geometry(const std::vector<InterestPoint>& a,
                                                    const std::vector<InterestPoint>& b,
                                                    const std::vector<MappedPoint>& a_mapped_into_b,
                                                    double xy_tol, double ratio_tol) {
  if (a.size() != a_mapped_into_b.size())
    throw DataError("mapped point list must parallel the source points");
  std::vector<LabeledStats> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const MappedPoint& m = a_mapped_into_b[i];
    bool matched = false;
    for (const auto& q : b) {
      if (std::hypot(q.x - m.x, q.y - m.y) > xy_tol) continue;
      const double ratio = q.sigma / m.sigma;
      if (ratio >= 1.0 / ratio_tol && ratio <= ratio_tol) {
        matched = true;
        break;
      }
    }
    out.push_back({FeatureStats::from(a[i]), matched});
  }
  return out;
}

void write_relevance(const RelevanceModel& model, std::ostream& out) {
  out << "CDVZ-RELEVANCE 1\n";
  for (int c = 0; c < kNumCharacteristics; ++c) {
    const auto& t = model.tables[static_cast<std::size_t>(c)];
    out << kCharacteristicNames[static_cast<std::size_t>(c)] << " bins:";
    for (double e : t.edges) out << " " << format_double(e);
    out << " ; values:";
    for (double v : t.values) out << " " << format_double(v);
    out << "\n";
  }
}

RelevanceModel read_relevance(std::istream& in) {
  std::string header;
  std::getline(in, header);
  if (header != "CDVZ-RELEVANCE 1") throw DataError("unsupported relevance table version");
  RelevanceModel model;
  std::array<bool, kNumCharacteristics> seen{};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, kw;
    ls >> name >> kw;
    if (kw != "bins:") throw DataError("malformed relevance table line: " + line);
    int idx = -1;
    for (int c = 0; c < kNumCharacteristics; ++c)
      if (name == kCharacteristicNames[static_cast<std::size_t>(c)]) idx = c;
    if (idx < 0) throw DataError("unknown characteristic: " + name);

    LookupTable t;
    std::string tok;
    while (ls >> tok && tok != ";") t.edges.push_back(parse_double(tok));
    ls >> kw;
    if (kw != "values:") throw DataError("malformed relevance table line: " + line);
    while (ls >> tok) t.values.push_back(parse_double(tok));
    t.validate();
    model.tables[static_cast<std::size_t>(idx)] = std::move(t);
    seen[static_cast<std::size_t>(idx)] = true;
  }
  for (bool s : seen)
    if (!s) throw DataError("relevance table file is missing a characteristic");
  return model;
}

void save_relevance(const RelevanceModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write relevance tables: " + path.string());
  write_relevance(model, out);
}

RelevanceModel load_relevance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read relevance tables: " + path.string());
  return read_relevance(in);
}

}  // namespace cdvz
