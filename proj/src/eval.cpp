#include "cdvz/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "cdvz/common.hpp"
#include "cdvz/container.hpp"

namespace cdvz {

namespace {

// Nearest and second-nearest by (distance, index).
struct Nearest {
  int best = -1;
  int best_dist = std::numeric_limits<int>::max();
  int second_dist = std::numeric_limits<int>::max();
};

Nearest nearest_of(const TernaryCode& code, const std::vector<TernaryCode>& pool) {
  Nearest n;
  for (std::size_t j = 0; j < pool.size(); ++j) {
    const int d = ternary_distance(code, pool[j]);
    if (d < n.best_dist) {
      n.second_dist = n.best_dist;
      n.best_dist = d;
      n.best = static_cast<int>(j);
    } else if (d < n.second_dist) {
      n.second_dist = d;
    }
  }
  return n;
}

bool passes_ratio(const Nearest& n, std::size_t pool_size, double ratio) {
  if (n.best < 0) return false;
  if (pool_size < 2) return true;  // no second candidate to compare against
  return n.best_dist < ratio * n.second_dist;
}

}  // namespace

int count_local_matches(const std::vector<TernaryCode>& a, const std::vector<TernaryCode>& b,
                        double ratio_test) {
  if (a.empty() || b.empty()) return 0;
  std::vector<Nearest> a_to_b(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) a_to_b[i] = nearest_of(a[i], b);
  std::vector<Nearest> b_to_a(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) b_to_a[j] = nearest_of(b[j], a);

  int count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Nearest& fwd = a_to_b[i];
    if (!passes_ratio(fwd, b.size(), ratio_test)) continue;
    const Nearest& rev = b_to_a[static_cast<std::size_t>(fwd.best)];
    if (rev.best != static_cast<int>(i) || !passes_ratio(rev, a.size(), ratio_test)) continue;
    ++count;
  }
  return count;
}

MatchResult match_pair(const EncodedImage& a, const EncodedImage& b, const MatchOptions& opts) {
  if (a.model_crc != b.model_crc)
    throw DataError("containers were encoded with different model bundles");
  if (a.mode_id != b.mode_id) throw DataError("containers use different modes");
  MatchResult r;
  r.global_similarity = scfv_similarity(a.global_desc, b.global_desc);
  r.local_match_count = count_local_matches(a.codes, b.codes, opts.ratio_test);
  return r;
}

RankedList retrieve(const EncodedImage& query, const std::string& query_id,
                    const std::vector<std::pair<std::string, const EncodedImage*>>& index,
                    const MatchOptions& opts, const Engine& eng) {
  if (index.empty()) throw DataError("retrieval index is empty");

  auto sims = par_for_items(index, [&](const std::pair<std::string, const EncodedImage*>& item) {
    if (item.second->model_crc != query.model_crc)
      throw DataError("index container was encoded with a different model bundle");
    if (item.second->mode_id != query.mode_id) throw DataError("index container mode mismatch");
    return scfv_similarity(query.global_desc, item.second->global_desc);
  }, eng);

  std::vector<std::size_t> order(index.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (sims[x] != sims[y]) return sims[x] > sims[y];
    return index[x].first < index[y].first;
  });

  const std::size_t head = std::min<std::size_t>(order.size(),
                                                 static_cast<std::size_t>(std::max(0, opts.rerank_depth)));
  std::vector<std::size_t> head_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(head));
  auto local_counts = par_for_items(head_idx, [&](const std::size_t& i) {
    return count_local_matches(query.codes, index[i].second->codes, opts.ratio_test);
  }, eng);

  std::vector<std::size_t> head_rank(head);
  for (std::size_t r = 0; r < head; ++r) head_rank[r] = r;
  std::sort(head_rank.begin(), head_rank.end(), [&](std::size_t x, std::size_t y) {
    if (local_counts[x] != local_counts[y]) return local_counts[x] > local_counts[y];
    const std::size_t ix = head_idx[x], iy = head_idx[y];
    if (sims[ix] != sims[iy]) return sims[ix] > sims[iy];
    return index[ix].first < index[iy].first;
  });

  RankedList out;
  out.query = query_id;
  out.items.reserve(index.size());
  for (std::size_t r = 0; r < head; ++r) {
    const std::size_t i = head_idx[head_rank[r]];
    out.items.push_back({index[i].first,
                         local_counts[head_rank[r]] + (sims[i] + 1.0) / 2.0});
  }
  for (std::size_t r = head; r < order.size(); ++r) {
    const std::size_t i = order[r];
    out.items.push_back({index[i].first, (sims[i] + 1.0) / 2.0 - 1.0});
  }
  return out;
}

double average_precision(const RankedList& ranked, const std::set<std::string>& relevant) {
  if (relevant.empty()) throw DataError("average precision needs at least one relevant item");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < ranked.items.size(); ++k) {
    if (relevant.count(ranked.items[k].id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double compute_map(const std::vector<RankedList>& ranked_lists,
                   const RelevanceJudgments& judgments) {
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& ranked : ranked_lists) {
    const auto it = judgments.find(ranked.query);
    if (it == judgments.end() || it->second.empty()) {
      std::cerr << "warning: query '" << ranked.query << "' has no relevant items, excluded\n";
      continue;
    }
    sum += average_precision(ranked, it->second);
    ++used;
  }
  if (used == 0) throw DataError("no query has relevant judgments");
  return sum / static_cast<double>(used);
}

double RocCurve::tpr_at_fpr(double fpr) const {
  if (points.empty()) throw DataError("empty ROC curve");
  // Upper envelope per fpr, then linear interpolation.
  std::vector<RocPoint> env;
  for (const auto& p : points) {
    if (!env.empty() && env.back().fpr == p.fpr)
      env.back().tpr = std::max(env.back().tpr, p.tpr);
    else
      env.push_back(p);
  }
  if (fpr <= env.front().fpr) return env.front().tpr;
  for (std::size_t i = 1; i < env.size(); ++i) {
    if (fpr <= env[i].fpr) {
      const double span = env[i].fpr - env[i - 1].fpr;
      if (span <= 0.0) return env[i].tpr;
      const double t = (fpr - env[i - 1].fpr) / span;
      return env[i - 1].tpr + t * (env[i].tpr - env[i - 1].tpr);
    }
  }
  return env.back().tpr;
}

RocCurve compute_roc(const std::vector<double>& scores, const std::vector<int>& labels,
                     std::vector<double> thresholds) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  std::size_t positives = 0, negatives = 0;
  for (int l : labels) {
    if (l == 1) ++positives;
    else if (l == 0) ++negatives;
    else throw DataError("labels must be 0 or 1");
  }
  if (positives == 0 || negatives == 0)
    throw DataError("ROC needs at least one positive and one negative pair");

  if (thresholds.empty()) {
    thresholds = scores;
    thresholds.push_back(std::numeric_limits<double>::infinity());
  }
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  RocCurve curve;
  curve.points.reserve(thresholds.size());
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        if (labels[i] == 1) ++tp;
        else ++fp;
      }
    }
    curve.points.push_back({t, static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives)});
  }
  std::sort(curve.points.begin(), curve.points.end(), [](const RocPoint& a, const RocPoint& b) {
    if (a.fpr != b.fpr) return a.fpr < b.fpr;
    return a.tpr < b.tpr;
  });
  return curve;
}

void export_csv(const CsvTable& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write csv: " + path.string());
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i].find_first_of(",\n") != std::string::npos)
        throw DataError("csv cells may not contain commas or newlines");
      out << (i ? "," : "") << row[i];
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path.string());
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read csv: " + path.string());
  CsvTable rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      if (comma == std::string::npos) {
        row.push_back(line.substr(start));
        break;
      }
      row.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

CsvTable roc_to_csv(const RocCurve& curve) {
  CsvTable rows;
  rows.push_back({"threshold", "fpr", "tpr"});
  for (const auto& p : curve.points)
    rows.push_back({format_double(p.threshold), format_double(p.fpr), format_double(p.tpr)});
  return rows;
}

RelevanceJudgments load_judgments(const std::filesystem::path& path) {
  RelevanceJudgments out;
  const CsvTable rows = read_csv(path);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (r == 0 && row.size() == 2 && row[0] == "query_id" && row[1] == "relevant_id") continue;
    if (row.size() != 2) throw DataError("ground truth rows must be query_id,relevant_id");
    out[row[0]].insert(row[1]);
  }
  return out;
}

}  // namespace cdvz
