#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cdvz/parallel.hpp"
#include "cdvz/scfv.hpp"
#include "cdvz/transform_coding.hpp"

namespace cdvz {

struct EncodedImage;  // container.hpp

struct MatchResult {
  double global_similarity = -1.0;
  int local_match_count = 0;
};

struct RankedItem {
  std::string id;
  double score = 0.0;
};

struct RankedList {
  std::string query;
  std::vector<RankedItem> items;  // score non-increasing, ties by id ascending
};

struct MatchOptions {
  double ratio_test = 0.85;  // accepted when best < ratio * second-best distance
  int rerank_depth = 50;
};

// Mutual-nearest ternary matches passing the distance ratio test.
int count_local_matches(const std::vector<TernaryCode>& a, const std::vector<TernaryCode>& b,
                        double ratio_test = 0.85);

// Global similarity plus local match count for one pair. Throws when the
// containers come from different model bundles or modes.
MatchResult match_pair(const EncodedImage& a, const EncodedImage& b,
                       const MatchOptions& opts = {});

// Ranks the index by global similarity, then re-ranks the top candidates by
// local match count (global score as tiebreak). Re-ranking reorders the head
// set without changing its membership. The reported score is
// local_match_count + (similarity + 1) / 2 inside the re-ranked head and
// (similarity + 1) / 2 - 1 beyond it, which keeps scores non-increasing.
RankedList retrieve(const EncodedImage& query, const std::string& query_id,
                    const std::vector<std::pair<std::string, const EncodedImage*>>& index,
                    const MatchOptions& opts = {}, const Engine& eng = {});

using RelevanceJudgments = std::map<std::string, std::set<std::string>>;

// Discrete average precision: mean of precision@k over the ranks of relevant
// items, divided by the judged relevant count. Queries without judged
// relevant items are skipped with a warning on stderr.
double average_precision(const RankedList& ranked, const std::set<std::string>& relevant);
double compute_map(const std::vector<RankedList>& ranked_lists,
                   const RelevanceJudgments& judgments);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // fpr ascending from (0,0) to (1,1)
  double tpr_at_fpr(double fpr) const;  // linear interpolation
};

// Confusion-rate sweep over the given thresholds (score >= t is positive);
// thresholds default to the unique scores. Needs both label classes.
RocCurve compute_roc(const std::vector<double>& scores, const std::vector<int>& labels,
                     std::vector<double> thresholds = {});

// Minimal CSV with deterministic column order; numbers round-trip exactly.
using CsvTable = std::vector<std::vector<std::string>>;
void export_csv(const CsvTable& rows, const std::filesystem::path& path);
CsvTable read_csv(const std::filesystem::path& path);
CsvTable roc_to_csv(const RocCurve& curve);

// Ground truth file: "query_id,relevant_id" rows. Pair labels:
// "id_a,id_b,label" rows with binary labels.
RelevanceJudgments load_judgments(const std::filesystem::path& path);

}  // namespace cdvz
