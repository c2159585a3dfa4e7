#include <doctest.h>

#include <filesystem>
#include <random>

#include "cdvz/common.hpp"
#include "cdvz/eval.hpp"

using namespace cdvz;

namespace {

RankedList ranked(const std::string& query, const std::vector<std::string>& ids) {
  RankedList list;
  list.query = query;
  double score = static_cast<double>(ids.size());
  for (const auto& id : ids) list.items.push_back({id, score--});
  return list;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("perfect rankings score mAP 1") {
  const std::vector<RankedList> lists = {ranked("q1", {"a", "b", "c"}),
                                         ranked("q2", {"d", "e"})};
  const RelevanceJudgments judgments = {{"q1", {"a"}}, {"q2", {"d"}}};
  CHECK(compute_map(lists, judgments) == 1.0);
}

TEST_CASE("one relevant item at rank 2 of 10 gives AP 0.5") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("item" + std::to_string(i));
  const RankedList list = ranked("q", ids);
  CHECK(average_precision(list, {"item1"}) == 0.5);
}

TEST_CASE("two relevant at ranks 1 and 3 give AP 5/6") {
  const RankedList list = ranked("q", {"a", "b", "c", "d"});
  const double ap = average_precision(list, {"a", "c"});
  CHECK(ap == doctest::Approx((1.0 / 1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
  CHECK(ap == doctest::Approx(0.8333).epsilon(1e-3));
}

TEST_CASE("appending irrelevant tail items never changes mAP") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> ids;
    for (int i = 0; i < 12; ++i) ids.push_back("x" + std::to_string(i));
    std::shuffle(ids.begin(), ids.end(), rng);
    std::set<std::string> relevant = {"x0", "x5", "x7"};

    RankedList base = ranked("q", ids);
    RankedList extended = base;
    for (int i = 0; i < 9; ++i)
      extended.items.push_back({"tail" + std::to_string(i), -1.0 - i});

    const RelevanceJudgments judgments = {{"q", relevant}};
    CHECK(compute_map({base}, judgments) == compute_map({extended}, judgments));
  }
}

TEST_CASE("queries without relevant items are excluded with a warning") {
  const std::vector<RankedList> lists = {ranked("good", {"a"}), ranked("orphan", {"b"})};
  const RelevanceJudgments judgments = {{"good", {"a"}}};
  CHECK(compute_map(lists, judgments) == 1.0);
  CHECK_THROWS_AS(compute_map({ranked("orphan", {"b"})}, judgments), DataError);
}

TEST_CASE("separable scores pass through (0, 1)") {
  const std::vector<double> scores = {0.9, 0.85, 0.2, 0.1};
  const std::vector<int> labels = {1, 1, 0, 0};
  const RocCurve curve = compute_roc(scores, labels);
  bool has_perfect = false;
  for (const auto& p : curve.points)
    if (p.fpr == 0.0 && p.tpr == 1.0) has_perfect = true;
  CHECK(has_perfect);
}

TEST_CASE("uniform scores collapse to the two endpoints") {
  const std::vector<double> scores = {0.5, 0.5, 0.5, 0.5};
  const std::vector<int> labels = {1, 0, 1, 0};
  const RocCurve curve = compute_roc(scores, labels);
  REQUIRE(curve.points.size() == 2);
  CHECK(curve.points.front().fpr == 0.0);
  CHECK(curve.points.front().tpr == 0.0);
  CHECK(curve.points.back().fpr == 1.0);
  CHECK(curve.points.back().tpr == 1.0);
}

TEST_CASE("the worked four-pair example at threshold 0.5") {
  const std::vector<double> scores = {0.9, 0.8, 0.4, 0.1};
  const std::vector<int> labels = {1, 1, 0, 0};
  const RocCurve curve = compute_roc(scores, labels, {0.5});
  REQUIRE(curve.points.size() == 1);
  CHECK(curve.points[0].tpr == 1.0);
  CHECK(curve.points[0].fpr == 0.0);
}

TEST_CASE("roc is monotone non-decreasing in tpr as fpr grows") {
  std::mt19937_64 rng(5);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) {
    const int label = static_cast<int>(rng() % 2);
    scores.push_back((rng() % 1000) / 1000.0 + 0.3 * label);
    labels.push_back(label);
  }
  const RocCurve curve = compute_roc(scores, labels);
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    CHECK(curve.points[i].fpr >= curve.points[i - 1].fpr);
    CHECK(curve.points[i].tpr >= curve.points[i - 1].tpr - 1e-12);
  }
}

TEST_CASE("degenerate label sets are rejected") {
  CHECK_THROWS_AS(compute_roc({0.1, 0.2}, {1, 1}), DataError);
  CHECK_THROWS_AS(compute_roc({0.1, 0.2}, {0, 0}), DataError);
  CHECK_THROWS_AS(compute_roc({0.1}, {0, 1}), DataError);
}

TEST_CASE("tpr at fpr 0.01 interpolates linearly") {
  // 100 pairs with overlapping score ranges so the curve bends between
  // fpr = 0 and the first false positive.
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) {
    scores.push_back(0.3 + (i + 1) / 50.0);
    labels.push_back(1);
    scores.push_back(-0.5 + (i + 1) / 50.0);
    labels.push_back(0);
  }
  const RocCurve curve = compute_roc(scores, labels);

  // Oracle: direct confusion counts just above and at the top negative.
  auto rates_at = [&](double t) {
    int tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) ((labels[i] == 1) ? tp : fp) += 1;
    }
    return std::pair<double, double>(fp / 50.0, tp / 50.0);
  };
  const auto [fpr_a, tpr_a] = rates_at(0.52);  // lowest threshold with fpr 0
  const auto [fpr_b, tpr_b] = rates_at(0.50);  // includes the top negative
  REQUIRE(fpr_a == 0.0);
  REQUIRE(fpr_b == doctest::Approx(0.02));
  REQUIRE(tpr_b > tpr_a);
  const double expected = tpr_a + (0.01 - fpr_a) / (fpr_b - fpr_a) * (tpr_b - tpr_a);
  CHECK(curve.tpr_at_fpr(0.01) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("csv export") {
  const auto dir = std::filesystem::temp_directory_path() / "cdvz_tests";
  std::filesystem::create_directories(dir);

  SUBCASE("empty result sets write a header-only file") {
    const auto path = dir / "empty.csv";
    export_csv({{"stage", "calls", "total_ms", "percent"}}, path);
    const CsvTable back = read_csv(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0][0] == "stage");
  }

  SUBCASE("a three-point roc writes four lines") {
    RocCurve curve;
    curve.points = {{2.0, 0.0, 0.5}, {1.0, 0.25, 0.75}, {0.0, 1.0, 1.0}};
    const auto path = dir / "roc.csv";
    export_csv(roc_to_csv(curve), path);
    CHECK(read_csv(path).size() == 4);
  }

  SUBCASE("numeric cells round-trip bit-exactly") {
    const double values[] = {0.8888888888888888, 1.0 / 3.0, 1e-17, 123456.789};
    CsvTable rows;
    rows.push_back({"name", "value"});
    for (double v : values) rows.push_back({"v", format_double(v)});
    const auto path = dir / "map.csv";
    export_csv(rows, path);
    const CsvTable back = read_csv(path);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(parse_double(back[i + 1][1]) == values[i]);
  }

  SUBCASE("cells with commas are rejected") {
    CHECK_THROWS_AS(export_csv({{"a,b"}}, dir / "bad.csv"), DataError);
  }
}

TEST_CASE("ground truth files parse into judgments") {
  const auto dir = std::filesystem::temp_directory_path() / "cdvz_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / "gt.csv";
  export_csv({{"query_id", "relevant_id"}, {"q1", "a"}, {"q1", "b"}, {"q2", "c"}}, path);
  const RelevanceJudgments j = load_judgments(path);
  CHECK(j.at("q1") == std::set<std::string>{"a", "b"});
  CHECK(j.at("q2") == std::set<std::string>{"c"});
}

}  // TEST_SUITE
