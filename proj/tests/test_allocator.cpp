#include <doctest.h>

#include <cmath>
#include <random>

#include "anchorgen/allocator.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace anchorgen;

namespace {

RdPoint pt(std::int64_t size, double quality, const std::string& config = "c",
           int qp = 30) {
  return RdPoint{config, qp, size, quality};
}

// The two-sequence walkthrough used across suites.
std::vector<SequenceRdSet> two_sequence_fixture() {
  return {
      SequenceRdSet::create(
          "A", {pt(100, 0.90, "c", 40), pt(200, 0.95, "c", 32),
                pt(400, 0.97, "c", 24)}),
      SequenceRdSet::create("B",
                            {pt(100, 0.80, "c", 40), pt(300, 0.92, "c", 24)}),
  };
}

}  // namespace

TEST_CASE("submission_size matches the published arithmetic") {
  Budget vtm{1309062500.0, 0.019, 701528};
  CHECK(std::abs(submission_size(24830109, vtm) - 1307549370.105) < 0.5);

  Budget zero{1.0, 0.019, 0};
  CHECK(submission_size(0, zero) == 0.0);
  // 19 / 0.019 lands on 1000 exactly in double arithmetic.
  CHECK(submission_size(19, zero) == 1000.0);
}

TEST_CASE("relative_model_size reproduces the comparison-table column") {
  const double limit = 1309062500.0;
  const double vtm = relative_model_size(
      submission_size(24830109, {limit, 0.019, 701528}), limit);
  const double hm = relative_model_size(
      submission_size(24789559, {limit, 0.019, 355643}), limit);
  const double x265 = relative_model_size(
      submission_size(24864775, {limit, 0.019, 355643}), limit);
  CHECK(std::abs(vtm - 99.88) < 0.01);
  CHECK(std::abs(hm - 99.69) < 0.01);
  CHECK(std::abs(x265 - 100.00) < 0.01);
}

TEST_CASE("budget validation") {
  CHECK_THROWS_AS(Budget{0.0, 0.019, 0}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(Budget{1.0, 0.0, 0}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(Budget{1.0, 1.5, 0}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(Budget{1.0, 0.5, -1}.validate(), std::invalid_argument);
  CHECK_NOTHROW(Budget{1.0, 1.0, 0}.validate());
}

TEST_CASE("upper_hull keeps concave frontiers and applies tie rules") {
  SUBCASE("three increasing points with decreasing slopes all survive") {
    const std::vector<RdPoint> points{pt(100, 0.90), pt(200, 0.95),
                                      pt(400, 0.97)};
    CHECK(upper_hull(points) == std::vector<std::size_t>{0, 1, 2});
  }
  SUBCASE("dominated point is dropped") {
    const std::vector<RdPoint> points{pt(200, 0.50), pt(100, 0.60)};
    CHECK(upper_hull(points) == std::vector<std::size_t>{1});
  }
  SUBCASE("singleton") {
    CHECK(upper_hull({pt(123, 0.4)}) == std::vector<std::size_t>{0});
  }
  SUBCASE("middle point on the chord is dropped") {
    const std::vector<RdPoint> points{pt(100, 0.1), pt(200, 0.2),
                                      pt(300, 0.3)};
    CHECK(upper_hull(points) == std::vector<std::size_t>{0, 2});
  }
  SUBCASE("equal size keeps the higher quality") {
    const std::vector<RdPoint> points{pt(100, 0.5), pt(100, 0.7)};
    CHECK(upper_hull(points) == std::vector<std::size_t>{1});
  }
  SUBCASE("equal size and quality keeps the first by input order") {
    const std::vector<RdPoint> points{pt(100, 0.5, "a"), pt(100, 0.5, "b")};
    CHECK(upper_hull(points) == std::vector<std::size_t>{0});
  }
  SUBCASE("empty input is an error") {
    CHECK_THROWS_AS(upper_hull({}), std::invalid_argument);
  }
}

TEST_CASE("upper_hull agrees with the brute-force oracle") {
  std::mt19937 rng(20210401);
  std::uniform_int_distribution<int> count_dist(1, 10);
  std::uniform_int_distribution<std::int64_t> size_dist(1, 40);
  std::uniform_int_distribution<int> quality_dist(1, 30);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<RdPoint> points;
    const int n = count_dist(rng);
    for (int i = 0; i < n; ++i) {
      // Coarse grids force size and quality ties.
      points.push_back(pt(size_dist(rng), quality_dist(rng) / 30.0));
    }
    CAPTURE(trial);
    CHECK(upper_hull(points) == oracle::naive_hull(points));
  }
}

TEST_CASE("hull invariants hold on random sets") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto points = testutil::random_points(rng, 6);
    const auto hull = upper_hull(points);
    REQUIRE(!hull.empty());
    for (std::size_t i = 0; i + 1 < hull.size(); ++i) {
      CHECK(points[hull[i]].size_bytes < points[hull[i + 1]].size_bytes);
      CHECK(points[hull[i]].quality < points[hull[i + 1]].quality);
    }
    for (std::size_t i = 0; i + 2 < hull.size(); ++i) {
      const auto& a = points[hull[i]];
      const auto& b = points[hull[i + 1]];
      const auto& c = points[hull[i + 2]];
      const double s1 = (b.quality - a.quality) /
                        static_cast<double>(b.size_bytes - a.size_bytes);
      const double s2 = (c.quality - b.quality) /
                        static_cast<double>(c.size_bytes - b.size_bytes);
      CHECK(s1 > s2);
    }
  }
}

TEST_CASE("select_at_lambda picks the Lagrangian maximizer") {
  const auto set = SequenceRdSet::create(
      "A", {pt(100, 0.90), pt(200, 0.95), pt(400, 0.97)});

  SUBCASE("interior lambda") {
    // Objectives at 2e-4: 0.88, 0.91, 0.89.
    const RdPoint& chosen = select_at_lambda(set, 2e-4);
    CHECK(chosen.size_bytes == 200);
    CHECK(chosen.quality == 0.95);
  }
  SUBCASE("lambda zero takes the highest quality") {
    CHECK(select_at_lambda(set, 0.0).size_bytes == 400);
  }
  SUBCASE("huge lambda takes the smallest size") {
    CHECK(select_at_lambda(set, 1e9).size_bytes == 100);
  }
  SUBCASE("exact tie goes to the smaller size") {
    const auto tied = SequenceRdSet::create("T", {pt(100, 0.5), pt(200, 0.6)});
    const double slope = (0.6 - 0.5) / 100.0;
    CHECK(select_at_lambda(tied, slope).size_bytes == 100);
  }
  SUBCASE("negative lambda is rejected") {
    CHECK_THROWS_AS(select_at_lambda(set, -1e-9), std::invalid_argument);
  }
}

TEST_CASE("selection size is non-increasing in lambda") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> lambda_dist(0.0, 2e-2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto sets = testutil::random_sets(rng, 1, 6);
    double l1 = lambda_dist(rng);
    double l2 = lambda_dist(rng);
    if (l1 > l2) std::swap(l1, l2);
    CHECK(select_at_lambda(sets[0], l1).size_bytes >=
          select_at_lambda(sets[0], l2).size_bytes);
  }
}

TEST_CASE("selection is covariant under size scaling") {
  std::mt19937 rng(123);
  std::uniform_real_distribution<double> lambda_dist(1e-6, 1e-2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto points = testutil::random_points(rng, 5);
    const auto set = SequenceRdSet::create("S", points);
    const double lambda = lambda_dist(rng);
    for (std::int64_t k : {2, 10}) {
      auto scaled_points = points;
      for (auto& p : scaled_points) p.size_bytes *= k;
      const auto scaled = SequenceRdSet::create("S", scaled_points);
      const RdPoint& a = select_at_lambda(set, lambda);
      const RdPoint& b = select_at_lambda(scaled, lambda / k);
      CHECK(a.config_id == b.config_id);
      CHECK(a.qp == b.qp);
      CHECK(a.size_bytes * k == b.size_bytes);
    }
  }
}

TEST_CASE("solve_budget on the two-sequence walkthrough") {
  const auto sets = two_sequence_fixture();
  const Budget budget{500.0, 1.0, 0};
  const Allocation alloc = solve_budget(sets, budget);

  CHECK(alloc.choices.at("A").size_bytes == 200);
  CHECK(alloc.choices.at("A").quality == 0.95);
  CHECK(alloc.choices.at("B").size_bytes == 300);
  CHECK(alloc.choices.at("B").quality == 0.92);
  CHECK(alloc.total_data_bytes == 500);
  CHECK(alloc.submission_bytes == 500.0);
  CHECK(alloc.sum_quality == doctest::Approx(1.87).epsilon(1e-12));
  CHECK(alloc.mean_quality == doctest::Approx(0.935).epsilon(1e-12));

  // Matches the exhaustive search over all six combinations.
  const auto best = oracle::exhaustive_best(sets, budget);
  REQUIRE(best.feasible);
  CHECK(alloc.sum_quality == doctest::Approx(best.sum_quality).epsilon(1e-12));
}

TEST_CASE("solve_budget with no effective limit takes every maximum") {
  const auto sets = two_sequence_fixture();
  const Allocation alloc = solve_budget(sets, Budget{1e18, 1.0, 0});
  CHECK(alloc.lambda_star == 0.0);
  CHECK(alloc.choices.at("A").size_bytes == 400);
  CHECK(alloc.choices.at("B").size_bytes == 300);
}

TEST_CASE("solve_budget reports infeasibility with the overshoot") {
  const auto sets = two_sequence_fixture();
  // All-minimum total is 200; a limit of 150 overshoots by 50.
  CHECK_THROWS_AS(solve_budget(sets, Budget{150.0, 1.0, 0}),
                  InfeasibleBudgetError);
  try {
    solve_budget(sets, Budget{150.0, 1.0, 0});
    FAIL("expected InfeasibleBudgetError");
  } catch (const InfeasibleBudgetError& e) {
    CHECK(e.overshoot_bytes() == doctest::Approx(50.0));
    CHECK(std::string(e.what()).find("50") != std::string::npos);
  }
}

TEST_CASE("solve_budget rejects duplicate or empty inputs") {
  auto sets = two_sequence_fixture();
  sets.push_back(sets.front());
  CHECK_THROWS_AS(solve_budget(sets, Budget{1e9, 1.0, 0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(solve_budget({}, Budget{1e9, 1.0, 0}),
                  std::invalid_argument);
}

TEST_CASE("solve_budget is deterministic") {
  std::mt19937 rng(4242);
  const auto sets = testutil::random_sets(rng, 4, 6);
  const auto budget = testutil::random_budget(rng, sets);
  const Allocation a = solve_budget(sets, budget);
  const Allocation b = solve_budget(sets, budget);
  CHECK(format_allocation_json({"x", budget, a}) ==
        format_allocation_json({"x", budget, b}));
}

TEST_CASE("solve_budget beats the single-lambda bound and stays feasible") {
  std::mt19937 rng(31337);
  std::uniform_int_distribution<int> set_count(2, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto sets = testutil::random_sets(rng, set_count(rng), 6);
    const auto budget = testutil::random_budget(rng, sets);
    CAPTURE(trial);

    const Allocation alloc = solve_budget(sets, budget);
    CHECK(alloc.submission_bytes <= budget.limit_bytes);
    CHECK(submission_size(alloc.total_data_bytes, budget) ==
          alloc.submission_bytes);
    for (const auto& set : sets) {
      const RdPoint& chosen = alloc.choices.at(set.sequence_id);
      bool on_hull = false;
      for (std::size_t pos : set.hull) {
        if (set.points[pos] == chosen) on_hull = true;
      }
      CHECK(on_hull);
    }

    const auto single = oracle::best_single_lambda(sets, budget);
    REQUIRE(single.has_value());
    CHECK(alloc.sum_quality >= single->sum_quality - 1e-12);

    const auto best = oracle::exhaustive_best(sets, budget);
    REQUIRE(best.feasible);
    CHECK(alloc.sum_quality <= best.sum_quality + 1e-12);
    if (oracle::optimum_lambda_reachable(sets, budget, best)) {
      CHECK(alloc.sum_quality ==
            doctest::Approx(best.sum_quality).epsilon(1e-12));
    }
  }
}

TEST_CASE("rd csv round trip and formatting") {
  const auto sets = two_sequence_fixture();
  const std::string csv = format_rd_csv(sets);
  CHECK(csv.starts_with("sequence_id,config_id,qp,size_bytes,quality\n"));
  CHECK(csv.find("A,c,40,100,0.900000000\n") != std::string::npos);
  CHECK(csv.find('\r') == std::string::npos);

  const auto parsed = parse_rd_csv(csv);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].sequence_id == "A");
  CHECK(parsed[0].points == sets[0].points);
  CHECK(parsed[0].hull == sets[0].hull);
  CHECK(format_rd_csv(parsed) == csv);
}

TEST_CASE("rd csv rejects malformed input") {
  CHECK_THROWS_WITH_AS(parse_rd_csv("wrong,header\n"),
                       doctest::Contains("header"), std::runtime_error);
  const std::string header = "sequence_id,config_id,qp,size_bytes,quality\n";
  CHECK_THROWS_AS(parse_rd_csv(header), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_rd_csv(header + "A,c,30,0,0.5\n"),
                       doctest::Contains("size_bytes"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_rd_csv(header + "A,c,30,10,1.5\n"),
                       doctest::Contains("quality"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      parse_rd_csv(header + "A,c,30,10,0.5\nA,c,30,20,0.6\n"),
      doctest::Contains("duplicate"), std::runtime_error);
  CHECK_THROWS_AS(parse_rd_csv(header + "A,c,30,10\n"), std::runtime_error);
}

TEST_CASE("allocation json round trip") {
  const auto sets = two_sequence_fixture();
  const Budget budget{542.0, 1.0, 42};
  const Allocation alloc = solve_budget(sets, budget);

  testutil::TempDir dir("allocjson");
  const auto path = dir.path() / "allocation.json";
  write_allocation_json({"mock", budget, alloc}, path);
  const AllocationFile read = read_allocation_json(path);

  CHECK(read.adapter == "mock");
  CHECK(read.budget.limit_bytes == 542.0);
  CHECK(read.budget.data_divisor == 1.0);
  CHECK(read.budget.decoder_bytes == 42);
  CHECK(read.allocation.total_data_bytes == alloc.total_data_bytes);
  CHECK(read.allocation.submission_bytes == alloc.submission_bytes);
  CHECK(read.allocation.sum_quality == alloc.sum_quality);
  CHECK(read.allocation.lambda_star == alloc.lambda_star);
  CHECK(read.allocation.choices.at("A") == alloc.choices.at("A"));
  CHECK(read.allocation.choices.at("B") == alloc.choices.at("B"));
}
