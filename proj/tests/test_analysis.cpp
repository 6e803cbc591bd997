#include <doctest.h>

#include "demask/analysis.hpp"
#include "demask/error.hpp"
#include "demask/rng.hpp"
#include "demask/schedulers.hpp"

using namespace demask;

using Trace = std::vector<std::size_t>;

TEST_CASE("classification goldens with the default window and threshold") {
  CHECK(classify({0, 1, 2, 3}).pattern == PatternClass::kLeftToRight);
  CHECK(classify({3, 2, 1, 0}).pattern == PatternClass::kRightToLeft);

  const auto o2i = classify({0, 5, 1, 4, 2, 3});
  CHECK(o2i.pattern == PatternClass::kOuterToInner);
  CHECK(o2i.stats.frontier_adherence == 1.0);
  CHECK(o2i.stats.left_moves == 3);
  CHECK(o2i.stats.right_moves == 2);
  CHECK(o2i.stats.leftmost_fraction == doctest::Approx(4.0 / 6.0));
  CHECK(o2i.stats.rightmost_fraction == doctest::Approx(3.0 / 6.0));

  const auto other = classify({2, 0, 3, 1});
  CHECK(other.pattern == PatternClass::kOther);
  CHECK(other.stats.frontier_adherence == 0.75);
}

TEST_CASE("window and threshold sensitivity") {
  // every other side move lands one slot inside the frontier
  const Trace t = {1, 0, 6, 7, 2, 3, 5, 4};
  CHECK(classify(t, 1).pattern == PatternClass::kOther);
  CHECK(classify(t, 2).pattern == PatternClass::kOuterToInner);
  CHECK(classify({2, 0, 3, 1}, 1, 0.75).pattern == PatternClass::kOuterToInner);
}

TEST_CASE("a one-sided frontier order is not outer-to-inner") {
  // all but one step from the left edge; right share under 10%
  Trace t;
  for (std::size_t j = 0; j < 20; ++j) t.push_back(j);
  std::swap(t[18], t[19]);
  const auto c = classify(t, 1, 0.97);
  CHECK(c.stats.frontier_adherence == 1.0);
  CHECK(c.pattern == PatternClass::kOther);
}

TEST_CASE("heuristic orders classify as expected") {
  for (std::size_t len = 4; len <= 16; ++len) {
    CHECK(classify(outer2inner_order(len, 1)).pattern == PatternClass::kOuterToInner);
    Trace l2r(len);
    for (std::size_t j = 0; j < len; ++j) l2r[j] = j;
    CHECK(classify(l2r).pattern == PatternClass::kLeftToRight);
  }
}

TEST_CASE("run and skip statistics") {
  CHECK(run_stats({0, 5, 4, 1, 2, 3}) == std::pair<std::size_t, std::size_t>{3, 2});
  CHECK(run_stats({0, 1, 2, 3}) == std::pair<std::size_t, std::size_t>{4, 1});
  CHECK(run_stats({}) == std::pair<std::size_t, std::size_t>{0, 0});

  CHECK(skip_events({0, 5, 4, 1, 2, 3}) == std::vector<SkipEvent>{{3, 6}});
  CHECK(skip_events({0, 2, 1}) == std::vector<SkipEvent>{{1, 3}});
  CHECK(skip_events({0, 1, 2, 3}).empty());

  const std::vector<Trace> traces = {{0, 5, 4, 1, 2, 3}, {0, 2, 1}};
  auto all = [](std::size_t, std::size_t) { return true; };
  CHECK(skip_stats(traces, all).value() == doctest::Approx(2.0 / 5.0));
  auto only_second = [](std::size_t t, std::size_t) { return t == 1; };
  CHECK(skip_stats(traces, only_second).value() == 1.0);
  CHECK_FALSE(skip_stats(traces, [](std::size_t, std::size_t) { return false; }).has_value());
}

TEST_CASE("frontier statistics stay in range on random permutations") {
  Rng rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    Trace t(1 + rng.below(16));
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = j;
    rng.shuffle(t);
    for (std::size_t k : {1u, 2u}) {
      const auto c = classify(t, k);
      CHECK(c.stats.frontier_adherence >= 0.0);
      CHECK(c.stats.frontier_adherence <= 1.0);
      CHECK(c.stats.left_moves + c.stats.right_moves <= t.size());
      // the last remaining mask is always on both frontiers
      CHECK(c.stats.leftmost_fraction * t.size() >= 1.0 - 1e-12);
    }
  }
}

TEST_CASE("render marks masks and monotone runs") {
  const std::vector<std::string> tok = {"a", "b", "c", "d", "e", "f"};
  CHECK(render_trace({0, 5, 1, 4, 2, 3}, tok, {2, 6}) == "a _ _ _ _ f\na b [c d] e f\n");
  CHECK(render_trace({0, 1, 2, 3}, {"a", "b", "c", "d"}, {4}) == "[a b c d]\n");
  CHECK(render_trace({3, 2, 1, 0}, {"a", "b", "c", "d"}, {0, 4}) == "_ _ _ _\n{a b c d}\n");
}

TEST_CASE("non-permutations are rejected") {
  CHECK_THROWS_AS(classify({0, 0, 1}), ArgumentError);
  CHECK_THROWS_AS(classify({0, 3}), ArgumentError);
  CHECK_THROWS_AS(classify({0, 1}, 0), ArgumentError);
  CHECK(to_string(PatternClass::kOuterToInner) == "outer_to_inner");
}
