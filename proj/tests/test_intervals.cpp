#include "doctest.h"

#include "mirnn/error.hpp"
#include "mirnn/intervals.hpp"

#include <random>

using namespace mirnn;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

}  // namespace

TEST_CASE("uniform partition with four blocks and one second of overlap") {
  const auto p = TimePartition::uniform(0.0, 5.0, 4, 1.0);
  REQUIRE(p.block_count() == 4);
  const double expect[4][2] = {{0, 2.25}, {1.25, 3.5}, {2.5, 4.75}, {3.75, 5}};
  for (int i = 0; i < 4; ++i) {
    CHECK(p.block(i).start == doctest::Approx(expect[i][0]));
    CHECK(p.block(i).end == doctest::Approx(expect[i][1]));
  }
  CHECK(p.mutual_intervals().size() == 3);
}

TEST_CASE("two blocks, mutual 0.1") {
  const auto p = TimePartition::uniform(0.0, 5.0, 2, 0.1);
  CHECK(p.block(0).start == 0.0);
  CHECK(p.block(0).end == doctest::Approx(2.6));
  CHECK(p.block(1).start == 2.5);
  CHECK(p.block(1).end == 5.0);
  const Interval m = p.mutual_interval(0);
  CHECK(m.start == 2.5);
  CHECK(m.end == doctest::Approx(2.6));
}

TEST_CASE("single block has no mutual intervals") {
  const auto p = TimePartition::uniform(0.0, 5.0, 1, 0.0);
  CHECK(p.block_count() == 1);
  CHECK(p.block(0).end == 5.0);
  CHECK(p.mutual_intervals().empty());
}

TEST_CASE("partition errors") {
  CHECK(code_of([] { TimePartition::uniform(0, 5, 2, 2.5); }) == ErrorCode::degenerate_overlap);
  CHECK(code_of([] { TimePartition::uniform(0, 5, 4, 1.5); }) == ErrorCode::degenerate_overlap);
  CHECK(code_of([] { TimePartition::uniform(0, 5, 0, 0.1); }) == ErrorCode::partition);
  CHECK(code_of([] { TimePartition::uniform(0, 5, 2, -0.1); }) == ErrorCode::partition);
  CHECK(code_of([] { TimePartition::explicit_intervals({{0, 2}, {2.5, 5}}); }) ==
        ErrorCode::partition);
  CHECK(code_of([] { TimePartition::explicit_intervals({{0, 3}, {1, 2}}); }) ==
        ErrorCode::degenerate_overlap);
}

TEST_CASE("explicit unequal intervals") {
  const auto p = TimePartition::explicit_intervals({{0, 1.0}, {0.9, 4.0}, {3.5, 5.0}});
  CHECK(p.block_count() == 3);
  CHECK(p.mutual_interval(1).start == 3.5);
  CHECK(p.mutual_interval(1).end == 4.0);
}

TEST_CASE("classification in the second block") {
  const auto p = TimePartition::explicit_intervals({{0, 2.55}, {2.5, 5}}, 0.05);
  CHECK(p.classify(1, 2.52) == SubInterval::mutual);
  CHECK(p.classify(1, 2.57) == SubInterval::near_independent);
  CHECK(p.classify(1, 4.0) == SubInterval::remaining_independent);
  CHECK(p.classify(0, 2.52) == SubInterval::remaining_independent);
  CHECK(code_of([&] { p.classify(1, 1.0); }) == ErrorCode::domain);
}

TEST_CASE("conditioning times") {
  const auto p = TimePartition::uniform(0.0, 5.0, 2, 0.05);
  const auto ta = ConditioningPolicy::uniform(ConditioningRule::aligned());
  CHECK(conditioning_time(ta, p, 1, 2.53) == 2.53);
  const ConditioningPolicy mixed{{ConditioningRule::aligned(), ConditioningRule::at(2.7),
                                  ConditioningRule::at(2.7)}};
  CHECK(conditioning_time(mixed, p, 1, 2.53) == 2.53);
  CHECK(conditioning_time(mixed, p, 1, 4.0) == 2.7);
  const auto end = ConditioningPolicy::uniform(ConditioningRule::at_preceding_end());
  CHECK(conditioning_time(end, p, 1, 4.0) == doctest::Approx(2.55));
  CHECK(code_of([&] { conditioning_time(end, p, 0, 1.0); }) == ErrorCode::partition);
  CHECK(ConditioningRule::at(2.55).describe() == "2.55");
  CHECK(ConditioningRule::aligned().describe() == "TA");
}

TEST_CASE("owning blocks") {
  const auto p = TimePartition::uniform(0.0, 5.0, 2, 0.1);
  CHECK(p.owning_blocks(1.0) == std::vector<int>{0});
  CHECK(p.owning_blocks(2.53) == std::vector<int>{0, 1});
  CHECK(p.owning_blocks(5.0) == std::vector<int>{1});
  CHECK(p.owning_blocks(2.5) == std::vector<int>{0, 1});
  CHECK(code_of([&] { p.owning_blocks(5.01); }) == ErrorCode::domain);
}

TEST_CASE("forget factor schedule validation") {
  CHECK_NOTHROW(ForgetFactorSchedule::uniform(0.5).validate());
  CHECK(code_of([] { ForgetFactorSchedule{{0.5, 1.2, 0.5}}.validate(); }) == ErrorCode::config);
  CHECK(code_of([] { ConditioningPolicy::uniform(ConditioningRule::at(NAN)).validate(); }) ==
        ErrorCode::config);
}

TEST_CASE("partition properties over random configurations") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> nb(1, 6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double t0 = unit(rng) * 2.0;
    const double t1 = t0 + 0.5 + unit(rng) * 5.0;
    const int n = nb(rng);
    const double base = (t1 - t0) / n;
    const double mutual = n == 1 ? 0.0 : unit(rng) * 0.99 * base;
    const auto p = TimePartition::uniform(t0, t1, n, mutual, unit(rng) * 0.1);
    CHECK(p.mutual_intervals().size() == static_cast<std::size_t>(n - 1));
    for (int i = 1; i < n; ++i) {
      CHECK(p.block(i).start > p.block(i - 1).start);
      const Interval m = p.mutual_interval(i - 1);
      CHECK(m.start == p.block(i).start);
      CHECK(m.end == p.block(i - 1).end);
      CHECK(p.has_mutual_overlap(i - 1) == (mutual > 0.0));
    }
    for (int k = 0; k < 50; ++k) {
      const double t = t0 + unit(rng) * (t1 - t0);
      const auto owners = p.owning_blocks(t);
      CHECK_FALSE(owners.empty());
      CHECK(owners.size() <= 2);
      for (int b : owners) {
        // Exactly one class, and the rules agree with the interval geometry.
        const SubInterval c = p.classify(b, t);
        const bool in_overlap = b > 0 && t <= p.block(b - 1).end;
        CHECK((c == SubInterval::mutual) == in_overlap);
      }
    }
  }
}
