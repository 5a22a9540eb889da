#include "doctest.h"

#include "mirnn/error.hpp"
#include "mirnn/metrics.hpp"

#include <cmath>

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

Eigen::MatrixXd rowvec(std::initializer_list<double> v) {
  Eigen::MatrixXd m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

// Evaluation whose prediction is exact everywhere except an offset per block.
GridEvaluation synthetic(const TimePartition& part, std::vector<double> offset) {
  const PdeProblem p = burgers_problem();
  GridEvaluation e;
  e.coords = grid_points(p, 0.05);
  e.exact = exact_values(p, e.coords);
  e.prediction = e.exact;
  e.earlier = Eigen::MatrixXd::Constant(1, e.coords.cols(), NAN);
  for (Eigen::Index i = 0; i < e.coords.cols(); ++i) {
    const auto owners = part.owning_blocks(e.coords(1, i));
    const int b = owners.back();
    e.block.push_back(b);
    e.mutual.push_back(owners.size() > 1);
    e.prediction(0, i) += offset[static_cast<std::size_t>(b)];
  }
  return e;
}

}  // namespace

TEST_CASE("R-squared reference cases") {
  const Eigen::MatrixXd exact = rowvec({0, 1, 2});
  CHECK(r_squared(exact, exact) == 1.0);
  CHECK(r_squared(rowvec({1, 1, 1}), exact) == 0.0);
  CHECK(r_squared(rowvec({2, 1, 0}), exact) == -3.0);
  CHECK(code_of([] { r_squared(rowvec({1, 2}), rowvec({4, 4})); }) ==
        ErrorCode::degenerate_target);
  CHECK(code_of([] { r_squared(rowvec({1}), rowvec({2})); }) == ErrorCode::shape);
  CHECK(code_of([&] { r_squared(rowvec({1, 2}), exact); }) == ErrorCode::shape);
}

TEST_CASE("R-squared never exceeds one") {
  const Eigen::MatrixXd exact = Eigen::MatrixXd::Random(2, 50);
  for (int k = 0; k < 20; ++k) {
    const Eigen::MatrixXd pred = exact + 0.1 * k * Eigen::MatrixXd::Random(2, 50);
    CHECK(r_squared(pred, exact) <= 1.0);
  }
}

TEST_CASE("relative error and MSE") {
  const Eigen::MatrixXd exact = rowvec({1, -2, 3});
  CHECK(relative_error(exact, exact) == 0.0);
  CHECK(relative_error(1.1 * exact, exact) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(code_of([] { relative_error(rowvec({1, 2}), rowvec({0, 0})); }) ==
        ErrorCode::degenerate_target);
  CHECK(mean_squared_error(rowvec({1, 4}), rowvec({0, 1})) == 5.0);
}

TEST_CASE("MSE over time") {
  const auto part = TimePartition::uniform(0.0, 5.0, 2, 0.1);
  const GridEvaluation exact = synthetic(part, {0.0, 0.0});
  const auto series = mse_over_time(exact, part, 0.1);
  CHECK(series.size() == 50);
  for (const auto& s : series) CHECK(s.mse == 0.0);
  CHECK(mse_over_time(exact, part, 0.3).size() == 17);

  const GridEvaluation off = synthetic(part, {0.1, 0.2});
  const auto s2 = mse_over_time(off, part, 0.5);
  CHECK(s2.front().mse == doctest::Approx(0.01));
  CHECK(s2.front().block == 0);
  CHECK(s2.back().mse == doctest::Approx(0.04));
  CHECK(s2.back().block == 1);
  const auto ratios = transition_ratios(s2, part);
  REQUIRE(ratios.size() == 1);
  CHECK(ratios[0] == doctest::Approx(4.0));
  CHECK(code_of([&] { mse_over_time(exact, part, 0.0); }) == ErrorCode::config);
}

TEST_CASE("slices without points are gaps") {
  const auto part = TimePartition::uniform(0.0, 5.0, 1, 0.0);
  GridEvaluation e = synthetic(part, {0.0});
  // Width below the grid spacing leaves empty slices between grid rows.
  const auto series = mse_over_time(e, part, 0.02);
  bool gap = false;
  for (const auto& s : series)
    if (s.empty()) {
      gap = true;
      CHECK(std::isnan(s.mse));
    }
  CHECK(gap);
}

TEST_CASE("per-block MSE") {
  const auto part = TimePartition::uniform(0.0, 5.0, 3, 0.2);
  const auto mse = per_block_mse(synthetic(part, {0.1, 0.0, 0.3}), 3);
  REQUIRE(mse.size() == 3);
  CHECK(mse[0] == doctest::Approx(0.01));
  CHECK(mse[1] == 0.0);
  CHECK(mse[2] == doctest::Approx(0.09));
}

TEST_CASE("spatial grids stay inside the domain") {
  const PdeProblem h = heat_problem();
  const Eigen::MatrixXd g = spatial_grid(h, 0.3, 0.05);
  CHECK(g.rows() == 3);
  CHECK((g.row(2).array() == 0.3).all());
  for (Eigen::Index i = 0; i < g.cols(); ++i) {
    const double x[] = {g(0, i), g(1, i)};
    CHECK(h.domain.contains(x));
  }
}

TEST_CASE("metrics are pure") {
  const Eigen::MatrixXd exact = Eigen::MatrixXd::Random(1, 30);
  const Eigen::MatrixXd pred = exact + 0.05 * Eigen::MatrixXd::Random(1, 30);
  const double a = r_squared(pred, exact);
  const double b = r_squared(pred, exact);
  CHECK(a == b);
}

TEST_CASE("noise experiment validation") {
  TrainSetup s;
  s.problem = burgers_problem();
  s.partition = TimePartition::uniform(0.0, 5.0, 1, 0.0);
  s.spec = s.problem.layer_spec(1, 4);
  TrainConfig c;
  c.epochs = 1;
  CHECK(code_of([&] { noise_experiment(s, c, {0.1}, 0.5); }) == ErrorCode::config);
  s.partition = TimePartition::uniform(0.0, 5.0, 2, 0.1);
  CHECK(code_of([&] { noise_experiment(s, c, {-1.0}, 0.5); }) == ErrorCode::config);
}

TEST_CASE("zero sigma reproduces the baseline") {
  TrainSetup s;
  s.problem = burgers_problem();
  s.partition = TimePartition::uniform(0.0, 5.0, 2, 0.1);
  s.policy = ConditioningPolicy::uniform(ConditioningRule::at_preceding_end());
  s.ff = ForgetFactorSchedule::uniform(0.5);
  s.spec = s.problem.layer_spec(2, 6);
  TrainConfig c;
  c.epochs = 15;
  c.sampling.interior = 40;
  c.sampling.boundary = 10;
  c.sampling.initial = 10;
  c.sampling.mutual = 10;
  const NoiseResult r = noise_experiment(s, c, {0.0, 1.0}, 0.25);
  REQUIRE(r.baseline.size() == 2);
  REQUIRE(r.rows.size() == 4);
  for (int b = 0; b < 2; ++b) {
    CHECK(r.rows[static_cast<std::size_t>(b)].mse == r.baseline[static_cast<std::size_t>(b)].mse);
    CHECK(r.rows[static_cast<std::size_t>(b)].sigma == 0.0);
    CHECK(r.rows[static_cast<std::size_t>(2 + b)].sigma == 1.0);
  }
  CHECK(r.rows[2].final_mutual > r.rows[0].final_mutual);
}
