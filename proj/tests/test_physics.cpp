#include "doctest.h"

#include "mirnn/error.hpp"
#include "mirnn/physics.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace mirnn;

namespace {

constexpr double pi = std::numbers::pi;

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

Eigen::MatrixXd interior(const PdeProblem& p, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_points(p.domain, Region::interior, n, {p.t_start, p.t_end}, rng);
}

double max_residual(const PdeProblem& p, std::uint64_t seed) {
  return exact_residuals(p, interior(p, 1000, seed)).cwiseAbs().maxCoeff();
}

// Residual graphs for a hand-written field u(inputs) instead of a network.
Eigen::MatrixXd residual_of(const PdeProblem& p, const ad::Expr& fields,
                            const Eigen::MatrixXd& pts) {
  std::vector<int> ids;
  for (int c = 0; c < p.coord_count(); ++c) ids.push_back(c);
  ad::Differentiator diff;
  const auto r = residual_exprs(diff, p, fields, ids);
  std::vector<Eigen::MatrixXd> in;
  for (int c = 0; c < p.coord_count(); ++c) in.push_back(pts.row(c));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(r.size()), pts.cols());
  for (std::size_t i = 0; i < r.size(); ++i) {
    // Residuals free of the inputs fold to 1 x 1 constants.
    const Eigen::MatrixXd v = ad::evaluate(r[i], {in, {}});
    if (v.cols() == 1)
      out.row(static_cast<Eigen::Index>(i)).setConstant(v(0, 0));
    else
      out.row(static_cast<Eigen::Index>(i)) = v;
  }
  return out;
}

}  // namespace

TEST_CASE("Burgers closed form") {
  const PdeProblem p = burgers_problem();
  Eigen::MatrixXd pts(2, 3);
  pts << 1.0, 0.5, 0.0, 5.0, 5.0, 2.0;
  const Eigen::MatrixXd u = exact_values(p, pts);
  CHECK(std::abs(u(0, 0)) < 1e-15);
  CHECK(u(0, 1) == doctest::Approx(0.01 * pi).epsilon(1e-14));
  CHECK(std::abs(u(0, 2)) < 1e-15);
  CHECK(p.t_end == 5.0);
  CHECK(p.domain.hi[0] == 4.0);
}

TEST_CASE("residual of the exact solution vanishes") {
  CHECK(max_residual(burgers_problem(), 1) <= 1e-8);
  CHECK(max_residual(heat_problem(), 2) <= 1e-8);
  for (double nu : {0.01, 0.1, 1.0}) {
    const PdeProblem tg = taylor_green_problem(nu);
    CHECK(tg.field_count() == 3);
    CHECK(max_residual(tg, 3) <= 1e-8);
  }
}

TEST_CASE("a perturbed solution does not satisfy the PDE") {
  // Guards against a residual that is identically zero.
  const PdeProblem p = burgers_problem();
  const Eigen::MatrixXd pts = interior(p, 50, 4);
  ad::Expr x = ad::input(0, "x");
  ad::Expr t = ad::input(1, "t");
  const ad::Expr coords[] = {x, t};
  ad::Expr u = p.exact(coords)[0] + 0.01 * ad::sin(x);
  CHECK(residual_of(p, u, pts).cwiseAbs().maxCoeff() > 1e-5);
}

TEST_CASE("Burgers residual of u = x is x") {
  const PdeProblem p = burgers_problem();
  const Eigen::MatrixXd pts = interior(p, 100, 5);
  const Eigen::MatrixXd r = residual_of(p, ad::input(0, "x") + 0.0, pts);
  CHECK((r.row(0) - pts.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constant fields") {
  const PdeProblem heat = heat_problem();
  const Eigen::MatrixXd pts = interior(heat, 20, 6);
  ad::Expr c = ad::constant(3.0) + 0.0 * ad::input(0, "x") + 0.0 * ad::input(2, "t");
  CHECK(residual_of(heat, c, pts).cwiseAbs().maxCoeff() == 0.0);

  const PdeProblem tg = taylor_green_problem(0.1);
  const Eigen::MatrixXd tp = interior(tg, 20, 7);
  ad::Expr zero = 0.0 * ad::input(0, "x") + 0.0 * ad::input(1, "y") + 0.0 * ad::input(2, "t");
  ad::Expr uvp = ad::stack({zero + 1.5, zero + -0.5, zero + 2.0});
  CHECK(residual_of(tg, uvp, tp).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("heat and Taylor-Green reference values") {
  Eigen::MatrixXd pts(3, 1);
  pts << pi / 2, pi / 2, 0.0;
  CHECK(exact_values(heat_problem(), pts)(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  pts << 0.3, 1.1, 0.7;
  const Eigen::MatrixXd f = exact_values(taylor_green_problem(0.1), pts);
  const double d = std::exp(-2 * 0.1 * 0.7);
  CHECK(f(0, 0) == doctest::Approx(std::sin(0.3) * std::cos(1.1) * d));
  CHECK(f(1, 0) == doctest::Approx(-std::cos(0.3) * std::sin(1.1) * d));
  CHECK(f(2, 0) == doctest::Approx(0.25 * (std::cos(0.6) + std::cos(2.2)) * d * d));
  CHECK(code_of([] { taylor_green_problem(0.0); }) == ErrorCode::config);
}

TEST_CASE("sampling regions") {
  const PdeProblem b = burgers_problem();
  std::mt19937_64 rng(8);
  Eigen::MatrixXd in = sample_points(b.domain, Region::interior, 100, {0, 5}, rng);
  CHECK(in.cols() == 100);
  for (Eigen::Index i = 0; i < in.cols(); ++i) {
    CHECK(in(0, i) >= 0.0);
    CHECK(in(0, i) <= 4.0);
    CHECK(in(1, i) >= 0.0);
    CHECK(in(1, i) <= 5.0);
  }
  Eigen::MatrixXd bd = sample_points(b.domain, Region::boundary, 50, {0, 5}, rng);
  for (Eigen::Index i = 0; i < bd.cols(); ++i) CHECK((bd(0, i) == 0.0 || bd(0, i) == 4.0));
  Eigen::MatrixXd ic = sample_points(b.domain, Region::initial, 30, {1.5, 5}, rng);
  CHECK((ic.row(1).array() == 1.5).all());

  const PdeProblem h = heat_problem();
  Eigen::MatrixXd sb = sample_points(h.domain, Region::boundary, 500, {0, 1}, rng);
  for (Eigen::Index i = 0; i < sb.cols(); ++i) {
    const double x[] = {sb(0, i), sb(1, i)};
    CHECK(std::abs(h.domain.boundary_residual(x)) <= 1e-10);
  }
  Eigen::MatrixXd si = sample_points(h.domain, Region::interior, 500, {0, 1}, rng);
  for (Eigen::Index i = 0; i < si.cols(); ++i) {
    const double x[] = {si(0, i), si(1, i)};
    CHECK(h.domain.contains(x));
  }
  const auto [lo, hi] = h.domain.bounds();
  CHECK(lo[0] > 0.0);
  CHECK(hi[0] < pi);
}

TEST_CASE("excluded times are avoided") {
  const PdeProblem h = heat_problem();
  std::mt19937_64 rng(9);
  const double excluded[] = {0.3};
  Eigen::MatrixXd pts =
      sample_points(h.domain, Region::interior, 2000, {0, 1}, rng, excluded, 0.01);
  CHECK((pts.row(2).array() - 0.3).abs().minCoeff() >= 0.01);
}

TEST_CASE("sampling is deterministic per seed") {
  const PdeProblem h = heat_problem();
  SamplingSpec s;
  s.seed = 77;
  const Eigen::MatrixXd a = sample_points(h.domain, s, Region::interior, {0, 1});
  const Eigen::MatrixXd b = sample_points(h.domain, s, Region::interior, {0, 1});
  CHECK(a == b);
  s.seed = 78;
  CHECK(a != sample_points(h.domain, s, Region::interior, {0, 1}));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
}

TEST_CASE("degenerate domains are rejected") {
  CHECK(code_of([] { Domain::interval(1.0, 1.0); }) == ErrorCode::config);
  CHECK(code_of([] { Domain::star({0, 0}, 1.0, 1.5, 5); }) == ErrorCode::config);
  CHECK(code_of([] { Domain::star({0, 0}, -1.0, 0.3, 5); }) == ErrorCode::config);
  // Exclusion bands that swallow the whole time interval leave nothing to draw.
  std::mt19937_64 rng(1);
  const double excluded[] = {0.5};
  CHECK(code_of([&] {
          sample_points(Domain::interval(0, 1), Region::interior, 10, {0, 1}, rng, excluded, 0.6);
        }) == ErrorCode::degenerate_domain);
}

TEST_CASE("periodic pairs differ by one period") {
  const Domain sq = Domain::square(0.0, 2 * pi);
  std::mt19937_64 rng(3);
  auto [a, b] = sample_periodic_pairs(sq, 40, {0, 2}, rng);
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    const double dx = std::abs(a(0, i) - b(0, i));
    const double dy = std::abs(a(1, i) - b(1, i));
    CHECK(a(2, i) == b(2, i));
    CHECK(((dx == doctest::Approx(2 * pi) && dy == 0.0) ||
           (dy == doctest::Approx(2 * pi) && dx == 0.0)));
  }
}
