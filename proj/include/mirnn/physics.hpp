#pragma once

#include "mirnn/autodiff.hpp"
#include "mirnn/intervals.hpp"
#include "mirnn/network.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mirnn {

enum class DomainKind { interval, star, square };

/// Spatial domain. The star is the region |p - center| < r(phi) with
/// r(phi) = radius * (1 + amplitude * cos(lobes * phi)).
struct Domain {
  DomainKind kind = DomainKind::interval;
  std::vector<double> lo{0.0};
  std::vector<double> hi{1.0};
  std::array<double, 2> center{0.0, 0.0};
  double radius = 1.0;
  double amplitude = 0.3;
  int lobes = 5;

  static Domain interval(double lo, double hi);
  static Domain square(double lo, double hi);
  static Domain star(std::array<double, 2> center, double radius, double amplitude, int lobes);

  int dims() const { return kind == DomainKind::interval ? 1 : 2; }
  double boundary_radius(double phi) const;
  bool contains(std::span<const double> x) const;
  /// Signed distance-like residual of the boundary equation; zero on the
  /// boundary.
  double boundary_residual(std::span<const double> x) const;
  /// Bounding box, lo and hi per spatial dimension.
  std::pair<std::vector<double>, std::vector<double>> bounds() const;
  void validate() const;
};

struct Constants {
  double mu = 0.01;   // Burgers viscosity
  double nu = 0.01;   // kinematic viscosity
  double rho = 1.0;   // density
};

enum class BoundaryKind { dirichlet, periodic };

/// Field values and derivative graphs with respect to the coordinate inputs.
/// d1[f][c], d2[f][c] are null unless requested.
struct FieldJets {
  std::vector<ad::Expr> value;
  std::vector<std::vector<ad::Expr>> d1;
  std::vector<std::vector<ad::Expr>> d2;

  const ad::Expr& dx(int field, int coord) const;
  const ad::Expr& dxx(int field, int coord) const;
};

struct DerivativeNeed {
  int field = 0;
  int coord = 0;
  int order = 1;
};

struct PdeProblem {
  std::string name;
  std::vector<std::string> coords;  // spatial names then "t"
  std::vector<std::string> fields;
  Domain domain;
  double t_start = 0.0;
  double t_end = 1.0;
  Constants constants;
  BoundaryKind boundary = BoundaryKind::dirichlet;
  std::vector<DerivativeNeed> needs;
  std::function<std::vector<ad::Expr>(const FieldJets&)> residual;
  /// Closed-form solution, one 1 x batch graph per field.
  std::function<std::vector<ad::Expr>(std::span<const ad::Expr>)> exact;

  int coord_count() const { return static_cast<int>(coords.size()); }
  int field_count() const { return static_cast<int>(fields.size()); }
  int spatial_dims() const { return coord_count() - 1; }
  LayerSpec layer_spec(int hidden_layers = 4, int width = 30) const;
};

PdeProblem burgers_problem(double mu = 0.01, double x_max = 4.0, double t_end = 5.0);
/// Star-shaped domain centred at (pi/2, pi/2) by default.
PdeProblem heat_problem(double t_end = 1.0,
                        Domain domain = Domain::star({1.5707963267948966, 1.5707963267948966},
                                                     1.0, 0.3, 5));
PdeProblem taylor_green_problem(double nu, double rho = 1.0, double t_end = 2.0);

/// Differentiates the rows of `fields` (fields x batch) as the problem needs.
FieldJets field_jets(ad::Differentiator& diff, const PdeProblem& problem,
                     const ad::Expr& fields, std::span<const int> coord_ids);

/// Residual graphs for a predictor whose coordinates are the given inputs.
std::vector<ad::Expr> residual_exprs(ad::Differentiator& diff, const PdeProblem& problem,
                                     const ad::Expr& fields, std::span<const int> coord_ids);

/// Exact fields at the columns of coords (coordinates x N).
Eigen::MatrixXd exact_values(const PdeProblem& problem, const Eigen::MatrixXd& coords);

/// Residuals of the closed-form solution routed through the autodiff pipeline,
/// one row per residual equation.
Eigen::MatrixXd exact_residuals(const PdeProblem& problem, const Eigen::MatrixXd& coords);

struct SamplingSpec {
  int interior = 10000;
  int boundary = 400;
  int initial = 400;
  int mutual = 400;
  bool per_block = false;  // interior/boundary counts per block instead of split
  std::uint64_t seed = 0;
  std::vector<double> excluded_times;
  double exclusion_band = 1e-3;

  void validate() const;
};

enum class Region { interior, boundary, initial };

/// Uniform points (coordinates x count) over the region with time in `time`.
/// Initial-slice points sit at time.start.
Eigen::MatrixXd sample_points(const Domain& domain, Region region, int count, Interval time,
                              std::mt19937_64& rng, std::span<const double> excluded = {},
                              double band = 0.0);
Eigen::MatrixXd sample_points(const Domain& domain, const SamplingSpec& spec, Region region,
                              Interval time);

/// Matched boundary points on opposite edges of a square domain; column i of
/// the two results differ by one period in x or y.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> sample_periodic_pairs(const Domain& domain,
                                                                  int count, Interval time,
                                                                  std::mt19937_64& rng);

/// Independent 64-bit seed for (seed, stream, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace mirnn
