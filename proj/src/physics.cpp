#include "mirnn/physics.hpp"
#include "mirnn/error.hpp"

#include <cmath>
#include <numbers>

namespace mirnn {

using ad::Expr;
constexpr double pi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Domains

Domain Domain::interval(double lo, double hi) {
  Domain d;
  d.kind = DomainKind::interval;
  d.lo = {lo};
  d.hi = {hi};
  d.validate();
  return d;
}

Domain Domain::square(double lo, double hi) {
  Domain d;
  d.kind = DomainKind::square;
  d.lo = {lo, lo};
  d.hi = {hi, hi};
  d.validate();
  return d;
}

Domain Domain::star(std::array<double, 2> center, double radius, double amplitude, int lobes) {
  Domain d;
  d.kind = DomainKind::star;
  d.center = center;
  d.radius = radius;
  d.amplitude = amplitude;
  d.lobes = lobes;
  const double rmax = radius * (1.0 + std::abs(amplitude));
  d.lo = {center[0] - rmax, center[1] - rmax};
  d.hi = {center[0] + rmax, center[1] + rmax};
  d.validate();
  return d;
}

void Domain::validate() const {
  if (kind == DomainKind::star) {
    if (!(radius > 0.0) || !(std::abs(amplitude) < 1.0) || lobes < 0)
      fail(ErrorCode::config, "star domain needs radius > 0 and |amplitude| < 1");
    return;
  }
  const std::size_t n = kind == DomainKind::interval ? 1 : 2;
  if (lo.size() != n || hi.size() != n)
    fail(ErrorCode::config, "domain bounds have the wrong dimension");
  for (std::size_t i = 0; i < n; ++i)
    if (!(hi[i] > lo[i])) fail(ErrorCode::config, "domain bounds are empty");
}

double Domain::boundary_radius(double phi) const {
  return radius * (1.0 + amplitude * std::cos(lobes * phi));
}

bool Domain::contains(std::span<const double> x) const {
  if (kind == DomainKind::star) {
    const double dx = x[0] - center[0];
    const double dy = x[1] - center[1];
    return std::hypot(dx, dy) <= boundary_radius(std::atan2(dy, dx));
  }
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (x[i] < lo[i] || x[i] > hi[i]) return false;
  return true;
}

double Domain::boundary_residual(std::span<const double> x) const {
  if (kind == DomainKind::star) {
    const double dx = x[0] - center[0];
    const double dy = x[1] - center[1];
    return std::hypot(dx, dy) - boundary_radius(std::atan2(dy, dx));
  }
  // Distance to the nearest face of the box.
  double best = INFINITY;
  for (std::size_t i = 0; i < lo.size(); ++i)
    best = std::min({best, std::abs(x[i] - lo[i]), std::abs(x[i] - hi[i])});
  return best;
}

std::pair<std::vector<double>, std::vector<double>> Domain::bounds() const { return {lo, hi}; }

// ---------------------------------------------------------------------------
// Problems

const Expr& FieldJets::dx(int field, int coord) const {
  const Expr& e = d1.at(static_cast<std::size_t>(field)).at(static_cast<std::size_t>(coord));
  if (!e) fail(ErrorCode::binding, "first derivative was not requested");
  return e;
}

const Expr& FieldJets::dxx(int field, int coord) const {
  const Expr& e = d2.at(static_cast<std::size_t>(field)).at(static_cast<std::size_t>(coord));
  if (!e) fail(ErrorCode::binding, "second derivative was not requested");
  return e;
}

LayerSpec PdeProblem::layer_spec(int hidden_layers, int width) const {
  LayerSpec s;
  s.inputs = coord_count();
  s.outputs = field_count();
  s.hidden_layers = hidden_layers;
  s.width = width;
  auto [lo, hi] = domain.bounds();
  lo.push_back(t_start);
  hi.push_back(t_end);
  s.input_lo = lo;
  s.input_hi = hi;
  return s;
}

PdeProblem burgers_problem(double mu, double x_max, double t_end) {
  if (!(mu > 0.0)) fail(ErrorCode::config, "Burgers viscosity must be positive");
  PdeProblem p;
  p.name = "burgers";
  p.coords = {"x", "t"};
  p.fields = {"u"};
  p.domain = Domain::interval(0.0, x_max);
  p.t_start = 0.0;
  p.t_end = t_end;
  p.constants.mu = mu;
  p.needs = {{0, 1, 1}, {0, 0, 1}, {0, 0, 2}};
  p.residual = [mu](const FieldJets& j) {
    const Expr& u = j.value[0];
    return std::vector<Expr>{j.dx(0, 1) + ad::product(u, j.dx(0, 0)) - mu * j.dxx(0, 0)};
  };
  p.exact = [mu](std::span<const Expr> c) {
    // 2 mu pi sin(pi x) E / (2 + cos(pi x) E), E = exp(-mu pi^2 (t - 5))
    const double k = mu * pi * pi;
    Expr e = ad::exp(ad::sum({c[1]}, {-k}, 5.0 * k));
    Expr px = pi * c[0];
    Expr num = (2.0 * mu * pi) * ad::product(ad::sin(px), e);
    Expr den = ad::product(ad::cos(px), e) + 2.0;
    return std::vector<Expr>{ad::product(num, ad::reciprocal(den))};
  };
  return p;
}

PdeProblem heat_problem(double t_end, Domain domain) {
  if (domain.dims() != 2) fail(ErrorCode::config, "heat problem needs a 2D domain");
  PdeProblem p;
  p.name = "heat";
  p.coords = {"x", "y", "t"};
  p.fields = {"u"};
  p.domain = std::move(domain);
  p.t_start = 0.0;
  p.t_end = t_end;
  p.needs = {{0, 2, 1}, {0, 0, 2}, {0, 1, 2}};
  p.residual = [](const FieldJets& j) {
    return std::vector<Expr>{ad::sum({j.dx(0, 2), j.dxx(0, 0), j.dxx(0, 1)}, {1.0, 0.5, 0.5})};
  };
  p.exact = [](std::span<const Expr> c) {
    return std::vector<Expr>{ad::product(ad::exp(c[2]), ad::product(ad::sin(c[0]), ad::sin(c[1])))};
  };
  return p;
}

PdeProblem taylor_green_problem(double nu, double rho, double t_end) {
  if (!(nu > 0.0)) fail(ErrorCode::config, "Taylor-Green viscosity must be positive");
  if (!(rho > 0.0)) fail(ErrorCode::config, "Taylor-Green density must be positive");
  PdeProblem p;
  p.name = "taylor_green";
  p.coords = {"x", "y", "t"};
  p.fields = {"u", "v", "p"};
  p.domain = Domain::square(0.0, 2.0 * pi);
  p.t_start = 0.0;
  p.t_end = t_end;
  p.constants.nu = nu;
  p.constants.rho = rho;
  for (int f = 0; f < 2; ++f)
    for (auto [c, o] : {std::pair{2, 1}, {0, 1}, {1, 1}, {0, 2}, {1, 2}}) p.needs.push_back({f, c, o});
  p.needs.push_back({2, 0, 1});
  p.needs.push_back({2, 1, 1});
  p.residual = [nu, rho](const FieldJets& j) {
    const Expr& u = j.value[0];
    const Expr& v = j.value[1];
    auto momentum = [&](int f, int pc) {
      return ad::sum({j.dx(f, 2), ad::product(u, j.dx(f, 0)), ad::product(v, j.dx(f, 1)),
                      j.dx(2, pc), j.dxx(f, 0), j.dxx(f, 1)},
                     {1.0, 1.0, 1.0, 1.0 / rho, -nu, -nu});
    };
    return std::vector<Expr>{j.dx(0, 0) + j.dx(1, 1), momentum(0, 0), momentum(1, 1)};
  };
  p.exact = [nu, rho](std::span<const Expr> c) {
    Expr f = ad::exp(-2.0 * nu * c[2]);
    Expr f2 = ad::exp(-4.0 * nu * c[2]);
    Expr u = ad::product(ad::product(ad::sin(c[0]), ad::cos(c[1])), f);
    Expr v = -ad::product(ad::product(ad::cos(c[0]), ad::sin(c[1])), f);
    Expr pr = (rho / 4.0) * ad::product(ad::cos(2.0 * c[0]) + ad::cos(2.0 * c[1]), f2);
    return std::vector<Expr>{u, v, pr};
  };
  return p;
}

FieldJets field_jets(ad::Differentiator& diff, const PdeProblem& problem, const Expr& fields,
                     std::span<const int> coord_ids) {
  const auto nf = static_cast<std::size_t>(problem.field_count());
  const auto nc = static_cast<std::size_t>(problem.coord_count());
  if (coord_ids.size() != nc) fail(ErrorCode::shape, "coordinate id count mismatch");
  FieldJets j;
  j.d1.assign(nf, std::vector<Expr>(nc));
  j.d2.assign(nf, std::vector<Expr>(nc));
  for (std::size_t f = 0; f < nf; ++f) j.value.push_back(ad::row(fields, static_cast<int>(f)));
  for (const auto& n : problem.needs) {
    if (n.order < 1 || n.order > 2) fail(ErrorCode::unsupported_order, "derivative order > 2");
    const auto f = static_cast<std::size_t>(n.field);
    const auto c = static_cast<std::size_t>(n.coord);
    if (!j.d1[f][c]) j.d1[f][c] = diff.derivative(j.value[f], coord_ids[c]);
    if (n.order == 2 && !j.d2[f][c]) j.d2[f][c] = diff.derivative(j.d1[f][c], coord_ids[c]);
  }
  return j;
}

std::vector<Expr> residual_exprs(ad::Differentiator& diff, const PdeProblem& problem,
                                 const Expr& fields, std::span<const int> coord_ids) {
  return problem.residual(field_jets(diff, problem, fields, coord_ids));
}

namespace {

struct CoordInputs {
  std::vector<Expr> exprs;
  std::vector<int> ids;
  std::vector<Eigen::MatrixXd> values;
};

CoordInputs coord_inputs(const PdeProblem& problem, const Eigen::MatrixXd& coords) {
  if (coords.rows() != problem.coord_count())
    fail(ErrorCode::shape, "points have " + std::to_string(coords.rows()) +
                               " coordinates, problem has " +
                               std::to_string(problem.coord_count()));
  CoordInputs c;
  for (int i = 0; i < problem.coord_count(); ++i) {
    c.ids.push_back(i);
    c.exprs.push_back(ad::input(i, problem.coords[static_cast<std::size_t>(i)]));
    c.values.push_back(coords.row(i));
  }
  return c;
}

}  // namespace

Eigen::MatrixXd exact_values(const PdeProblem& problem, const Eigen::MatrixXd& coords) {
  CoordInputs c = coord_inputs(problem, coords);
  ad::Program prog({ad::stack(problem.exact(c.exprs))});
  prog.forward({c.values, {}});
  return prog.value(0);
}

Eigen::MatrixXd exact_residuals(const PdeProblem& problem, const Eigen::MatrixXd& coords) {
  CoordInputs c = coord_inputs(problem, coords);
  ad::Differentiator diff;
  std::vector<Expr> res =
      residual_exprs(diff, problem, ad::stack(problem.exact(c.exprs)), c.ids);
  ad::Program prog({ad::stack(res)});
  prog.forward({c.values, {}});
  return prog.value(0);
}

// ---------------------------------------------------------------------------
// Sampling

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ index);
}

void SamplingSpec::validate() const {
  if (interior < 1 || boundary < 1 || initial < 1 || mutual < 1)
    fail(ErrorCode::config, "sampling counts must be at least 1");
  if (!(exclusion_band >= 0.0)) fail(ErrorCode::config, "exclusion band must be >= 0");
}

Eigen::MatrixXd sample_points(const Domain& domain, Region region, int count, Interval time,
                              std::mt19937_64& rng, std::span<const double> excluded,
                              double band) {
  if (count < 1) fail(ErrorCode::config, "sample count must be positive");
  const int dims = domain.dims();
  Eigen::MatrixXd pts(dims + 1, count);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw_time = [&]() {
    if (region == Region::initial) return time.start;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      const double t = time.start + unit(rng) * time.length();
      bool ok = true;
      for (double e : excluded) ok = ok && std::abs(t - e) >= band;
      if (ok) return t;
    }
    fail(ErrorCode::degenerate_domain, "time exclusions cover the whole interval");
  };
  long attempts = 0;
  long accepted = 0;
  for (int p = 0; p < count; ++p) {
    double x[2] = {0.0, 0.0};
    if (region == Region::boundary) {
      switch (domain.kind) {
        case DomainKind::interval:
          x[0] = unit(rng) < 0.5 ? domain.lo[0] : domain.hi[0];
          break;
        case DomainKind::square: {
          const int edge = static_cast<int>(unit(rng) * 4.0) % 4;
          const double s = unit(rng);
          const int axis = edge % 2;
          x[axis] = edge < 2 ? domain.lo[static_cast<std::size_t>(axis)]
                             : domain.hi[static_cast<std::size_t>(axis)];
          const auto other = static_cast<std::size_t>(1 - axis);
          x[other] = domain.lo[other] + s * (domain.hi[other] - domain.lo[other]);
          break;
        }
        case DomainKind::star: {
          const double phi = unit(rng) * 2.0 * pi;
          const double r = domain.boundary_radius(phi);
          x[0] = domain.center[0] + r * std::cos(phi);
          x[1] = domain.center[1] + r * std::sin(phi);
          break;
        }
      }
    } else {
      for (;;) {
        for (int d = 0; d < dims; ++d) {
          const auto du = static_cast<std::size_t>(d);
          x[d] = domain.lo[du] + unit(rng) * (domain.hi[du] - domain.lo[du]);
        }
        ++attempts;
        if (domain.kind != DomainKind::star || domain.contains(std::span<const double>(x, 2))) {
          ++accepted;
          break;
        }
        if (attempts >= 1000 && accepted * 100 < attempts)
          fail(ErrorCode::degenerate_domain, "rejection sampling acceptance below 1%");
      }
    }
    for (int d = 0; d < dims; ++d) pts(d, p) = x[d];
    pts(dims, p) = draw_time();
  }
  return pts;
}

Eigen::MatrixXd sample_points(const Domain& domain, const SamplingSpec& spec, Region region,
                              Interval time) {
  int count = 0;
  switch (region) {
    case Region::interior: count = spec.interior; break;
    case Region::boundary: count = spec.boundary; break;
    case Region::initial: count = spec.initial; break;
  }
  std::mt19937_64 rng(spec.seed);
  return sample_points(domain, region, count, time, rng, spec.excluded_times,
                       spec.exclusion_band);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> sample_periodic_pairs(const Domain& domain,
                                                                  int count, Interval time,
                                                                  std::mt19937_64& rng) {
  if (domain.kind != DomainKind::square)
    fail(ErrorCode::config, "periodic boundaries need a square domain");
  Eigen::MatrixXd a(3, count);
  Eigen::MatrixXd b(3, count);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int p = 0; p < count; ++p) {
    const auto axis = static_cast<std::size_t>(unit(rng) < 0.5 ? 0 : 1);
    const auto other = 1 - axis;
    const double s = domain.lo[other] + unit(rng) * (domain.hi[other] - domain.lo[other]);
    const double t = time.start + unit(rng) * time.length();
    a(static_cast<Eigen::Index>(axis), p) = domain.lo[axis];
    b(static_cast<Eigen::Index>(axis), p) = domain.hi[axis];
    a(static_cast<Eigen::Index>(other), p) = s;
    b(static_cast<Eigen::Index>(other), p) = s;
    a(2, p) = t;
    b(2, p) = t;
  }
  return {a, b};
}

}  // namespace mirnn
