#include "mirnn/autodiff.hpp"
#include "mirnn/error.hpp"

#include <algorithm>
#include <cmath>

namespace mirnn::ad {

namespace {

double scalar_of(const Eigen::MatrixXd& m, const char* what) {
  if (m.size() != 1)
    fail(ErrorCode::shape, std::string(what) + ": expression is not scalar (" +
                               std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                               ")");
  return m(0, 0);
}

void check_orders(std::span<const DerivativeOrder> orders) {
  for (const auto& o : orders)
    if (o.order < 1 || o.order > 2)
      fail(ErrorCode::unsupported_order,
           "derivative order " + std::to_string(o.order) + " is not supported (1 or 2)");
}

}  // namespace

double eval(const Expr& e, const Bindings& bindings) {
  return scalar_of(evaluate(e, bindings), "eval");
}

Eigen::MatrixXd evaluate(const Expr& e, const Bindings& bindings) {
  Program p({e});
  p.forward(bindings);
  return p.value(0);
}

const DerivativeEntry* DerivativeBundle::find(int input, int order) const {
  for (const auto& e : entries)
    if (e.input == input && e.order == order) return &e;
  return nullptr;
}

double DerivativeBundle::first(int input) const {
  const auto* e = find(input, 1);
  if (!e) fail(ErrorCode::binding, "first derivative was not requested");
  return e->value;
}

double DerivativeBundle::second(int input) const {
  const auto* e = find(input, 2);
  if (!e) fail(ErrorCode::binding, "second derivative was not requested");
  return e->value;
}

DerivativeBundle input_derivatives(const Expr& fn, const Bindings& point,
                                   std::span<const DerivativeOrder> orders) {
  check_orders(orders);
  Differentiator diff;
  DerivativeBundle out;
  std::vector<Expr> roots{fn};
  for (const auto& o : orders) {
    Expr e = diff.derivative(fn, o.input);
    if (o.order == 2) e = diff.derivative(e, o.input);
    out.entries.push_back({o.input, o.order, 0.0, e});
    roots.push_back(e);
  }
  Program p(roots);
  p.forward(point);
  out.value = scalar_of(p.value(0), "input_derivatives");
  for (std::size_t i = 0; i < out.entries.size(); ++i)
    out.entries[i].value = scalar_of(p.value(i + 1), "input_derivatives");
  return out;
}

Gradient param_gradient(const Expr& loss, const Bindings& bindings) {
  if (!loss) fail(ErrorCode::shape, "null loss");
  if (!loss->shape.scalar())
    fail(ErrorCode::shape, "loss must be scalar-valued, got " +
                               std::to_string(loss->shape.rows) + " rows");
  Program p({loss});
  p.forward(bindings);
  Gradient g;
  p.backward(0, g);
  return g;
}

double fd_check(const Expr& fn, const Bindings& point,
                std::span<const DerivativeOrder> orders, double step) {
  if (!(step > 0.0)) fail(ErrorCode::config, "fd_check step must be positive");
  const DerivativeBundle ad = input_derivatives(fn, point, orders);
  std::vector<Eigen::MatrixXd> shifted(point.inputs.begin(), point.inputs.end());
  Program p({fn});
  auto at = [&](int input, double delta) {
    const auto id = static_cast<std::size_t>(input);
    shifted[id] = point.inputs[id].array() + delta;
    p.forward({shifted, point.params});
    const double v = scalar_of(p.value(0), "fd_check");
    shifted[id] = point.inputs[id];
    return v;
  };
  double worst = 0.0;
  for (const auto& e : ad.entries) {
    const double fp = at(e.input, step);
    const double fm = at(e.input, -step);
    const double fd = e.order == 1 ? (fp - fm) / (2.0 * step)
                                   : (fp - 2.0 * ad.value + fm) / (step * step);
    worst = std::max(worst, std::abs(e.value - fd) / (std::abs(e.value) + step));
  }
  return worst;
}

}  // namespace mirnn::ad
