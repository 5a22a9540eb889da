#include "mirnn/autodiff.hpp"
#include "mirnn/error.hpp"

#include <optional>
#include <utility>

namespace mirnn::ad {

const char* to_string(Op op) noexcept {
  switch (op) {
    case Op::input: return "input";
    case Op::parameter: return "parameter";
    case Op::constant: return "constant";
    case Op::sum: return "sum";
    case Op::product: return "product";
    case Op::affine: return "affine";
    case Op::tanh: return "tanh";
    case Op::square: return "square";
    case Op::power: return "power";
    case Op::reciprocal: return "reciprocal";
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::exp: return "exp";
    case Op::mean: return "mean";
    case Op::row: return "row";
    case Op::stack: return "stack";
    case Op::detach: return "detach";
  }
  return "?";
}

namespace {

int broadcast_dim(int a, int b) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  fail(ErrorCode::shape, "incompatible dimensions " + std::to_string(a) +
                             " and " + std::to_string(b));
}

Shape broadcast(const Shape& a, const Shape& b) {
  return {broadcast_dim(a.rows, b.rows), broadcast_dim(a.cols, b.cols)};
}

void require(const Expr& e, const char* what) {
  if (!e) fail(ErrorCode::shape, std::string("null operand to ") + what);
}

std::shared_ptr<Node> make(Op op, Shape shape, std::vector<Expr> children) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->shape = shape;
  n->children = std::move(children);
  return n;
}

Expr unary(Op op, Expr a) {
  require(a, to_string(op));
  Shape s = a->shape;
  return make(op, s, {std::move(a)});
}

bool scalar_constant(const Expr& e, double* v) {
  if (e->op != Op::constant || e->value.size() != 1) return false;
  *v = e->value(0, 0);
  return true;
}

}  // namespace

Expr input(int id, std::string label, int rows) {
  if (id < 0 || rows < 1) fail(ErrorCode::shape, "invalid input declaration");
  auto n = make(Op::input, {rows, batch}, {});
  n->index = id;
  n->label = std::move(label);
  return n;
}

Expr parameter(int id, int rows, int cols, std::string label) {
  if (id < 0 || rows < 1 || cols < 1)
    fail(ErrorCode::shape, "invalid parameter declaration");
  auto n = make(Op::parameter, {rows, cols}, {});
  n->index = id;
  n->label = std::move(label);
  return n;
}

Expr constant(double v) {
  return constant(Eigen::MatrixXd::Constant(1, 1, v));
}

Expr constant(Eigen::MatrixXd v) {
  if (v.size() == 0) fail(ErrorCode::shape, "empty constant");
  auto n = make(Op::constant,
                {static_cast<int>(v.rows()), static_cast<int>(v.cols())}, {});
  n->value = std::move(v);
  return n;
}

bool is_zero_constant(const Expr& e) {
  return e && e->op == Op::constant && e->value.isZero(0.0);
}

Expr sum(std::vector<Expr> terms, std::vector<double> coeffs, double offset) {
  if (terms.size() != coeffs.size())
    fail(ErrorCode::shape, "sum: coefficient count mismatch");
  std::vector<Expr> kids;
  std::vector<double> cs;
  std::optional<Shape> shape;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(terms[i], "sum");
    shape = shape ? broadcast(*shape, terms[i]->shape) : terms[i]->shape;
    double c = coeffs[i];
    double k = 0.0;
    if (c == 0.0) continue;
    if (scalar_constant(terms[i], &k)) {
      offset += c * k;
      continue;
    }
    if (terms[i]->op == Op::sum && terms[i]->offset == 0.0) {
      for (std::size_t j = 0; j < terms[i]->children.size(); ++j) {
        kids.push_back(terms[i]->children[j]);
        cs.push_back(c * terms[i]->coeffs[j]);
      }
      continue;
    }
    kids.push_back(terms[i]);
    cs.push_back(c);
  }
  if (kids.empty()) {
    if (shape && !shape->batched())
      return constant(Eigen::MatrixXd::Constant(shape->rows, shape->cols, offset));
    return constant(offset);
  }
  if (kids.size() == 1 && cs[0] == 1.0 && offset == 0.0 && kids[0]->shape == *shape)
    return kids[0];
  auto n = make(Op::sum, *shape, std::move(kids));
  n->coeffs = std::move(cs);
  n->offset = offset;
  return n;
}

Expr product(Expr a, Expr b) {
  require(a, "product");
  require(b, "product");
  Shape s = broadcast(a->shape, b->shape);
  double k = 0.0;
  if (scalar_constant(a, &k) && b->shape == s) return sum({b}, {k});
  if (scalar_constant(b, &k) && a->shape == s) return sum({a}, {k});
  return make(Op::product, s, {std::move(a), std::move(b)});
}

Expr affine(Expr weight, Expr in, Expr bias) {
  require(weight, "affine");
  require(in, "affine");
  if (weight->shape.batched())
    fail(ErrorCode::shape, "affine: weight must not carry a batch dimension");
  if (weight->shape.cols != in->shape.rows)
    fail(ErrorCode::shape, "affine: weight has " + std::to_string(weight->shape.cols) +
                               " columns but operand has " +
                               std::to_string(in->shape.rows) + " rows");
  std::vector<Expr> kids{std::move(weight), std::move(in)};
  if (bias) {
    if (bias->shape.rows != kids[0]->shape.rows || bias->shape.cols != 1)
      fail(ErrorCode::shape, "affine: bias must be a column matching the weight rows");
    kids.push_back(std::move(bias));
  }
  Shape s{kids[0]->shape.rows, kids[1]->shape.cols};
  return make(Op::affine, s, std::move(kids));
}

Expr tanh(Expr a) { return unary(Op::tanh, std::move(a)); }
Expr square(Expr a) { return unary(Op::square, std::move(a)); }
Expr reciprocal(Expr a) { return unary(Op::reciprocal, std::move(a)); }
Expr sin(Expr a) { return unary(Op::sin, std::move(a)); }
Expr cos(Expr a) { return unary(Op::cos, std::move(a)); }
Expr exp(Expr a) { return unary(Op::exp, std::move(a)); }

Expr power(Expr a, double exponent) {
  require(a, "power");
  if (exponent == 1.0) return a;
  if (exponent == 2.0) return square(std::move(a));
  auto n = make(Op::power, a->shape, {a});
  n->offset = exponent;
  return n;
}

Expr mean(Expr a) {
  require(a, "mean");
  return make(Op::mean, {1, 1}, {std::move(a)});
}

Expr row(Expr a, int r) {
  require(a, "row");
  if (r < 0 || r >= a->shape.rows)
    fail(ErrorCode::shape, "row index " + std::to_string(r) + " out of range");
  if (a->shape.rows == 1) return a;
  const Shape s{1, a->shape.cols};
  auto n = make(Op::row, s, {std::move(a)});
  n->index = r;
  return n;
}

Expr stack(std::vector<Expr> parts) {
  if (parts.empty()) fail(ErrorCode::shape, "stack of nothing");
  if (parts.size() == 1) return parts[0];
  int rows = 0;
  int cols = 1;
  for (const auto& p : parts) {
    require(p, "stack");
    rows += p->shape.rows;
    cols = broadcast_dim(cols, p->shape.cols);
  }
  return make(Op::stack, {rows, cols}, std::move(parts));
}

Expr detach(Expr a) { return unary(Op::detach, std::move(a)); }

Expr operator+(Expr a, Expr b) { return sum({std::move(a), std::move(b)}, {1.0, 1.0}); }
Expr operator-(Expr a, Expr b) { return sum({std::move(a), std::move(b)}, {1.0, -1.0}); }
Expr operator*(Expr a, Expr b) { return product(std::move(a), std::move(b)); }
Expr operator*(double c, Expr a) { return sum({std::move(a)}, {c}); }
Expr operator+(Expr a, double c) { return sum({std::move(a)}, {1.0}, c); }
Expr operator-(Expr a) { return sum({std::move(a)}, {-1.0}); }

// ---------------------------------------------------------------------------

Expr Differentiator::derivative(const Expr& f, int input_id) {
  require(f, "derivative");
  Expr r = d(f, input_id);
  if (!r) return constant(0.0);
  return r;
}

Expr derivative(const Expr& f, int input_id) {
  Differentiator diff;
  return diff.derivative(f, input_id);
}

// Factor multiplying the operand's derivative for the unary ops; one per node
// regardless of how many inputs it is differentiated against.
Expr Differentiator::tanh_slope(const Expr& f) {
  auto it = slopes_.find(f.get());
  if (it != slopes_.end()) return it->second;
  const Expr& a = f->children[0];
  Expr s;
  switch (f->op) {
    case Op::tanh: s = sum({square(f)}, {-1.0}, 1.0); break;
    case Op::sin: s = cos(a); break;
    case Op::cos: s = -sin(a); break;
    case Op::exp: s = f; break;
    case Op::reciprocal: s = -square(f); break;
    case Op::power: s = f->offset * power(a, f->offset - 1.0); break;
    case Op::square: s = 2.0 * a; break;
    default: fail(ErrorCode::shape, "no slope for op");
  }
  keep_alive_.push_back(f);
  slopes_.emplace(f.get(), s);
  return s;
}

Expr Differentiator::d(const Expr& f, int id) {
  auto key = std::make_pair(f.get(), id);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;

  Expr r;
  switch (f->op) {
    case Op::input:
      if (f->index == id)
        r = constant(Eigen::MatrixXd::Ones(f->shape.rows, 1));
      break;
    case Op::parameter:
    case Op::constant:
      break;
    case Op::sum: {
      std::vector<Expr> ts;
      std::vector<double> cs;
      for (std::size_t i = 0; i < f->children.size(); ++i) {
        if (Expr dc = d(f->children[i], id)) {
          ts.push_back(dc);
          cs.push_back(f->coeffs[i]);
        }
      }
      if (!ts.empty()) r = sum(std::move(ts), std::move(cs));
      break;
    }
    case Op::product: {
      const Expr& a = f->children[0];
      const Expr& b = f->children[1];
      Expr da = d(a, id);
      Expr db = d(b, id);
      if (da && db)
        r = product(da, b) + product(a, db);
      else if (da)
        r = product(da, b);
      else if (db)
        r = product(a, db);
      break;
    }
    case Op::affine: {
      if (d(f->children[0], id))
        fail(ErrorCode::shape, "affine weights may not depend on inputs");
      if (Expr da = d(f->children[1], id)) r = affine(f->children[0], da);
      break;
    }
    case Op::tanh:
    case Op::square:
    case Op::power:
    case Op::reciprocal:
    case Op::sin:
    case Op::cos:
    case Op::exp:
      if (Expr da = d(f->children[0], id)) r = product(tanh_slope(f), da);
      break;
    case Op::mean:
      if (Expr da = d(f->children[0], id)) r = mean(da);
      break;
    case Op::row:
      if (Expr da = d(f->children[0], id))
        r = da->shape.rows == 1 ? da : row(da, f->index);
      break;
    case Op::stack: {
      std::vector<Expr> parts;
      bool any = false;
      for (const auto& p : f->children) {
        Expr dp = d(p, id);
        if (!dp) {
          dp = constant(Eigen::MatrixXd::Zero(p->shape.rows, 1));
        } else {
          any = true;
          if (dp->shape.rows != p->shape.rows)
            dp = product(constant(Eigen::MatrixXd::Ones(p->shape.rows, 1)), dp);
        }
        parts.push_back(dp);
      }
      if (any) r = stack(std::move(parts));
      break;
    }
    case Op::detach:
      if (Expr da = d(f->children[0], id)) r = detach(da);
      break;
  }
  keep_alive_.push_back(f);
  memo_.emplace(key, r);
  return r;
}

}  // namespace mirnn::ad
