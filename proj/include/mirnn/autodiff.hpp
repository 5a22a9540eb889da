#pragma once

// Batched expression graphs with symbolic forward-mode input derivatives and a
// compiled reverse pass for parameter gradients.
//
// Every node evaluates to a matrix. Columns index collocation points (the
// "batch" dimension, whose size is fixed only when inputs are bound), rows
// index neurons or fields. Parameters and constants are ordinary matrices that
// broadcast along the batch. Differentiating a graph with respect to an input
// returns a new graph, so second and mixed derivatives are plain composition,
// and the parameter gradient of any expression built from those derivatives
// comes from one reverse sweep over the compiled program.

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mirnn::ad {

enum class Op {
  input,
  parameter,
  constant,
  sum,  // offset + sum_i coeff_i * child_i
  product,
  affine,  // W * a (+ b)
  tanh,
  square,
  power,
  reciprocal,
  sin,
  cos,
  exp,
  mean,
  row,
  stack,
  detach,
};

const char* to_string(Op op) noexcept;

inline constexpr int batch = -1;

struct Shape {
  int rows = 1;
  int cols = 1;  // ad::batch for one column per bound point

  bool batched() const { return cols == batch; }
  bool scalar() const { return rows == 1 && cols == 1; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct Node;
using Expr = std::shared_ptr<const Node>;

struct Node {
  Op op = Op::constant;
  Shape shape;
  std::vector<Expr> children;
  int index = -1;  // input id, parameter id or selected row
  double offset = 0.0;  // sum offset, power exponent
  std::vector<double> coeffs;
  Eigen::MatrixXd value;  // constants only
  std::string label;
};

// Leaves.
Expr input(int id, std::string label = {}, int rows = 1);
Expr parameter(int id, int rows, int cols, std::string label = {});
Expr constant(double v);
Expr constant(Eigen::MatrixXd v);

// Linear combination offset + sum coeffs[i] * terms[i]. Nested sums with zero
// offset are flattened into the parent.
Expr sum(std::vector<Expr> terms, std::vector<double> coeffs, double offset = 0.0);
Expr product(Expr a, Expr b);
Expr affine(Expr weight, Expr in, Expr bias = nullptr);
Expr tanh(Expr a);
Expr square(Expr a);
Expr power(Expr a, double exponent);
Expr reciprocal(Expr a);
Expr sin(Expr a);
Expr cos(Expr a);
Expr exp(Expr a);
Expr mean(Expr a);
Expr row(Expr a, int r);
Expr stack(std::vector<Expr> parts);
/// Identity in value; blocks the reverse pass.
Expr detach(Expr a);

Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);
Expr operator*(double c, Expr a);
Expr operator+(Expr a, double c);
Expr operator-(Expr a);

bool is_zero_constant(const Expr& e);

/// Symbolic forward-mode differentiation with respect to input nodes. One
/// instance shares derivative subgraphs between calls, so requesting d/dx and
/// then d/dx of the result reuses the first-order graph.
class Differentiator {
 public:
  /// Derivative graph of f; a zero constant when f does not depend on the input.
  Expr derivative(const Expr& f, int input_id);

 private:
  Expr d(const Expr& f, int id);
  Expr tanh_slope(const Expr& tanh_node);

  std::map<std::pair<const Node*, int>, Expr> memo_;
  std::unordered_map<const Node*, Expr> slopes_;
  std::vector<Expr> keep_alive_;
};

Expr derivative(const Expr& f, int input_id);

struct Bindings {
  std::span<const Eigen::MatrixXd> inputs;  // by input id
  std::span<const Eigen::MatrixXd> params;  // by parameter id
};

using Gradient = std::vector<Eigen::MatrixXd>;

/// A topologically ordered evaluation plan for a fixed set of output graphs.
/// Owns the value and adjoint buffers; reuse one Program across batches to
/// avoid reallocating them.
class Program {
 public:
  explicit Program(std::vector<Expr> outputs);

  /// Evaluates all outputs. Throws numeric_overflow naming the first node that
  /// produced a non-finite entry.
  void forward(const Bindings& bindings);

  /// Re-evaluates only the nodes downstream of parameter `param`; everything
  /// else keeps its value from the previous forward. The bindings must be the
  /// same objects as in that call, with only this parameter's values changed.
  void reforward(const Bindings& bindings, std::size_t param);

  const Eigen::MatrixXd& value(std::size_t output) const;

  /// Reverse sweep from a scalar output. grads is resized to the bound
  /// parameters and holds zeros for parameters the output does not reach.
  void backward(std::size_t output, Gradient& grads);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t output_count() const { return outputs_.size(); }

 private:
  void eval_node(std::size_t slot, const Bindings& b);
  void accumulate(std::size_t slot, const Eigen::MatrixXd& g);
  const Eigen::MatrixXd& val(std::size_t slot) const { return *vptr_[slot]; }

  std::vector<Expr> roots_;
  std::vector<const Node*> nodes_;
  std::vector<std::vector<std::size_t>> kids_;
  std::vector<std::size_t> outputs_;
  std::vector<bool> needs_grad_;
  std::vector<Eigen::MatrixXd> values_;
  std::vector<const Eigen::MatrixXd*> vptr_;
  std::vector<Eigen::MatrixXd> adj_;
  std::vector<bool> touched_;
  std::vector<std::optional<std::vector<std::size_t>>> downstream_;
  std::span<const Eigen::MatrixXd> bound_params_;
  bool evaluated_ = false;
};

/// Value of a scalar (1x1) expression.
double eval(const Expr& e, const Bindings& bindings);
Eigen::MatrixXd evaluate(const Expr& e, const Bindings& bindings);

struct DerivativeOrder {
  int input = 0;
  int order = 1;
};

struct DerivativeEntry {
  int input = 0;
  int order = 1;
  double value = 0.0;
  Expr expr;
};

/// Value and requested input derivatives of a scalar function at one point.
struct DerivativeBundle {
  double value = 0.0;
  std::vector<DerivativeEntry> entries;

  const DerivativeEntry* find(int input, int order) const;
  double first(int input) const;
  double second(int input) const;
};

DerivativeBundle input_derivatives(const Expr& fn, const Bindings& point,
                                   std::span<const DerivativeOrder> orders);

Gradient param_gradient(const Expr& loss, const Bindings& bindings);

/// Max over the requested derivatives of |ad - fd| / (|ad| + step), with
/// central differences in the bound input.
double fd_check(const Expr& fn, const Bindings& point,
                std::span<const DerivativeOrder> orders, double step = 1e-4);

}  // namespace mirnn::ad
