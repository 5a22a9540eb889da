#include "mirnn/autodiff.hpp"
#include "mirnn/error.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace mirnn::ad {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

// Read-only view of a matrix broadcast to R x C.
struct View {
  const double* p;
  Index rs;
  Index cs;
  double operator()(Index i, Index j) const { return p[i * rs + j * cs]; }
};

View view(const MatrixXd& m, Index R, Index C) {
  if ((m.rows() != R && m.rows() != 1) || (m.cols() != C && m.cols() != 1))
    fail(ErrorCode::shape, "cannot broadcast " + std::to_string(m.rows()) + "x" +
                               std::to_string(m.cols()) + " to " + std::to_string(R) +
                               "x" + std::to_string(C));
  return {m.data(), (m.rows() == 1 && R > 1) ? 0 : 1,
          (m.cols() == 1 && C > 1) ? 0 : m.rows()};
}

std::string describe(const Node* n, std::size_t slot) {
  std::string s = std::string(to_string(n->op)) + " node #" + std::to_string(slot);
  if (!n->label.empty()) s += " '" + n->label + "'";
  return s;
}

template <typename F>
void map_unary(const MatrixXd& a, MatrixXd& out, F f) {
  out.resize(a.rows(), a.cols());
  const double* src = a.data();
  double* dst = out.data();
  const Index n = a.size();
  for (Index k = 0; k < n; ++k) dst[k] = f(src[k]);
}

// out = W * a (+ b). Every entry is b_i + sum_c W_ic a_cj accumulated in
// ascending c, so a column's bits do not depend on how many other columns
// share the batch. Rows are blocked so partial sums stay in registers.
#if defined(__AVX512F__)
// Four columns at a time, eight rows per register, tails masked. Multiply and
// add stay separate so the bits match the portable loop below.
template <int NC>
inline void affine_tile(const double* w, Index m, Index k, const double* a,
                        const double* bd, double* o, Index i0) {
  const __mmask8 mask = static_cast<__mmask8>((1u << std::min<Index>(8, m - i0)) - 1);
  __m512d acc[NC];
  const __m512d b0 = bd ? _mm512_maskz_loadu_pd(mask, bd + i0) : _mm512_setzero_pd();
  for (int q = 0; q < NC; ++q) acc[q] = b0;
  for (Index c = 0; c < k; ++c) {
    const __m512d wv = _mm512_maskz_loadu_pd(mask, w + c * m + i0);
    for (int q = 0; q < NC; ++q)
      acc[q] = _mm512_add_pd(acc[q], _mm512_mul_pd(wv, _mm512_set1_pd(a[q * k + c])));
  }
  for (int q = 0; q < NC; ++q) _mm512_mask_storeu_pd(o + q * m + i0, mask, acc[q]);
}

void affine_kernel(const MatrixXd& W, const MatrixXd& a, const MatrixXd* b,
                   MatrixXd& out) {
  const Index m = W.rows();
  const Index k = W.cols();
  const Index n = a.cols();
  out.resize(m, n);
  const double* w = W.data();
  const double* bd = b ? b->data() : nullptr;
  Index j = 0;
  for (; j + 4 <= n; j += 4)
    for (Index i0 = 0; i0 < m; i0 += 8)
      affine_tile<4>(w, m, k, a.data() + j * k, bd, out.data() + j * m, i0);
  for (; j < n; ++j)
    for (Index i0 = 0; i0 < m; i0 += 8)
      affine_tile<1>(w, m, k, a.data() + j * k, bd, out.data() + j * m, i0);
}
#else
void affine_kernel(const MatrixXd& W, const MatrixXd& a, const MatrixXd* b,
                   MatrixXd& out) {
  constexpr Index B = 8;
  const Index m = W.rows();
  const Index k = W.cols();
  const Index n = a.cols();
  out.resize(m, n);
  const double* w = W.data();
  const double* bd = b ? b->data() : nullptr;
  for (Index j = 0; j < n; ++j) {
    double* o = out.data() + j * m;
    const double* col = a.data() + j * k;
    Index i0 = 0;
    for (; i0 + B <= m; i0 += B) {
      double acc[B];
      for (Index r = 0; r < B; ++r) acc[r] = bd ? bd[i0 + r] : 0.0;
      for (Index c = 0; c < k; ++c) {
        const double s = col[c];
        const double* wc = w + c * m + i0;
        for (Index r = 0; r < B; ++r) acc[r] += wc[r] * s;
      }
      for (Index r = 0; r < B; ++r) o[i0 + r] = acc[r];
    }
    if (i0 < m) {
      const Index nb = m - i0;
      double acc[B];
      for (Index r = 0; r < nb; ++r) acc[r] = bd ? bd[i0 + r] : 0.0;
      for (Index c = 0; c < k; ++c) {
        const double s = col[c];
        const double* wc = w + c * m + i0;
        for (Index r = 0; r < nb; ++r) acc[r] += wc[r] * s;
      }
      for (Index r = 0; r < nb; ++r) o[i0 + r] = acc[r];
    }
  }
}
#endif

#if defined(MIRNN_HAVE_MVEC) && defined(__AVX512F__)
extern "C" __m512d _ZGVeN8v_tanh(__m512d);

// glibc's vector tanh (within a few ulp of the scalar one). The tail goes
// through a padded lane so every entry takes the same path whatever the batch.
void tanh_kernel(const MatrixXd& a, MatrixXd& out) {
  out.resize(a.rows(), a.cols());
  const double* src = a.data();
  double* dst = out.data();
  const Index n = a.size();
  Index k = 0;
  for (; k + 8 <= n; k += 8) _mm512_storeu_pd(dst + k, _ZGVeN8v_tanh(_mm512_loadu_pd(src + k)));
  if (k < n) {
    alignas(64) double buf[8] = {};
    for (Index r = k; r < n; ++r) buf[r - k] = src[r];
    _mm512_store_pd(buf, _ZGVeN8v_tanh(_mm512_load_pd(buf)));
    for (Index r = k; r < n; ++r) dst[r] = buf[r - k];
  }
}
#else
void tanh_kernel(const MatrixXd& a, MatrixXd& out) {
  map_unary(a, out, [](double x) { return std::tanh(x); });
}
#endif

}  // namespace

Program::Program(std::vector<Expr> outputs) : roots_(std::move(outputs)) {
  std::unordered_map<const Node*, std::size_t> slot_of;
  // Iterative post-order DFS.
  struct Frame {
    const Node* node;
    std::size_t next;
  };
  for (const auto& root : roots_) {
    if (!root) fail(ErrorCode::shape, "null program output");
    if (slot_of.count(root.get())) {
      outputs_.push_back(slot_of[root.get()]);
      continue;
    }
    std::vector<Frame> stack{{root.get(), 0}};
    while (!stack.empty()) {
      Frame& top = stack.back();
      if (top.next < top.node->children.size()) {
        const Node* c = top.node->children[top.next++].get();
        if (!slot_of.count(c)) stack.push_back({c, 0});
        continue;
      }
      const Node* n = top.node;
      stack.pop_back();
      if (slot_of.count(n)) continue;
      std::vector<std::size_t> ks;
      bool grad = n->op == Op::parameter;
      for (const auto& c : n->children) {
        ks.push_back(slot_of.at(c.get()));
        grad = grad || needs_grad_[ks.back()];
      }
      if (n->op == Op::detach) grad = false;
      slot_of[n] = nodes_.size();
      nodes_.push_back(n);
      kids_.push_back(std::move(ks));
      needs_grad_.push_back(grad);
    }
    outputs_.push_back(slot_of.at(root.get()));
  }
  values_.resize(nodes_.size());
  vptr_.assign(nodes_.size(), nullptr);
  adj_.resize(nodes_.size());
  touched_.assign(nodes_.size(), false);
}

const MatrixXd& Program::value(std::size_t output) const {
  if (!evaluated_) fail(ErrorCode::binding, "program has not been evaluated");
  return val(outputs_.at(output));
}

void Program::forward(const Bindings& b) {
  evaluated_ = false;
  bound_params_ = b.params;
  for (std::size_t s = 0; s < nodes_.size(); ++s) eval_node(s, b);
  evaluated_ = true;
}

void Program::reforward(const Bindings& b, std::size_t param) {
  if (!evaluated_) fail(ErrorCode::binding, "reforward before forward");
  if (param >= downstream_.size()) downstream_.resize(param + 1);
  auto& slots = downstream_[param];
  if (!slots) {
    std::vector<bool> hit(nodes_.size(), false);
    slots.emplace();
    for (std::size_t s = 0; s < nodes_.size(); ++s) {
      const Node* n = nodes_[s];
      bool h = n->op == Op::parameter && static_cast<std::size_t>(n->index) == param;
      for (auto c : kids_[s]) h = h || hit[c];
      hit[s] = h;
      if (h) slots->push_back(s);
    }
  }
  evaluated_ = false;
  bound_params_ = b.params;
  for (auto s : *slots) eval_node(s, b);
  evaluated_ = true;
}

void Program::eval_node(std::size_t s, const Bindings& b) {
  const Node* n = nodes_[s];
  const auto& k = kids_[s];
  MatrixXd& out = values_[s];
  switch (n->op) {
    case Op::input: {
      const auto id = static_cast<std::size_t>(n->index);
      if (id >= b.inputs.size() || b.inputs[id].size() == 0)
        fail(ErrorCode::binding, "unbound " + describe(n, s));
      if (b.inputs[id].rows() != n->shape.rows)
        fail(ErrorCode::binding, "input " + describe(n, s) + " bound with " +
                                     std::to_string(b.inputs[id].rows()) + " rows, expected " +
                                     std::to_string(n->shape.rows));
      vptr_[s] = &b.inputs[id];
      if (!vptr_[s]->allFinite())
        fail(ErrorCode::numeric_overflow, "non-finite value bound to " + describe(n, s));
      return;
    }
    case Op::parameter: {
      const auto id = static_cast<std::size_t>(n->index);
      if (id >= b.params.size() || b.params[id].size() == 0)
        fail(ErrorCode::binding, "unbound " + describe(n, s));
      if (b.params[id].rows() != n->shape.rows || b.params[id].cols() != n->shape.cols)
        fail(ErrorCode::binding, "parameter " + describe(n, s) + " bound with wrong shape");
      vptr_[s] = &b.params[id];
      return;
    }
    case Op::constant:
      vptr_[s] = &n->value;
      return;
    case Op::detach:
      vptr_[s] = vptr_[k[0]];
      return;
    case Op::sum: {
      Index R = 1, C = 1;
      for (auto c : k) {
        R = std::max(R, val(c).rows());
        C = std::max(C, val(c).cols());
      }
      out.resize(R, C);
      out.setConstant(n->offset);
      for (std::size_t i = 0; i < k.size(); ++i) {
        const MatrixXd& a = val(k[i]);
        const double c = n->coeffs[i];
        if (a.rows() == R && a.cols() == C) {
          const double* src = a.data();
          double* dst = out.data();
          const Index sz = out.size();
          for (Index q = 0; q < sz; ++q) dst[q] += c * src[q];
        } else {
          View v = view(a, R, C);
          for (Index j = 0; j < C; ++j)
            for (Index r = 0; r < R; ++r) out(r, j) += c * v(r, j);
        }
      }
      break;
    }
    case Op::product: {
      const MatrixXd& a = val(k[0]);
      const MatrixXd& c = val(k[1]);
      const Index R = std::max(a.rows(), c.rows());
      const Index C = std::max(a.cols(), c.cols());
      out.resize(R, C);
      if (a.rows() == R && a.cols() == C && c.rows() == R && c.cols() == C) {
        const Index sz = out.size();
        for (Index q = 0; q < sz; ++q) out.data()[q] = a.data()[q] * c.data()[q];
      } else {
        View va = view(a, R, C);
        View vc = view(c, R, C);
        for (Index j = 0; j < C; ++j)
          for (Index r = 0; r < R; ++r) out(r, j) = va(r, j) * vc(r, j);
      }
      break;
    }
    case Op::affine:
      affine_kernel(val(k[0]), val(k[1]), k.size() > 2 ? &val(k[2]) : nullptr, out);
      break;
    case Op::tanh:
      tanh_kernel(val(k[0]), out);
      break;
    case Op::square:
      map_unary(val(k[0]), out, [](double x) { return x * x; });
      break;
    case Op::power: {
      const double p = n->offset;
      map_unary(val(k[0]), out, [p](double x) { return std::pow(x, p); });
      break;
    }
    case Op::reciprocal:
      map_unary(val(k[0]), out, [](double x) { return 1.0 / x; });
      break;
    case Op::sin:
      map_unary(val(k[0]), out, [](double x) { return std::sin(x); });
      break;
    case Op::cos:
      map_unary(val(k[0]), out, [](double x) { return std::cos(x); });
      break;
    case Op::exp:
      map_unary(val(k[0]), out, [](double x) { return std::exp(x); });
      break;
    case Op::mean: {
      const MatrixXd& a = val(k[0]);
      double acc = 0.0;
      const Index sz = a.size();
      for (Index q = 0; q < sz; ++q) acc += a.data()[q];
      out.resize(1, 1);
      out(0, 0) = acc / static_cast<double>(sz);
      break;
    }
    case Op::row:
      out = val(k[0]).row(n->index);
      break;
    case Op::stack: {
      Index C = 1;
      for (auto c : k) C = std::max(C, val(c).cols());
      out.resize(n->shape.rows, C);
      Index off = 0;
      for (auto c : k) {
        const MatrixXd& a = val(c);
        if (a.cols() == C)
          out.middleRows(off, a.rows()) = a;
        else
          out.middleRows(off, a.rows()) = a.replicate(1, C);
        off += a.rows();
      }
      break;
    }
  }
  vptr_[s] = &out;
  if (!out.allFinite())
    fail(ErrorCode::numeric_overflow, "non-finite value in " + describe(n, s));
}

// Adds g into the adjoint of slot, summing over broadcast dimensions.
void Program::accumulate(std::size_t slot, const MatrixXd& g) {
  const MatrixXd& v = val(slot);
  MatrixXd& a = adj_[slot];
  auto add = [&](const auto& expr) {
    if (touched_[slot]) {
      a += expr;
    } else {
      a = expr;
      touched_[slot] = true;
    }
  };
  if (g.rows() == v.rows() && g.cols() == v.cols()) {
    add(g);
  } else if (v.rows() == g.rows() && v.cols() == 1) {
    add(g.rowwise().sum());
  } else if (v.cols() == g.cols() && v.rows() == 1) {
    add(g.colwise().sum());
  } else if (v.size() == 1) {
    add(MatrixXd::Constant(1, 1, g.sum()));
  } else {
    fail(ErrorCode::shape, "adjoint shape mismatch");
  }
}

void Program::backward(std::size_t output, Gradient& grads) {
  if (!evaluated_) fail(ErrorCode::binding, "backward before forward");
  const std::size_t root = outputs_.at(output);
  if (val(root).size() != 1)
    fail(ErrorCode::shape, "parameter gradient needs a scalar output, got " +
                               std::to_string(val(root).rows()) + "x" +
                               std::to_string(val(root).cols()));
  grads.resize(bound_params_.size());
  for (std::size_t i = 0; i < bound_params_.size(); ++i)
    grads[i].setZero(bound_params_[i].rows(), bound_params_[i].cols());
  std::fill(touched_.begin(), touched_.end(), false);
  if (!needs_grad_[root]) return;

  adj_[root] = MatrixXd::Ones(1, 1);
  touched_[root] = true;
  for (std::size_t s = root + 1; s-- > 0;) {
    if (!touched_[s] || !needs_grad_[s]) continue;
    const Node* n = nodes_[s];
    const auto& k = kids_[s];
    const MatrixXd& G = adj_[s];
    auto want = [&](std::size_t i) { return needs_grad_[k[i]]; };
    switch (n->op) {
      case Op::parameter:
        grads[static_cast<std::size_t>(n->index)] += G;
        break;
      case Op::input:
      case Op::constant:
      case Op::detach:
        break;
      case Op::sum:
        for (std::size_t i = 0; i < k.size(); ++i)
          if (want(i)) accumulate(k[i], n->coeffs[i] * G);
        break;
      case Op::product: {
        for (std::size_t i = 0; i < 2; ++i) {
          if (!want(i)) continue;
          const MatrixXd& other = val(k[1 - i]);
          if (other.rows() == G.rows() && other.cols() == G.cols())
            accumulate(k[i], G.cwiseProduct(other));
          else if (other.size() == 1)
            accumulate(k[i], other(0, 0) * G);
          else if (other.rows() == 1)
            accumulate(k[i], (G.array().rowwise() * other.row(0).array()).matrix());
          else
            accumulate(k[i], (G.array().colwise() * other.col(0).array()).matrix());
        }
        break;
      }
      case Op::affine: {
        const MatrixXd& W = val(k[0]);
        const MatrixXd& A = val(k[1]);
        if (want(0)) accumulate(k[0], G * A.transpose());
        if (want(1)) accumulate(k[1], W.transpose() * G);
        if (k.size() > 2 && want(2)) accumulate(k[2], G.rowwise().sum());
        break;
      }
      case Op::tanh: {
        const MatrixXd& y = val(s);
        accumulate(k[0], (G.array() * (1.0 - y.array().square())).matrix());
        break;
      }
      case Op::square:
        accumulate(k[0], (2.0 * G.array() * val(k[0]).array()).matrix());
        break;
      case Op::power: {
        const double p = n->offset;
        accumulate(k[0], (p * G.array() * val(k[0]).array().pow(p - 1.0)).matrix());
        break;
      }
      case Op::reciprocal:
        accumulate(k[0], (-G.array() * val(s).array().square()).matrix());
        break;
      case Op::sin:
        accumulate(k[0], (G.array() * val(k[0]).array().cos()).matrix());
        break;
      case Op::cos:
        accumulate(k[0], (-G.array() * val(k[0]).array().sin()).matrix());
        break;
      case Op::exp:
        accumulate(k[0], (G.array() * val(s).array()).matrix());
        break;
      case Op::mean: {
        const MatrixXd& a = val(k[0]);
        accumulate(k[0], MatrixXd::Constant(a.rows(), a.cols(),
                                            G(0, 0) / static_cast<double>(a.size())));
        break;
      }
      case Op::row: {
        const MatrixXd& a = val(k[0]);
        MatrixXd g = MatrixXd::Zero(a.rows(), G.cols());
        g.row(n->index) = G;
        accumulate(k[0], g);
        break;
      }
      case Op::stack: {
        Index off = 0;
        for (std::size_t i = 0; i < k.size(); ++i) {
          const Index r = val(k[i]).rows();
          if (want(i)) accumulate(k[i], G.middleRows(off, r));
          off += r;
        }
        break;
      }
    }
  }
}

}  // namespace mirnn::ad
