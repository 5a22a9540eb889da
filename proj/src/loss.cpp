#include "mirnn/loss.hpp"
#include "mirnn/error.hpp"

#include <cmath>
#include <random>

namespace mirnn {

using ad::Expr;

std::vector<double> LossBreakdown::components() const {
  std::vector<double> out{initial};
  for (const auto* v : {&pde, &bc, &mutual, &mutual_bc, &mutual_pde})
    out.insert(out.end(), v->begin(), v->end());
  return out;
}

std::vector<std::string> LossBreakdown::component_names() const {
  // Blocks are numbered from 1 in reports; pairs by their two blocks.
  std::vector<std::string> out{"ic"};
  auto blocks = [&](const std::vector<double>& v, const std::string& name) {
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(name + std::to_string(i + 1));
  };
  auto pairs = [&](const std::vector<double>& v, const std::string& name) {
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(name + std::to_string(i + 1) + std::to_string(i + 2));
  };
  blocks(pde, "pde_");
  blocks(bc, "bc_");
  pairs(mutual, "mutual_");
  pairs(mutual_bc, "mutual_bc_");
  pairs(mutual_pde, "mutual_pde_");
  return out;
}

// ---------------------------------------------------------------------------

MiRnnSurrogate::MiRnnSurrogate(LayerSpec spec, TimePartition partition,
                               ConditioningPolicy policy, ForgetFactorSchedule ff)
    : net_(std::move(spec)), partition_(std::move(partition)), policy_(policy), ff_(ff) {}

QueryGraph MiRnnSurrogate::build(int block, InputIds& ids, const std::string& label) const {
  return build_query(net_, policy_, block, ids, label);
}

void MiRnnSurrogate::bind(const QueryGraph& q, const Eigen::MatrixXd& coords,
                          std::vector<Eigen::MatrixXd>& inputs) const {
  bind_query(q, partition_, policy_, ff_, coords, inputs);
}

ExactSurrogate::ExactSurrogate(PdeProblem problem, int blocks)
    : problem_(std::move(problem)), blocks_(blocks) {}

QueryGraph ExactSurrogate::build(int block, InputIds& ids, const std::string& label) const {
  QueryGraph q;
  q.block = block;
  for (int i = 0; i < problem_.coord_count(); ++i) {
    q.coord_ids.push_back(ids.next());
    q.coords.push_back(ad::input(q.coord_ids.back(), label + ".c" + std::to_string(i)));
  }
  q.fields = ad::stack(problem_.exact(q.coords));
  return q;
}

void ExactSurrogate::bind(const QueryGraph& q, const Eigen::MatrixXd& coords,
                          std::vector<Eigen::MatrixXd>& inputs) const {
  if (coords.rows() != static_cast<Eigen::Index>(q.coord_ids.size()))
    fail(ErrorCode::shape, "query coordinates do not match the problem");
  for (std::size_t i = 0; i < q.coord_ids.size(); ++i)
    inputs.at(static_cast<std::size_t>(q.coord_ids[i])) =
        coords.row(static_cast<Eigen::Index>(i));
}

// ---------------------------------------------------------------------------

LossLayout training_layout(const PdeProblem& problem, const TimePartition& partition,
                           const MutualLossConfig& mutual) {
  const int n = partition.block_count();
  LossLayout l;
  l.pde.assign(static_cast<std::size_t>(n), true);
  l.bc.assign(static_cast<std::size_t>(n), true);
  for (int p = 0; p + 1 < n; ++p)
    l.mutual.push_back(mutual.enabled && partition.has_mutual_overlap(p));
  l.mutual_bc = mutual.bc;
  l.mutual_pde = mutual.pde;
  l.noise = mutual.noise_sigma > 0.0;
  l.detach = mutual.detach;
  l.periodic = problem.boundary == BoundaryKind::periodic;
  return l;
}

namespace {

enum Stream : std::uint64_t { s_interior = 1, s_boundary, s_initial, s_mutual, s_mutual_bc, s_noise };

std::uint64_t stream(Stream s, int index) {
  return static_cast<std::uint64_t>(s) * 1000 + static_cast<std::uint64_t>(index);
}

}  // namespace

PointSets sample_epoch(const PdeProblem& problem, const TimePartition& partition,
                       const SamplingSpec& spec, const LossLayout& layout, double noise_sigma,
                       std::uint64_t noise_seed, std::uint64_t epoch) {
  spec.validate();
  if (!(noise_sigma >= 0.0)) fail(ErrorCode::config, "noise sigma must be >= 0");
  const int n = partition.block_count();
  const int interior = spec.per_block ? spec.interior : std::max(1, spec.interior / n);
  const int boundary = spec.per_block ? spec.boundary : std::max(1, spec.boundary / n);
  const Domain& dom = problem.domain;
  PointSets s;
  auto rng = [&](Stream st, int i) { return std::mt19937_64(derive_seed(spec.seed, stream(st, i), epoch)); };
  auto draw = [&](Region r, int count, Interval iv, std::mt19937_64& g) {
    return sample_points(dom, r, count, iv, g, spec.excluded_times, spec.exclusion_band);
  };
  if (layout.initial) {
    auto g = rng(s_initial, 0);
    s.initial = draw(Region::initial, spec.initial, partition.block(0), g);
  }
  for (int b = 0; b < n; ++b) {
    const Interval& iv = partition.block(b);
    auto gi = rng(s_interior, b);
    s.interior.push_back(draw(Region::interior, interior, iv, gi));
    auto gb = rng(s_boundary, b);
    if (layout.periodic) {
      auto [a, c] = sample_periodic_pairs(dom, boundary, iv, gb);
      s.boundary.push_back(std::move(a));
      s.periodic.push_back(std::move(c));
    } else {
      s.boundary.push_back(draw(Region::boundary, boundary, iv, gb));
    }
  }
  for (int p = 0; p + 1 < n; ++p) {
    const bool on = static_cast<std::size_t>(p) < layout.mutual.size() &&
                    layout.mutual[static_cast<std::size_t>(p)];
    if (!on) {
      s.mutual.emplace_back();
      s.mutual_boundary.emplace_back();
      s.noise.emplace_back();
      continue;
    }
    const Interval iv = partition.mutual_interval(p);
    auto gm = rng(s_mutual, p);
    s.mutual.push_back(draw(Region::interior, spec.mutual, iv, gm));
    if (layout.mutual_bc) {
      auto g = rng(s_mutual_bc, p);
      s.mutual_boundary.push_back(draw(Region::boundary, boundary, iv, g));
    } else {
      s.mutual_boundary.emplace_back();
    }
    Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(problem.field_count(), spec.mutual);
    if (noise_sigma > 0.0) {
      std::mt19937_64 g(derive_seed(noise_seed, stream(s_noise, p), epoch));
      std::normal_distribution<double> normal(0.0, noise_sigma);
      for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(g);
    }
    s.noise.push_back(std::move(noise));
  }
  return s;
}

Expr mse(const Expr& a, const Expr& b) { return ad::mean(ad::square(a - b)); }

// ---------------------------------------------------------------------------

namespace {

enum class Term { initial, pde, bc, mutual, mutual_bc, mutual_pde };

void require_times(const Eigen::MatrixXd& pts, Interval iv, const std::string& what) {
  const Eigen::Index t = pts.rows() - 1;
  for (Eigen::Index i = 0; i < pts.cols(); ++i)
    if (!iv.contains(pts(t, i)))
      fail(ErrorCode::domain, what + " point at t = " + std::to_string(pts(t, i)) +
                                  " lies outside [" + std::to_string(iv.start) + ", " +
                                  std::to_string(iv.end) + "]");
}

}  // namespace

struct LossGraph::Target {
  Term term;
  int index = 0;  // block or pair
  QueryGraph a;
  QueryGraph b;  // second query for mutual terms and periodic partners
  int target_id = -1;
  int noise_id = -1;
};

LossGraph::LossGraph(const Surrogate& surrogate, const PdeProblem& problem, LossLayout layout,
                     LossWeights weights)
    : surrogate_(&surrogate), problem_(problem), layout_(std::move(layout)) {
  const int n = surrogate.block_count();
  const auto nb = static_cast<std::size_t>(n);
  layout_.pde.resize(nb, false);
  layout_.bc.resize(nb, false);
  layout_.mutual.resize(n > 0 ? nb - 1 : 0, false);
  const int fields = problem_.field_count();
  ad::Differentiator diff;

  std::vector<Expr> comps;
  std::vector<double> coeffs;
  auto add = [&](std::unique_ptr<Target> t, Expr e, double w) {
    slots_.push_back(static_cast<int>(comps.size()) + 1);
    comps.push_back(std::move(e));
    coeffs.push_back(w);
    targets_.push_back(std::move(t));
  };
  auto skip = [&] { slots_.push_back(-1); };
  auto residual = [&](const QueryGraph& q) {
    return ad::stack(residual_exprs(diff, problem_, q.fields, q.coord_ids));
  };
  auto target_input = [&](Target& t, const std::string& label) {
    t.target_id = ids_.next();
    return ad::input(t.target_id, label, fields);
  };

  if (layout_.initial) {
    auto t = std::make_unique<Target>(Target{Term::initial, 0, {}, {}, -1, -1});
    t->a = surrogate.build(0, ids_, "ic");
    Expr e = mse(t->a.fields, target_input(*t, "ic.target"));
    add(std::move(t), e, weights.initial);
  } else {
    skip();
  }
  for (int b = 0; b < n; ++b) {
    if (!layout_.pde[static_cast<std::size_t>(b)]) {
      skip();
      continue;
    }
    auto t = std::make_unique<Target>(Target{Term::pde, b, {}, {}, -1, -1});
    const std::string label = "pde" + std::to_string(b);
    t->a = surrogate.build(b, ids_, label);
    Expr e = ad::mean(ad::square(residual(t->a)));
    add(std::move(t), e, weights.pde);
  }
  for (int b = 0; b < n; ++b) {
    if (!layout_.bc[static_cast<std::size_t>(b)]) {
      skip();
      continue;
    }
    auto t = std::make_unique<Target>(Target{Term::bc, b, {}, {}, -1, -1});
    const std::string label = "bc" + std::to_string(b);
    t->a = surrogate.build(b, ids_, label);
    Expr e;
    if (layout_.periodic) {
      t->b = surrogate.build(b, ids_, label + ".partner");
      e = mse(t->a.fields, t->b.fields);
    } else {
      e = mse(t->a.fields, target_input(*t, label + ".target"));
    }
    add(std::move(t), e, weights.bc);
  }
  const auto pairs = layout_.mutual.size();
  // Block p's prediction, optionally noisy and detached, is the reference for
  // block p + 1 over the shared interval.
  for (std::size_t p = 0; p < pairs; ++p) {
    if (!layout_.mutual[p]) {
      skip();
      continue;
    }
    const int pi = static_cast<int>(p);
    auto t = std::make_unique<Target>(Target{Term::mutual, pi, {}, {}, -1, -1});
    const std::string label = "mutual" + std::to_string(pi);
    t->a = surrogate.build(pi, ids_, label + ".prev");
    t->b = surrogate.build(pi + 1, ids_, label + ".next");
    Expr ref = t->a.fields;
    if (layout_.noise) {
      t->noise_id = ids_.next();
      ref = ref + ad::input(t->noise_id, label + ".noise", fields);
    }
    if (layout_.detach) ref = ad::detach(ref);
    Expr e = mse(t->b.fields, ref);
    add(std::move(t), e, weights.mutual);
  }
  for (std::size_t p = 0; p < pairs; ++p) {
    if (!layout_.mutual[p] || !layout_.mutual_bc) {
      if (layout_.mutual_bc) skip();
      continue;
    }
    const int pi = static_cast<int>(p);
    auto t = std::make_unique<Target>(Target{Term::mutual_bc, pi, {}, {}, -1, -1});
    const std::string label = "mutual_bc" + std::to_string(pi);
    t->a = surrogate.build(pi, ids_, label + ".prev");
    t->b = surrogate.build(pi + 1, ids_, label + ".next");
    Expr tgt = target_input(*t, label + ".target");
    Expr e = ad::mean(ad::square(ad::stack({t->a.fields - tgt, t->b.fields - tgt})));
    add(std::move(t), e, weights.mutual_bc);
  }
  for (std::size_t p = 0; p < pairs; ++p) {
    if (!layout_.mutual[p] || !layout_.mutual_pde) {
      if (layout_.mutual_pde) skip();
      continue;
    }
    const int pi = static_cast<int>(p);
    auto t = std::make_unique<Target>(Target{Term::mutual_pde, pi, {}, {}, -1, -1});
    const std::string label = "mutual_pde" + std::to_string(pi);
    t->a = surrogate.build(pi, ids_, label + ".prev");
    t->b = surrogate.build(pi + 1, ids_, label + ".next");
    Expr e = ad::mean(ad::square(ad::stack({residual(t->a), residual(t->b)})));
    add(std::move(t), e, weights.mutual_pde);
  }
  if (comps.empty()) fail(ErrorCode::config, "loss has no terms");
  total_ = ad::sum(comps, coeffs);
  std::vector<Expr> outs{total_};
  outs.insert(outs.end(), comps.begin(), comps.end());
  program_ = std::make_unique<ad::Program>(std::move(outs));
  inputs_.resize(static_cast<std::size_t>(ids_.count()));
}

LossGraph::~LossGraph() = default;

std::size_t LossGraph::node_count() const { return program_->node_count(); }

void LossGraph::bind(const PointSets& pts) {
  const Surrogate& s = *surrogate_;
  auto at = [](const std::vector<Eigen::MatrixXd>& v, int i, const char* what) -> const Eigen::MatrixXd& {
    if (i < 0 || static_cast<std::size_t>(i) >= v.size() || v[static_cast<std::size_t>(i)].cols() == 0)
      fail(ErrorCode::config, std::string("no ") + what + " points for term " + std::to_string(i));
    return v[static_cast<std::size_t>(i)];
  };
  auto set_target = [&](const Target& t, const Eigen::MatrixXd& coords) {
    inputs_[static_cast<std::size_t>(t.target_id)] = exact_values(problem_, coords);
  };
  const double t0 = problem_.t_start;
  for (const auto& tp : targets_) {
    const Target& t = *tp;
    switch (t.term) {
      case Term::initial: {
        if (pts.initial.cols() == 0) fail(ErrorCode::config, "initial point set is empty");
        const Eigen::Index tr = pts.initial.rows() - 1;
        for (Eigen::Index i = 0; i < pts.initial.cols(); ++i)
          if (pts.initial(tr, i) != t0)
            fail(ErrorCode::domain, "initial point off the t = " + std::to_string(t0) + " slice");
        s.bind(t.a, pts.initial, inputs_);
        set_target(t, pts.initial);
        break;
      }
      case Term::pde: {
        const auto& x = at(pts.interior, t.index, "interior");
        s.bind(t.a, x, inputs_);
        break;
      }
      case Term::bc: {
        const auto& x = at(pts.boundary, t.index, "boundary");
        s.bind(t.a, x, inputs_);
        if (layout_.periodic)
          s.bind(t.b, at(pts.periodic, t.index, "periodic partner"), inputs_);
        else
          set_target(t, x);
        break;
      }
      case Term::mutual: {
        const auto& x = at(pts.mutual, t.index, "mutual");
        s.bind(t.a, x, inputs_);
        s.bind(t.b, x, inputs_);
        if (t.noise_id >= 0) {
          const auto& nz = at(pts.noise, t.index, "noise");
          if (nz.rows() != problem_.field_count() || nz.cols() != x.cols())
            fail(ErrorCode::shape, "noise does not match the mutual points");
          inputs_[static_cast<std::size_t>(t.noise_id)] = nz;
        }
        break;
      }
      case Term::mutual_bc: {
        const auto& x = at(pts.mutual_boundary, t.index, "mutual boundary");
        s.bind(t.a, x, inputs_);
        s.bind(t.b, x, inputs_);
        set_target(t, x);
        break;
      }
      case Term::mutual_pde: {
        const auto& x = at(pts.mutual, t.index, "mutual");
        s.bind(t.a, x, inputs_);
        s.bind(t.b, x, inputs_);
        break;
      }
    }
  }
}

LossBreakdown LossGraph::read() const {
  LossBreakdown r;
  const std::size_t n = layout_.pde.size();
  const std::size_t pairs = layout_.mutual.size();
  std::size_t k = 0;
  auto next = [&]() {
    const int slot = slots_[k++];
    return slot < 0 ? 0.0 : program_->value(static_cast<std::size_t>(slot))(0, 0);
  };
  r.initial = next();
  for (std::size_t b = 0; b < n; ++b) r.pde.push_back(next());
  for (std::size_t b = 0; b < n; ++b) r.bc.push_back(next());
  for (std::size_t p = 0; p < pairs; ++p) r.mutual.push_back(next());
  if (layout_.mutual_bc)
    for (std::size_t p = 0; p < pairs; ++p) r.mutual_bc.push_back(next());
  if (layout_.mutual_pde)
    for (std::size_t p = 0; p < pairs; ++p) r.mutual_pde.push_back(next());
  r.total = program_->value(0)(0, 0);
  return r;
}

LossBreakdown LossGraph::evaluate(std::span<const Eigen::MatrixXd> params) {
  program_->forward({inputs_, params});
  return read();
}

LossBreakdown LossGraph::gradient(std::span<const Eigen::MatrixXd> params, ad::Gradient& grads) {
  program_->forward({inputs_, params});
  program_->backward(0, grads);
  return read();
}

// ---------------------------------------------------------------------------

namespace {

MiRnnSurrogate surrogate_of(const MiRnnModel& m) {
  return MiRnnSurrogate(m.params.spec, m.partition, m.policy, m.ff);
}

LossLayout empty_layout(int blocks) {
  LossLayout l;
  l.initial = false;
  l.pde.assign(static_cast<std::size_t>(blocks), false);
  l.bc.assign(static_cast<std::size_t>(blocks), false);
  l.mutual.assign(static_cast<std::size_t>(std::max(0, blocks - 1)), false);
  return l;
}

}  // namespace

double initial_condition_loss(const MiRnnModel& model, const PdeProblem& problem,
                              const Eigen::MatrixXd& points) {
  if (points.cols() == 0) fail(ErrorCode::config, "initial point set is empty");
  MiRnnSurrogate s = surrogate_of(model);
  LossLayout l = empty_layout(model.partition.block_count());
  l.initial = true;
  LossGraph g(s, problem, l);
  PointSets p;
  p.initial = points;
  g.bind(p);
  return g.evaluate(model.params.tensors).initial;
}

BlockLoss block_loss(const Surrogate& surrogate, std::span<const Eigen::MatrixXd> params,
                     const PdeProblem& problem, const TimePartition& partition, int block,
                     const Eigen::MatrixXd& interior, const Eigen::MatrixXd& boundary) {
  if (interior.cols() == 0) fail(ErrorCode::config, "interior point set is empty");
  const Interval& iv = partition.block(block);
  require_times(interior, iv, "interior");
  if (boundary.cols() > 0) require_times(boundary, iv, "boundary");
  LossLayout l = empty_layout(partition.block_count());
  l.pde[static_cast<std::size_t>(block)] = true;
  l.bc[static_cast<std::size_t>(block)] = boundary.cols() > 0;
  LossGraph g(surrogate, problem, l);
  PointSets p;
  p.interior.resize(static_cast<std::size_t>(partition.block_count()));
  p.boundary.resize(p.interior.size());
  p.interior[static_cast<std::size_t>(block)] = interior;
  p.boundary[static_cast<std::size_t>(block)] = boundary;
  g.bind(p);
  LossBreakdown r = g.evaluate(params);
  return {r.pde[static_cast<std::size_t>(block)], r.bc[static_cast<std::size_t>(block)]};
}

BlockLoss block_loss(const MiRnnModel& model, const PdeProblem& problem, int block,
                     const Eigen::MatrixXd& interior, const Eigen::MatrixXd& boundary) {
  MiRnnSurrogate s = surrogate_of(model);
  return block_loss(s, model.params.tensors, problem, model.partition, block, interior,
                    boundary);
}

MutualLoss mutual_block_loss(const MiRnnModel& model, const PdeProblem& problem, int pair,
                             const Eigen::MatrixXd& points, const MutualLossConfig& config,
                             const Eigen::MatrixXd& boundary) {
  if (!model.partition.has_mutual_overlap(pair))
    fail(ErrorCode::degenerate_overlap,
         "blocks " + std::to_string(pair) + " and " + std::to_string(pair + 1) +
             " share no mutual interval");
  if (points.cols() == 0) fail(ErrorCode::config, "mutual point set is empty");
  const Interval iv = model.partition.mutual_interval(pair);
  require_times(points, iv, "mutual");
  if (config.bc) {
    if (boundary.cols() == 0) fail(ErrorCode::config, "mutual boundary point set is empty");
    require_times(boundary, iv, "mutual boundary");
  }
  MiRnnSurrogate s = surrogate_of(model);
  LossLayout l = empty_layout(model.partition.block_count());
  l.mutual[static_cast<std::size_t>(pair)] = true;
  l.mutual_bc = config.bc;
  l.mutual_pde = config.pde;
  l.detach = config.detach;
  LossGraph g(s, problem, l);
  PointSets p;
  p.mutual.resize(l.mutual.size());
  p.mutual_boundary.resize(l.mutual.size());
  p.mutual[static_cast<std::size_t>(pair)] = points;
  p.mutual_boundary[static_cast<std::size_t>(pair)] = boundary;
  g.bind(p);
  LossBreakdown r = g.evaluate(model.params.tensors);
  const auto pi = static_cast<std::size_t>(pair);
  MutualLoss out;
  out.match = r.mutual[pi];
  if (config.bc) out.bc = r.mutual_bc[pi];
  if (config.pde) out.pde = r.mutual_pde[pi];
  return out;
}

LossBreakdown total_loss(const MiRnnModel& model, const PdeProblem& problem,
                         const PointSets& points, const MutualLossConfig& config,
                         const LossWeights& weights) {
  MiRnnSurrogate s = surrogate_of(model);
  LossGraph g(s, problem, training_layout(problem, model.partition, config), weights);
  g.bind(points);
  return g.evaluate(model.params.tensors);
}

}  // namespace mirnn
