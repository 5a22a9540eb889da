#include "mirnn/network.hpp"
#include "mirnn/error.hpp"

#include <cmath>
#include <random>

namespace mirnn {

void LayerSpec::validate() const {
  if (inputs < 1 || hidden_layers < 1 || width < 1 || outputs < 1)
    fail(ErrorCode::config, "layer spec has a zero-width layer");
  if (input_lo.size() != input_hi.size())
    fail(ErrorCode::config, "input range bounds differ in length");
  if (!input_lo.empty()) {
    if (input_lo.size() != static_cast<std::size_t>(inputs))
      fail(ErrorCode::config, "input ranges must cover every coordinate");
    for (std::size_t i = 0; i < input_lo.size(); ++i)
      if (!(input_hi[i] > input_lo[i])) fail(ErrorCode::config, "empty input range");
  }
}

std::string BlockParams::tensor_name(std::size_t i) const {
  const auto ff_layers = static_cast<std::size_t>(spec.hidden_layers + 1);
  if (i < 2 * ff_layers) return (i % 2 == 0 ? "W" : "b") + std::to_string(i / 2);
  return "U" + std::to_string(i - 2 * ff_layers);
}

std::size_t BlockParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

Eigen::VectorXd BlockParams::flat() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(scalar_count()));
  Eigen::Index off = 0;
  for (const auto& t : tensors) {
    v.segment(off, t.size()) = t.reshaped();
    off += t.size();
  }
  return v;
}

void BlockParams::assign_flat(const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != scalar_count())
    fail(ErrorCode::shape, "flat parameter vector has the wrong length");
  Eigen::Index off = 0;
  for (auto& t : tensors) {
    t.reshaped() = v.segment(off, t.size());
    off += t.size();
  }
}

bool BlockParams::all_finite() const {
  for (const auto& t : tensors)
    if (!t.allFinite()) return false;
  return true;
}

BlockParams init_params(const LayerSpec& spec, std::uint64_t seed) {
  spec.validate();
  BlockParams p;
  p.spec = spec;
  p.seed = seed;
  std::mt19937_64 rng(seed);
  auto glorot = [&](int rows, int cols) {
    const double bound = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    return m;
  };
  int fan_in = spec.inputs;
  for (int l = 0; l <= spec.hidden_layers; ++l) {
    const int fan_out = l == spec.hidden_layers ? spec.outputs : spec.width;
    p.tensors.push_back(glorot(fan_out, fan_in));
    p.tensors.push_back(Eigen::MatrixXd::Zero(fan_out, 1));
    fan_in = fan_out;
  }
  for (int l = 0; l < spec.hidden_layers; ++l) p.tensors.push_back(glorot(spec.width, spec.width));
  return p;
}

// ---------------------------------------------------------------------------

NetworkGraph::NetworkGraph(LayerSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  int fan_in = spec_.inputs;
  int id = 0;
  for (int l = 0; l <= spec_.hidden_layers; ++l) {
    const int fan_out = l == spec_.hidden_layers ? spec_.outputs : spec_.width;
    params_.push_back(ad::parameter(id++, fan_out, fan_in, "W" + std::to_string(l)));
    params_.push_back(ad::parameter(id++, fan_out, 1, "b" + std::to_string(l)));
    fan_in = fan_out;
  }
  for (int l = 0; l < spec_.hidden_layers; ++l)
    params_.push_back(ad::parameter(id++, spec_.width, spec_.width, "U" + std::to_string(l)));
}

BlockExprs NetworkGraph::block(std::span<const ad::Expr> coords, const HiddenExprs* hidden,
                               const ad::Expr& ff) const {
  if (coords.size() != static_cast<std::size_t>(spec_.inputs))
    fail(ErrorCode::shape, "block expects " + std::to_string(spec_.inputs) +
                               " coordinates, got " + std::to_string(coords.size()));
  if (hidden && hidden->layers.size() != static_cast<std::size_t>(spec_.hidden_layers))
    fail(ErrorCode::shape, "hidden state layer count does not match the block");
  std::vector<ad::Expr> scaled;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (spec_.input_lo.empty()) {
      scaled.push_back(coords[i]);
      continue;
    }
    const double lo = spec_.input_lo[i];
    const double hi = spec_.input_hi[i];
    scaled.push_back(ad::sum({coords[i]}, {2.0 / (hi - lo)}, -(hi + lo) / (hi - lo)));
  }
  ad::Expr a = ad::stack(std::move(scaled));
  BlockExprs out;
  const std::size_t coupling0 = 2 * static_cast<std::size_t>(spec_.hidden_layers + 1);
  for (int l = 0; l < spec_.hidden_layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    ad::Expr z = ad::affine(params_[2 * li], a, params_[2 * li + 1]);
    if (hidden) z = z + ad::product(ff, ad::affine(params_[coupling0 + li], hidden->layers[li]));
    a = ad::tanh(z);
    out.hidden.layers.push_back(a);
  }
  const auto L = static_cast<std::size_t>(spec_.hidden_layers);
  out.fields = ad::affine(params_[2 * L], a, params_[2 * L + 1]);
  return out;
}

// ---------------------------------------------------------------------------

QueryGraph build_query(const NetworkGraph& net, const ConditioningPolicy& policy, int block,
                       InputIds& ids, const std::string& label) {
  const LayerSpec& spec = net.spec();
  QueryGraph q;
  q.block = block;
  for (int i = 0; i < spec.inputs; ++i) {
    q.coord_ids.push_back(ids.next());
    q.coords.push_back(ad::input(q.coord_ids.back(), label + ".c" + std::to_string(i)));
  }
  const bool aligned = policy.uses_alignment();
  q.levels.resize(static_cast<std::size_t>(block));
  for (int j = block - 1; j >= 0; --j) {
    auto& lv = q.levels[static_cast<std::size_t>(j)];
    if (aligned) lv.alpha_id = ids.next();
    lv.anchor_id = ids.next();
    lv.ff_id = ids.next();
  }
  // Upstream times, from the query block down to block 0.
  std::vector<ad::Expr> times(static_cast<std::size_t>(block) + 1);
  times[static_cast<std::size_t>(block)] = q.coords.back();
  for (int j = block - 1; j >= 0; --j) {
    const auto& lv = q.levels[static_cast<std::size_t>(j)];
    const auto ju = static_cast<std::size_t>(j);
    ad::Expr anchor = ad::input(lv.anchor_id, label + ".anchor" + std::to_string(j));
    if (aligned) {
      ad::Expr alpha = ad::input(lv.alpha_id, label + ".alpha" + std::to_string(j));
      times[ju] = ad::product(alpha, times[ju + 1]) + anchor;
    } else {
      times[ju] = anchor;
    }
  }
  std::optional<HiddenExprs> hidden;
  ad::Expr ff;
  for (int j = 0; j <= block; ++j) {
    std::vector<ad::Expr> c(q.coords.begin(), q.coords.end() - 1);
    c.push_back(times[static_cast<std::size_t>(j)]);
    BlockExprs be = net.block(c, hidden ? &*hidden : nullptr, ff);
    if (j == block) {
      q.fields = be.fields;
      break;
    }
    hidden = be.hidden;
    ff = ad::input(q.levels[static_cast<std::size_t>(j)].ff_id, label + ".ff" + std::to_string(j));
  }
  return q;
}

void bind_query(const QueryGraph& q, const TimePartition& partition,
                const ConditioningPolicy& policy, const ForgetFactorSchedule& ff,
                const Eigen::MatrixXd& coords, std::vector<Eigen::MatrixXd>& inputs) {
  if (coords.rows() != static_cast<Eigen::Index>(q.coord_ids.size()))
    fail(ErrorCode::shape, "query coordinates have " + std::to_string(coords.rows()) +
                               " rows, expected " + std::to_string(q.coord_ids.size()));
  const Eigen::Index n = coords.cols();
  int max_id = 0;
  for (int id : q.coord_ids) max_id = std::max(max_id, id);
  for (const auto& lv : q.levels)
    max_id = std::max({max_id, lv.alpha_id, lv.anchor_id, lv.ff_id});
  if (inputs.size() <= static_cast<std::size_t>(max_id))
    inputs.resize(static_cast<std::size_t>(max_id) + 1);
  for (std::size_t i = 0; i < q.coord_ids.size(); ++i)
    inputs[static_cast<std::size_t>(q.coord_ids[i])] = coords.row(static_cast<Eigen::Index>(i));
  for (const auto& lv : q.levels) {
    if (lv.alpha_id >= 0) inputs[static_cast<std::size_t>(lv.alpha_id)].resize(1, n);
    inputs[static_cast<std::size_t>(lv.anchor_id)].resize(1, n);
    inputs[static_cast<std::size_t>(lv.ff_id)].resize(1, n);
  }
  const Eigen::Index t_row = coords.rows() - 1;
  for (Eigen::Index p = 0; p < n; ++p) {
    double t = coords(t_row, p);
    for (int j = q.block - 1; j >= 0; --j) {
      const auto& lv = q.levels[static_cast<std::size_t>(j)];
      const SubInterval cls = partition.classify_clamped(j + 1, t);
      const ConditioningRule& rule = policy[cls];
      inputs[static_cast<std::size_t>(lv.ff_id)](0, p) = ff[cls];
      double alpha = 0.0;
      double anchor = 0.0;
      switch (rule.kind) {
        case Conditioning::temporal_alignment: alpha = 1.0; break;
        case Conditioning::fixed: anchor = rule.time; break;
        case Conditioning::preceding_end: anchor = partition.block(j).end; break;
      }
      if (lv.alpha_id >= 0) inputs[static_cast<std::size_t>(lv.alpha_id)](0, p) = alpha;
      inputs[static_cast<std::size_t>(lv.anchor_id)](0, p) = anchor;
      t = alpha == 1.0 ? t : anchor;
    }
  }
}

// ---------------------------------------------------------------------------

BlockResult block_forward(const BlockParams& params, const Eigen::MatrixXd& coords,
                          const HiddenState* hidden_in, double ff) {
  const LayerSpec& spec = params.spec;
  if (coords.rows() != spec.inputs)
    fail(ErrorCode::shape, "block_forward expects " + std::to_string(spec.inputs) +
                               " coordinates, got " + std::to_string(coords.rows()));
  if (!(ff >= 0.0 && ff <= 1.0)) fail(ErrorCode::config, "forget factor outside [0, 1]");
  if (hidden_in && hidden_in->layers.size() != static_cast<std::size_t>(spec.hidden_layers))
    fail(ErrorCode::shape, "hidden state layer count does not match the block");
  NetworkGraph net(spec);
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<ad::Expr> c;
  for (int i = 0; i < spec.inputs; ++i) {
    c.push_back(ad::input(i));
    inputs.push_back(coords.row(i));
  }
  HiddenExprs h;
  if (hidden_in) {
    for (const auto& layer : hidden_in->layers) {
      if (layer.rows() != spec.width || layer.cols() != coords.cols())
        fail(ErrorCode::shape, "hidden state does not match the batch");
      h.layers.push_back(ad::input(static_cast<int>(inputs.size()), "h", spec.width));
      inputs.push_back(layer);
    }
  }
  BlockExprs be = net.block(c, hidden_in ? &h : nullptr, ad::constant(ff));
  std::vector<ad::Expr> outs{be.fields};
  outs.insert(outs.end(), be.hidden.layers.begin(), be.hidden.layers.end());
  ad::Program prog(outs);
  prog.forward({inputs, params.tensors});
  BlockResult r;
  r.fields = prog.value(0);
  for (std::size_t l = 0; l < be.hidden.layers.size(); ++l)
    r.hidden.layers.push_back(prog.value(l + 1));
  r.hidden.conditioning_coords = coords;
  return r;
}

std::optional<HiddenState> conditional_hidden(const BlockParams& params,
                                              std::span<const ChainLink> chain) {
  std::optional<HiddenState> h;
  double ff = 0.0;
  for (const auto& link : chain) {
    BlockResult r = block_forward(params, link.coords, h ? &*h : nullptr, ff);
    h = std::move(r.hidden);
    ff = link.ff;
  }
  return h;
}

std::vector<ChainLink> build_chain(const MiRnnModel& model, int b,
                                   std::span<const double> point) {
  const auto dims = static_cast<Eigen::Index>(point.size());
  if (dims != model.params.spec.inputs)
    fail(ErrorCode::shape, "point dimension does not match the network inputs");
  std::vector<ChainLink> chain(static_cast<std::size_t>(b));
  double t = point.back();
  for (int j = b - 1; j >= 0; --j) {
    const SubInterval cls = model.partition.classify_clamped(j + 1, t);
    t = conditioning_time(model.policy, model.partition, j + 1, t);
    auto& link = chain[static_cast<std::size_t>(j)];
    link.coords = Eigen::Map<const Eigen::VectorXd>(point.data(), dims);
    link.coords(dims - 1, 0) = t;
    link.ff = model.ff[cls];
  }
  return chain;
}

std::vector<BlockPrediction> unroll(const MiRnnModel& model, std::span<const double> point) {
  const double t = point.back();
  std::vector<BlockPrediction> out;
  for (int b : model.partition.owning_blocks(t)) {
    auto chain = build_chain(model, b, point);
    auto hidden = conditional_hidden(model.params, chain);
    const double ff = chain.empty() ? 0.0 : chain.back().ff;
    Eigen::MatrixXd coords = Eigen::Map<const Eigen::VectorXd>(
        point.data(), static_cast<Eigen::Index>(point.size()));
    BlockResult r = block_forward(model.params, coords, hidden ? &*hidden : nullptr, ff);
    out.push_back({b, r.fields.col(0)});
  }
  return out;
}

// ---------------------------------------------------------------------------

Predictor::Predictor(const MiRnnModel& model, Eigen::Index chunk)
    : model_(&model), chunk_(chunk), net_(model.params.spec) {
  cache_.resize(static_cast<std::size_t>(model.partition.block_count()));
}

Predictor::Compiled& Predictor::compiled(int b) {
  auto& slot = cache_.at(static_cast<std::size_t>(b));
  if (!slot) {
    slot = std::make_unique<Compiled>();
    InputIds ids;
    slot->query = build_query(net_, model_->policy, b, ids, "q");
    slot->program = std::make_unique<ad::Program>(std::vector<ad::Expr>{slot->query.fields});
    slot->input_count = ids.count();
  }
  return *slot;
}

Eigen::MatrixXd Predictor::predict(int b, const Eigen::MatrixXd& coords) {
  Compiled& c = compiled(b);
  const MiRnnModel& m = *model_;
  Eigen::MatrixXd out(m.params.spec.outputs, coords.cols());
  for (Eigen::Index start = 0; start < coords.cols(); start += chunk_) {
    const Eigen::Index n = std::min(chunk_, coords.cols() - start);
    inputs_.resize(static_cast<std::size_t>(c.input_count));
    bind_query(c.query, m.partition, m.policy, m.ff, coords.middleCols(start, n), inputs_);
    c.program->forward({inputs_, m.params.tensors});
    out.middleCols(start, n) = c.program->value(0);
  }
  return out;
}

}  // namespace mirnn
