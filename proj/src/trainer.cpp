#include "mirnn/trainer.hpp"
#include "mirnn/error.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mirnn {

using nlohmann::json;

void AdamConfig::validate() const {
  if (!(lr > 0.0)) fail(ErrorCode::config, "learning rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) fail(ErrorCode::config, "beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) fail(ErrorCode::config, "beta2 must lie in (0, 1)");
  if (!(eps > 0.0)) fail(ErrorCode::config, "Adam epsilon must be > 0");
}

void TrainConfig::validate() const {
  adam.validate();
  sampling.validate();
  if (epochs < 0) fail(ErrorCode::config, "epoch count must be >= 0");
  if (checkpoint_interval < 0) fail(ErrorCode::config, "checkpoint interval must be >= 0");
  if (!(mutual.noise_sigma >= 0.0)) fail(ErrorCode::config, "noise sigma must be >= 0");
}

void adam_step(std::vector<Eigen::MatrixXd>& params, const ad::Gradient& grad, AdamState& state,
               const AdamConfig& c) {
  if (grad.size() != params.size())
    fail(ErrorCode::shape, "gradient has " + std::to_string(grad.size()) + " tensors, expected " +
                               std::to_string(params.size()));
  std::size_t flat = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grad[i].rows() != params[i].rows() || grad[i].cols() != params[i].cols())
      fail(ErrorCode::shape, "gradient tensor " + std::to_string(i) + " has the wrong shape");
    for (Eigen::Index k = 0; k < grad[i].size(); ++k)
      if (!std::isfinite(grad[i].data()[k]))
        fail(ErrorCode::divergence, "non-finite gradient at parameter index " +
                                        std::to_string(flat + static_cast<std::size_t>(k)) +
                                        " (tensor " + std::to_string(i) + ")");
    flat += static_cast<std::size_t>(grad[i].size());
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      state.v.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grad[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grad[i].cwiseProduct(grad[i]);
    params[i].array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
  }
}

bool TrainHistory::same_losses(const TrainHistory& other) const {
  if (epochs.size() != other.epochs.size()) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i)
    if (epochs[i].loss.components() != other.epochs[i].loss.components() ||
        epochs[i].loss.total != other.epochs[i].loss.total)
      return false;
  return true;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
    fail(ErrorCode::io, "checkpoint tensor shape does not match its data");
  Eigen::MatrixXd m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

json breakdown_json(const LossBreakdown& b) {
  return {{"ic", b.initial}, {"pde", b.pde}, {"bc", b.bc}, {"mutual", b.mutual},
          {"mutual_bc", b.mutual_bc}, {"mutual_pde", b.mutual_pde}, {"total", b.total}};
}

LossBreakdown breakdown_from(const json& j) {
  LossBreakdown b;
  b.initial = j.at("ic").get<double>();
  b.pde = j.at("pde").get<std::vector<double>>();
  b.bc = j.at("bc").get<std::vector<double>>();
  b.mutual = j.at("mutual").get<std::vector<double>>();
  b.mutual_bc = j.at("mutual_bc").get<std::vector<double>>();
  b.mutual_pde = j.at("mutual_pde").get<std::vector<double>>();
  b.total = j.at("total").get<double>();
  return b;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  const LayerSpec& s = c.params.spec;
  json j;
  j["format_version"] = Checkpoint::format_version;
  j["layer_spec"] = {{"inputs", s.inputs},         {"hidden_layers", s.hidden_layers},
                     {"width", s.width},           {"outputs", s.outputs},
                     {"input_lo", s.input_lo},     {"input_hi", s.input_hi}};
  j["seed"] = c.params.seed;
  j["ff"] = c.ff.factors;
  j["tensors"] = json::array();
  for (std::size_t i = 0; i < c.params.tensors.size(); ++i) {
    json t = matrix_json(c.params.tensors[i]);
    t["name"] = c.params.tensor_name(i);
    j["tensors"].push_back(std::move(t));
  }
  json adam{{"step", c.adam.step}, {"m", json::array()}, {"v", json::array()}};
  for (const auto& m : c.adam.m) adam["m"].push_back(matrix_json(m));
  for (const auto& v : c.adam.v) adam["v"].push_back(matrix_json(v));
  j["adam"] = std::move(adam);
  j["epoch"] = c.epoch;
  j["history"] = json::array();
  for (const auto& e : c.history.epochs) j["history"].push_back(breakdown_json(e.loss));

  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot write " + tmp.string());
    out << j.dump();
    if (!out) fail(ErrorCode::io, "write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::not_found, "checkpoint not found: " + path);
  try {
    json j = json::parse(in);
    if (j.at("format_version").get<int>() != Checkpoint::format_version)
      fail(ErrorCode::io, "unsupported checkpoint format version");
    Checkpoint c;
    const json& s = j.at("layer_spec");
    LayerSpec& spec = c.params.spec;
    spec.inputs = s.at("inputs").get<int>();
    spec.hidden_layers = s.at("hidden_layers").get<int>();
    spec.width = s.at("width").get<int>();
    spec.outputs = s.at("outputs").get<int>();
    spec.input_lo = s.at("input_lo").get<std::vector<double>>();
    spec.input_hi = s.at("input_hi").get<std::vector<double>>();
    spec.validate();
    c.params.seed = j.at("seed").get<std::uint64_t>();
    c.ff.factors = j.at("ff").get<std::array<double, 3>>();
    for (const auto& t : j.at("tensors")) c.params.tensors.push_back(matrix_from(t));
    const BlockParams shape = init_params(spec, 0);
    if (shape.tensors.size() != c.params.tensors.size())
      fail(ErrorCode::io, "checkpoint tensor count does not match its layer spec");
    for (std::size_t i = 0; i < shape.tensors.size(); ++i)
      if (shape.tensors[i].rows() != c.params.tensors[i].rows() ||
          shape.tensors[i].cols() != c.params.tensors[i].cols())
        fail(ErrorCode::io, "checkpoint tensor " + c.params.tensor_name(i) + " has the wrong shape");
    const json& a = j.at("adam");
    c.adam.step = a.at("step").get<std::int64_t>();
    for (const auto& m : a.at("m")) c.adam.m.push_back(matrix_from(m));
    for (const auto& v : a.at("v")) c.adam.v.push_back(matrix_from(v));
    c.epoch = j.at("epoch").get<int>();
    for (const auto& h : j.at("history")) c.history.epochs.push_back({breakdown_from(h), 0.0});
    return c;
  } catch (const json::exception& e) {
    fail(ErrorCode::io, "malformed checkpoint " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(const TrainSetup& setup, const TrainConfig& config, const Checkpoint* resume,
                  const EpochCallback& on_epoch) {
  config.validate();
  setup.policy.validate();
  setup.ff.validate();
  if (std::abs(setup.partition.t_start() - setup.problem.t_start) > 1e-12 ||
      std::abs(setup.partition.t_end() - setup.problem.t_end) > 1e-12)
    fail(ErrorCode::partition, "partition does not span the problem's time extent");

  TrainResult r{{init_params(setup.spec, config.seed), setup.partition, setup.policy, setup.ff},
                {},
                {}};
  int start = 0;
  if (resume) {
    if (resume->params.tensors.size() != r.model.params.tensors.size())
      fail(ErrorCode::config, "checkpoint does not match the network layout");
    r.model.params = resume->params;
    r.adam = resume->adam;
    r.history = resume->history;
    start = resume->epoch;
  }

  MiRnnSurrogate surrogate(setup.spec, setup.partition, setup.policy, setup.ff);
  const LossLayout layout = training_layout(setup.problem, setup.partition, config.mutual);
  LossGraph graph(surrogate, setup.problem, layout, config.weights);
  SamplingSpec sampling = config.sampling;
  sampling.seed = config.seed;
  const std::uint64_t noise_seed = derive_seed(config.seed, 0x6e6f697365ULL, 0);

  auto snapshot = [&](int epoch) {
    return Checkpoint{r.model.params, setup.ff, r.adam, epoch, r.history};
  };
  auto write = [&](int epoch) {
    if (!config.checkpoint_path.empty()) save_checkpoint(snapshot(epoch), config.checkpoint_path);
  };

  ad::Gradient grads;
  for (int epoch = start; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    graph.bind(sample_epoch(setup.problem, setup.partition, sampling, layout,
                            config.mutual.noise_sigma, noise_seed,
                            static_cast<std::uint64_t>(epoch)));
    LossBreakdown loss;
    try {
      loss = graph.gradient(r.model.params.tensors, grads);
      if (!std::isfinite(loss.total))
        fail(ErrorCode::divergence, "loss is not finite at epoch " + std::to_string(epoch));
      adam_step(r.model.params.tensors, grads, r.adam, config.adam);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numeric_overflow && e.code() != ErrorCode::divergence) throw;
      write(epoch);
      fail(ErrorCode::divergence, "training diverged at epoch " + std::to_string(epoch) + ": " +
                                      e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.history.epochs.push_back({loss, secs});
    if (on_epoch) on_epoch(epoch, loss);
    if (config.checkpoint_interval > 0 && (epoch + 1) % config.checkpoint_interval == 0)
      write(epoch + 1);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Grid evaluation

Eigen::MatrixXd grid_points(const PdeProblem& problem, double spacing) {
  if (!(spacing > 0.0)) fail(ErrorCode::config, "grid spacing must be > 0");
  auto [lo, hi] = problem.domain.bounds();
  lo.push_back(problem.t_start);
  hi.push_back(problem.t_end);
  const std::size_t dims = lo.size();
  std::vector<std::vector<double>> axes(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    // Round so that 4 / 0.01 gives 401 nodes despite representation error.
    const auto n = static_cast<long>(std::floor((hi[d] - lo[d]) / spacing + 1e-9)) + 1;
    for (long i = 0; i < n; ++i) axes[d].push_back(std::min(hi[d], lo[d] + i * spacing));
  }
  std::vector<double> flat;
  std::vector<std::size_t> idx(dims, 0);
  std::vector<double> p(dims);
  // Time varies slowest so slices are contiguous.
  for (;;) {
    for (std::size_t d = 0; d < dims; ++d) p[d] = axes[d][idx[d]];
    if (problem.domain.contains(std::span<const double>(p.data(), dims - 1)))
      flat.insert(flat.end(), p.begin(), p.end());
    std::size_t d = 0;
    while (d < dims && ++idx[d] == axes[d].size()) idx[d++] = 0;
    if (d == dims) break;
  }
  const auto n = static_cast<Eigen::Index>(flat.size() / dims);
  return Eigen::Map<Eigen::MatrixXd>(flat.data(), static_cast<Eigen::Index>(dims), n);
}

GridEvaluation evaluate_points(const MiRnnModel& model, const PdeProblem& problem,
                               const Eigen::MatrixXd& coords) {
  if (coords.rows() != problem.coord_count())
    fail(ErrorCode::shape, "evaluation points do not match the problem coordinates");
  const Eigen::Index n = coords.cols();
  const int nb = model.partition.block_count();
  const Eigen::Index tr = coords.rows() - 1;
  GridEvaluation g;
  g.coords = coords;
  g.prediction.resize(problem.field_count(), n);
  g.earlier.setConstant(problem.field_count(), n, std::nan(""));
  g.exact = exact_values(problem, coords);
  g.block.resize(static_cast<std::size_t>(n));
  g.mutual.resize(static_cast<std::size_t>(n));

  std::vector<std::vector<Eigen::Index>> latest(static_cast<std::size_t>(nb));
  std::vector<std::vector<Eigen::Index>> earlier(static_cast<std::size_t>(nb));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto owners = model.partition.owning_blocks(coords(tr, i));
    const auto ui = static_cast<std::size_t>(i);
    g.block[ui] = owners.back();
    g.mutual[ui] = owners.size() > 1;
    latest[static_cast<std::size_t>(owners.back())].push_back(i);
    if (owners.size() > 1) earlier[static_cast<std::size_t>(owners.front())].push_back(i);
  }
  Predictor pred(model);
  auto run = [&](int b, const std::vector<Eigen::Index>& cols, Eigen::MatrixXd& out) {
    if (cols.empty()) return;
    Eigen::MatrixXd pts(coords.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) pts.col(static_cast<Eigen::Index>(k)) = coords.col(cols[k]);
    Eigen::MatrixXd f = pred.predict(b, pts);
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(cols[k]) = f.col(static_cast<Eigen::Index>(k));
  };
  for (int b = 0; b < nb; ++b) {
    run(b, latest[static_cast<std::size_t>(b)], g.prediction);
    run(b, earlier[static_cast<std::size_t>(b)], g.earlier);
  }
  return g;
}

GridEvaluation evaluate_grid(const MiRnnModel& model, const PdeProblem& problem,
                             double spacing) {
  return evaluate_points(model, problem, grid_points(problem, spacing));
}

}  // namespace mirnn
