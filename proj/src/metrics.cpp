#include "mirnn/metrics.hpp"
#include "mirnn/error.hpp"

#include <cmath>
#include <numeric>

namespace mirnn {

namespace {

void same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(ErrorCode::shape, "prediction and exact values differ in shape");
}

}  // namespace

double r_squared(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& exact) {
  same_shape(prediction, exact);
  if (exact.size() < 2) fail(ErrorCode::shape, "R-squared needs at least two values");
  const double mean = exact.mean();
  const double ss_tot = (exact.array() - mean).square().sum();
  if (!(ss_tot > 0.0)) fail(ErrorCode::degenerate_target, "exact values are constant");
  const double ss_res = (prediction - exact).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

double relative_error(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& exact) {
  same_shape(prediction, exact);
  const double norm = exact.norm();
  if (!(norm > 0.0)) fail(ErrorCode::degenerate_target, "exact values have zero norm");
  return (prediction - exact).norm() / norm;
}

double mean_squared_error(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& exact) {
  same_shape(prediction, exact);
  if (exact.size() == 0) fail(ErrorCode::shape, "MSE of an empty set");
  return (prediction - exact).squaredNorm() / static_cast<double>(exact.size());
}

std::vector<TimeSlice> mse_over_time(const GridEvaluation& eval, const TimePartition& partition,
                                     double width) {
  if (!(width > 0.0)) fail(ErrorCode::config, "slice width must be > 0");
  const double t0 = partition.t_start();
  const double span = partition.t_end() - t0;
  const auto n = static_cast<std::size_t>(std::ceil(span / width - 1e-9));
  std::vector<TimeSlice> out(n);
  std::vector<double> sse(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    out[k].t_lo = t0 + static_cast<double>(k) * width;
    out[k].t_hi = std::min(partition.t_end(), t0 + static_cast<double>(k + 1) * width);
    const double mid = 0.5 * (out[k].t_lo + out[k].t_hi);
    out[k].block = partition.owning_blocks(mid).back();
    out[k].cls = partition.classify(out[k].block, mid);
  }
  const Eigen::Index tr = eval.coords.rows() - 1;
  const Eigen::Index fields = eval.exact.rows();
  for (Eigen::Index i = 0; i < eval.coords.cols(); ++i) {
    const double t = eval.coords(tr, i);
    auto k = static_cast<std::size_t>(std::floor((t - t0) / width));
    k = std::min(k, n - 1);
    sse[k] += (eval.prediction.col(i) - eval.exact.col(i)).squaredNorm();
    out[k].count += 1;
  }
  for (std::size_t k = 0; k < n; ++k)
    out[k].mse = out[k].count == 0 ? std::nan("")
                                   : sse[k] / static_cast<double>(out[k].count * fields);
  return out;
}

std::vector<double> transition_ratios(const std::vector<TimeSlice>& series,
                                      const TimePartition& partition) {
  std::vector<double> out;
  for (int b = 1; b < partition.block_count(); ++b) {
    const double boundary = partition.block(b).start;
    const TimeSlice* before = nullptr;
    const TimeSlice* after = nullptr;
    for (const auto& s : series) {
      if (s.empty()) continue;
      if (s.t_hi <= boundary + 1e-12) before = &s;
      if (!after && s.t_lo >= boundary - 1e-12) after = &s;
    }
    if (!before || !after) continue;
    out.push_back(after->mse / before->mse);
  }
  return out;
}

std::vector<double> per_block_mse(const GridEvaluation& eval, int blocks) {
  std::vector<double> sse(static_cast<std::size_t>(blocks), 0.0);
  std::vector<long> count(static_cast<std::size_t>(blocks), 0);
  for (Eigen::Index i = 0; i < eval.coords.cols(); ++i) {
    const auto b = static_cast<std::size_t>(eval.block[static_cast<std::size_t>(i)]);
    sse[b] += (eval.prediction.col(i) - eval.exact.col(i)).squaredNorm();
    count[b] += eval.exact.rows();
  }
  std::vector<double> out;
  for (std::size_t b = 0; b < sse.size(); ++b)
    out.push_back(count[b] == 0 ? std::nan("") : sse[b] / static_cast<double>(count[b]));
  return out;
}

Eigen::MatrixXd spatial_grid(const PdeProblem& problem, double t, double spacing) {
  PdeProblem slice = problem;
  slice.t_start = t;
  slice.t_end = t;
  return grid_points(slice, spacing);
}

SliceMetrics slice_metrics(const MiRnnModel& model, const PdeProblem& problem, double t,
                           double spacing) {
  const Eigen::MatrixXd pts = spatial_grid(problem, t, spacing);
  const GridEvaluation g = evaluate_points(model, problem, pts);
  SliceMetrics m;
  m.t = t;
  m.points = pts.cols();
  m.mse = mean_squared_error(g.prediction, g.exact);
  const Eigen::Index vel = problem.field_count() > 1 ? problem.spatial_dims() : 1;
  m.velocity_mse = mean_squared_error(g.prediction.topRows(vel), g.exact.topRows(vel));
  m.relative_error = relative_error(g.prediction, g.exact);
  return m;
}

NoiseResult noise_experiment(const TrainSetup& setup, const TrainConfig& base,
                             const std::vector<double>& sigmas, double spacing) {
  if (setup.partition.block_count() < 2)
    fail(ErrorCode::config, "the noise experiment needs at least two blocks");
  for (double s : sigmas)
    if (!(s >= 0.0)) fail(ErrorCode::config, "noise sigma must be >= 0");
  const Eigen::MatrixXd grid = grid_points(setup.problem, spacing);
  auto run = [&](double sigma) {
    TrainConfig c = base;
    c.mutual.noise_sigma = sigma;
    c.checkpoint_interval = 0;
    c.checkpoint_path.clear();
    TrainResult r = train(setup, c);
    const GridEvaluation g = evaluate_points(r.model, setup.problem, grid);
    const auto mse = per_block_mse(g, setup.partition.block_count());
    const auto& last = r.history.epochs.back().loss.mutual;
    const double mutual = std::accumulate(last.begin(), last.end(), 0.0);
    std::vector<NoiseRow> rows;
    for (std::size_t b = 0; b < mse.size(); ++b)
      rows.push_back({sigma, static_cast<int>(b), mse[b], std::log10(mse[b]), mutual});
    return rows;
  };
  if (base.epochs < 1) fail(ErrorCode::config, "the noise experiment needs at least one epoch");
  NoiseResult out;
  out.baseline = run(0.0);
  for (double s : sigmas) {
    auto rows = s == 0.0 ? out.baseline : run(s);
    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
  }
  return out;
}

}  // namespace mirnn
