#pragma once

#include "mirnn/autodiff.hpp"
#include "mirnn/intervals.hpp"
#include "mirnn/loss.hpp"
#include "mirnn/network.hpp"
#include "mirnn/physics.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mirnn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update. Throws divergence naming the first
/// non-finite gradient entry; params and state are untouched in that case.
void adam_step(std::vector<Eigen::MatrixXd>& params, const ad::Gradient& grad, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  AdamConfig adam;
  int epochs = 20000;
  SamplingSpec sampling;
  std::uint64_t seed = 0;
  MutualLossConfig mutual;
  LossWeights weights;
  int checkpoint_interval = 0;  // epochs; 0 disables
  std::string checkpoint_path;  // written atomically at each interval

  void validate() const;
};

struct EpochRecord {
  LossBreakdown loss;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  std::size_t size() const { return epochs.size(); }
  /// Loss values only; wall-clock is excluded.
  bool same_losses(const TrainHistory& other) const;
};

/// Everything needed to resume training bitwise.
struct Checkpoint {
  static constexpr int format_version = 1;

  BlockParams params;
  ForgetFactorSchedule ff;
  AdamState adam;
  int epoch = 0;  // completed epochs
  TrainHistory history;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
/// Throws not_found when the file is missing, io when it does not parse.
Checkpoint load_checkpoint(const std::string& path);

struct TrainResult {
  MiRnnModel model;
  AdamState adam;
  TrainHistory history;
};

struct TrainSetup {
  PdeProblem problem;
  TimePartition partition = TimePartition::uniform(0.0, 1.0, 1, 0.0);
  ConditioningPolicy policy;
  ForgetFactorSchedule ff;
  LayerSpec spec;
};

using EpochCallback = std::function<void(int epoch, const LossBreakdown&)>;

/// Runs config.epochs epochs of {resample, loss, gradient, Adam}. Starts from
/// `resume` when given. A non-finite loss throws divergence after writing the
/// last good state to the checkpoint path, when one is configured.
TrainResult train(const TrainSetup& setup, const TrainConfig& config,
                  const Checkpoint* resume = nullptr, const EpochCallback& on_epoch = {});

/// Predictions on a space-time point set.
struct GridEvaluation {
  Eigen::MatrixXd coords;      // coordinates x N
  Eigen::MatrixXd prediction;  // fields x N, from the latest owning block
  Eigen::MatrixXd earlier;     // fields x N, earlier block in mutual intervals, NaN elsewhere
  Eigen::MatrixXd exact;       // fields x N
  std::vector<int> block;      // latest owning block per point
  std::vector<bool> mutual;    // point lies in a mutual interval
};

/// Regular mesh over the domain's bounding box and [t_start, t_end] at the
/// given spacing, keeping only points inside the domain.
Eigen::MatrixXd grid_points(const PdeProblem& problem, double spacing);

GridEvaluation evaluate_points(const MiRnnModel& model, const PdeProblem& problem,
                               const Eigen::MatrixXd& coords);
GridEvaluation evaluate_grid(const MiRnnModel& model, const PdeProblem& problem,
                             double spacing);

}  // namespace mirnn
