#pragma once

#include "mirnn/intervals.hpp"
#include "mirnn/trainer.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace mirnn {

/// 1 - SS_res / SS_tot over every entry. Throws degenerate_target when the
/// exact values are all identical.
double r_squared(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& exact);

/// ||prediction - exact||_2 / ||exact||_2 over every entry.
double relative_error(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& exact);

double mean_squared_error(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& exact);

struct TimeSlice {
  double t_lo = 0.0;
  double t_hi = 0.0;
  int block = 0;  // latest block owning the slice midpoint
  SubInterval cls = SubInterval::remaining_independent;
  long count = 0;
  double mse = 0.0;  // NaN for an empty slice

  bool empty() const { return count == 0; }
};

/// MSE of the evaluation per time slice of the given width; ceil(T / width)
/// slices, the last one closed on the right.
std::vector<TimeSlice> mse_over_time(const GridEvaluation& eval, const TimePartition& partition,
                                     double width);

/// For every block start after the first: MSE of the first non-empty slice
/// starting at or after it divided by the MSE of the last non-empty slice
/// ending at or before it.
std::vector<double> transition_ratios(const std::vector<TimeSlice>& series,
                                      const TimePartition& partition);

/// MSE over the points each block is responsible for.
std::vector<double> per_block_mse(const GridEvaluation& eval, int blocks);

/// Metrics on one spatial slice at time t.
struct SliceMetrics {
  double t = 0.0;
  long points = 0;
  double mse = 0.0;
  double velocity_mse = 0.0;  // first spatial_dims fields when the problem has more than one
  double relative_error = 0.0;
};

SliceMetrics slice_metrics(const MiRnnModel& model, const PdeProblem& problem, double t,
                           double spacing);

/// Spatial grid at time t, points inside the domain only.
Eigen::MatrixXd spatial_grid(const PdeProblem& problem, double t, double spacing);

struct NoiseRow {
  double sigma = 0.0;
  int block = 0;
  double mse = 0.0;
  double log10_mse = 0.0;
  double final_mutual = 0.0;  // sum over pairs at the last epoch
};

struct NoiseResult {
  std::vector<NoiseRow> baseline;  // sigma = 0
  std::vector<NoiseRow> rows;      // one per (sigma, block)
};

/// Trains the base setup once without noise and once per sigma with the same
/// seed, noise injected into the earlier block's prediction in every mutual
/// term, then reports grid MSE per block.
NoiseResult noise_experiment(const TrainSetup& setup, const TrainConfig& base,
                             const std::vector<double>& sigmas, double spacing);

}  // namespace mirnn
