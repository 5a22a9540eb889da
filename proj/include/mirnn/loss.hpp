#pragma once

#include "mirnn/autodiff.hpp"
#include "mirnn/intervals.hpp"
#include "mirnn/network.hpp"
#include "mirnn/physics.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mirnn {

struct LossBreakdown {
  double initial = 0.0;
  std::vector<double> pde;         // per block
  std::vector<double> bc;          // per block
  std::vector<double> mutual;      // per adjacent pair with a mutual term
  std::vector<double> mutual_bc;   // empty unless enabled
  std::vector<double> mutual_pde;  // empty unless enabled
  double total = 0.0;

  /// Components in accumulation order: ic, pde..., bc..., mutual...,
  /// mutual_bc..., mutual_pde....
  std::vector<double> components() const;
  std::vector<std::string> component_names() const;
};

struct MutualLossConfig {
  bool enabled = true;
  bool bc = false;
  bool pde = false;
  bool detach = false;       // block i's prediction is a fixed target for block i+1
  double noise_sigma = 0.0;  // Gaussian noise added to block i's prediction
};

struct LossWeights {
  double initial = 1.0;
  double pde = 1.0;
  double bc = 1.0;
  double mutual = 1.0;
  double mutual_bc = 1.0;
  double mutual_pde = 1.0;
};

/// Anything that predicts the fields of a block as a graph over coordinate
/// inputs. The MI-RNN is the usual one; tests substitute the exact solution.
class Surrogate {
 public:
  virtual ~Surrogate() = default;
  virtual int block_count() const = 0;
  virtual QueryGraph build(int block, InputIds& ids, const std::string& label) const = 0;
  virtual void bind(const QueryGraph& q, const Eigen::MatrixXd& coords,
                    std::vector<Eigen::MatrixXd>& inputs) const = 0;
};

class MiRnnSurrogate final : public Surrogate {
 public:
  MiRnnSurrogate(LayerSpec spec, TimePartition partition, ConditioningPolicy policy,
                 ForgetFactorSchedule ff);

  int block_count() const override { return partition_.block_count(); }
  QueryGraph build(int block, InputIds& ids, const std::string& label) const override;
  void bind(const QueryGraph& q, const Eigen::MatrixXd& coords,
            std::vector<Eigen::MatrixXd>& inputs) const override;

 private:
  NetworkGraph net_;
  TimePartition partition_;
  ConditioningPolicy policy_;
  ForgetFactorSchedule ff_;
};

/// The closed-form solution, identical in every block.
class ExactSurrogate final : public Surrogate {
 public:
  ExactSurrogate(PdeProblem problem, int blocks);

  int block_count() const override { return blocks_; }
  QueryGraph build(int block, InputIds& ids, const std::string& label) const override;
  void bind(const QueryGraph& q, const Eigen::MatrixXd& coords,
            std::vector<Eigen::MatrixXd>& inputs) const override;

 private:
  PdeProblem problem_;
  int blocks_;
};

/// Collocation points for one loss evaluation, coordinates x count each.
struct PointSets {
  Eigen::MatrixXd initial;
  std::vector<Eigen::MatrixXd> interior;  // per block
  std::vector<Eigen::MatrixXd> boundary;  // per block; for periodic problems the
                                          // first half of each pair
  std::vector<Eigen::MatrixXd> periodic;  // per block, matched partners, periodic only
  std::vector<Eigen::MatrixXd> mutual;    // per pair
  std::vector<Eigen::MatrixXd> mutual_boundary;
  std::vector<Eigen::MatrixXd> noise;     // per pair, fields x count
};

/// Which terms a loss graph contains.
struct LossLayout {
  bool initial = true;
  std::vector<bool> pde;        // per block
  std::vector<bool> bc;         // per block
  std::vector<bool> mutual;     // per pair
  bool mutual_bc = false;
  bool mutual_pde = false;
  bool noise = false;
  bool detach = false;
  bool periodic = false;
};

/// Terms the full training loss uses for this partition.
LossLayout training_layout(const PdeProblem& problem, const TimePartition& partition,
                           const MutualLossConfig& mutual);

/// Draws the point sets of one epoch. Streams: interior, boundary, initial,
/// mutual and noise use independent seeds derived from (spec.seed, epoch).
PointSets sample_epoch(const PdeProblem& problem, const TimePartition& partition,
                       const SamplingSpec& spec, const LossLayout& layout, double noise_sigma,
                       std::uint64_t noise_seed, std::uint64_t epoch);

/// Mean of squared entries of a - b over every row and column.
ad::Expr mse(const ad::Expr& a, const ad::Expr& b);

/// One compiled loss graph. Built once; rebound to new points every epoch.
class LossGraph {
 public:
  LossGraph(const Surrogate& surrogate, const PdeProblem& problem, LossLayout layout,
            LossWeights weights = {});
  ~LossGraph();
  LossGraph(const LossGraph&) = delete;
  LossGraph& operator=(const LossGraph&) = delete;

  /// Binds points, computing exact-solution targets for IC and BC terms.
  void bind(const PointSets& points);

  LossBreakdown evaluate(std::span<const Eigen::MatrixXd> params);
  /// Forward then reverse pass on the weighted total.
  LossBreakdown gradient(std::span<const Eigen::MatrixXd> params, ad::Gradient& grads);

  const LossLayout& layout() const { return layout_; }
  const ad::Expr& total_expr() const { return total_; }
  std::span<const Eigen::MatrixXd> inputs() const { return inputs_; }
  std::size_t node_count() const;

 private:
  struct Target;
  LossBreakdown read() const;

  const Surrogate* surrogate_;
  PdeProblem problem_;
  LossLayout layout_;
  std::vector<std::unique_ptr<Target>> targets_;
  std::vector<int> slots_;  // program output per component, -1 when absent
  ad::Expr total_;
  std::unique_ptr<ad::Program> program_;
  std::vector<Eigen::MatrixXd> inputs_;
  InputIds ids_;
};

// Standalone terms for a trained or random model.

double initial_condition_loss(const MiRnnModel& model, const PdeProblem& problem,
                              const Eigen::MatrixXd& points);

struct BlockLoss {
  double pde = 0.0;
  double bc = 0.0;
};

/// An empty boundary set reports bc = 0.
BlockLoss block_loss(const MiRnnModel& model, const PdeProblem& problem, int block,
                     const Eigen::MatrixXd& interior, const Eigen::MatrixXd& boundary);
BlockLoss block_loss(const Surrogate& surrogate, std::span<const Eigen::MatrixXd> params,
                     const PdeProblem& problem, const TimePartition& partition, int block,
                     const Eigen::MatrixXd& interior, const Eigen::MatrixXd& boundary);

struct MutualLoss {
  double match = 0.0;
  std::optional<double> bc;
  std::optional<double> pde;
};

MutualLoss mutual_block_loss(const MiRnnModel& model, const PdeProblem& problem, int pair,
                             const Eigen::MatrixXd& points, const MutualLossConfig& config,
                             const Eigen::MatrixXd& boundary = {});

LossBreakdown total_loss(const MiRnnModel& model, const PdeProblem& problem,
                         const PointSets& points, const MutualLossConfig& config,
                         const LossWeights& weights = {});

}  // namespace mirnn
