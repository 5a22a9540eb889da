#pragma once

#include "mirnn/autodiff.hpp"
#include "mirnn/intervals.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mirnn {

/// Shape of one MI-RNN block: a tanh MLP with `hidden_layers` layers of
/// `width` neurons. Coordinates are ordered spatial first, time last.
struct LayerSpec {
  int inputs = 2;
  int hidden_layers = 4;
  int width = 30;
  int outputs = 1;
  // Per-coordinate range mapped onto [-1, 1] before the first layer. Empty
  // disables the scaling.
  std::vector<double> input_lo;
  std::vector<double> input_hi;

  void validate() const;
};

/// The single set of weights shared by every block. Tensor order: for each
/// feed-forward layer l (hidden layers, then the output layer) W_l, b_l;
/// then one width x width hidden-coupling map U_l per hidden layer.
struct BlockParams {
  LayerSpec spec;
  std::uint64_t seed = 0;
  std::vector<Eigen::MatrixXd> tensors;

  std::size_t weight_index(int layer) const { return 2 * static_cast<std::size_t>(layer); }
  std::size_t bias_index(int layer) const { return weight_index(layer) + 1; }
  std::size_t coupling_index(int layer) const {
    return 2 * static_cast<std::size_t>(spec.hidden_layers + 1) + static_cast<std::size_t>(layer);
  }
  std::string tensor_name(std::size_t i) const;

  std::size_t scalar_count() const;
  Eigen::VectorXd flat() const;
  void assign_flat(const Eigen::VectorXd& v);
  bool all_finite() const;
};

BlockParams init_params(const LayerSpec& spec, std::uint64_t seed);

/// Expression-level hidden state: one activation graph per hidden layer.
struct HiddenExprs {
  std::vector<ad::Expr> layers;
};

struct BlockExprs {
  ad::Expr fields;  // outputs x batch
  HiddenExprs hidden;
};

/// Parameter leaves for one LayerSpec plus the block forward pass as graphs.
/// Parameter ids follow BlockParams tensor order.
class NetworkGraph {
 public:
  explicit NetworkGraph(LayerSpec spec);

  const LayerSpec& spec() const { return spec_; }

  /// tanh(W_l a_{l-1} + ff * U_l h_l + b_l) per hidden layer; the coupling
  /// term is omitted when hidden is null. coords are 1 x batch graphs.
  BlockExprs block(std::span<const ad::Expr> coords, const HiddenExprs* hidden,
                   const ad::Expr& ff) const;

 private:
  LayerSpec spec_;
  std::vector<ad::Expr> params_;
};

/// Allocates input ids for graphs that are bound together.
class InputIds {
 public:
  int next() { return next_++; }
  int count() const { return next_; }

 private:
  int next_ = 0;
};

/// Per-point rows describing how each upstream block is evaluated for a
/// query in block `block`: block j runs at time alpha_j * t_{j+1} + anchor_j
/// (t_block being the query time), and its activations enter block j+1
/// scaled by ff_j.
struct QueryGraph {
  int block = 0;
  std::vector<int> coord_ids;
  struct Level {
    int alpha_id = -1;  // -1 when the policy never aligns
    int anchor_id = -1;
    int ff_id = -1;
  };
  std::vector<Level> levels;
  ad::Expr fields;
  std::vector<ad::Expr> coords;
};

QueryGraph build_query(const NetworkGraph& net, const ConditioningPolicy& policy, int block,
                       InputIds& ids, const std::string& label);

/// Fills the coordinate and chain rows of q for points given as columns of
/// coords (spatial rows first, time last). inputs grows as needed.
void bind_query(const QueryGraph& q, const TimePartition& partition,
                const ConditioningPolicy& policy, const ForgetFactorSchedule& ff,
                const Eigen::MatrixXd& coords, std::vector<Eigen::MatrixXd>& inputs);

struct MiRnnModel {
  BlockParams params;
  TimePartition partition;
  ConditioningPolicy policy;
  ForgetFactorSchedule ff;
};

// ---------------------------------------------------------------------------
// Concrete evaluation.

struct HiddenState {
  std::vector<Eigen::MatrixXd> layers;  // width x N each
  Eigen::MatrixXd conditioning_coords;  // inputs x N
};

struct BlockResult {
  Eigen::MatrixXd fields;  // outputs x N
  HiddenState hidden;      // this block's activations
};

BlockResult block_forward(const BlockParams& params, const Eigen::MatrixXd& coords,
                          const HiddenState* hidden_in, double ff);

/// One upstream evaluation of the conditioning chain: block j runs at coords
/// and its activations enter block j+1 scaled by ff.
struct ChainLink {
  Eigen::MatrixXd coords;
  double ff = 0.0;
};

/// Runs the chain front to back and returns the activations of its last
/// block. An empty chain returns nothing (the first block has no hidden state).
std::optional<HiddenState> conditional_hidden(const BlockParams& params,
                                              std::span<const ChainLink> chain);

/// The conditioning chain for a single query point in block b.
std::vector<ChainLink> build_chain(const MiRnnModel& model, int b,
                                   std::span<const double> point);

/// Batched predictions of each block, with one cached program per block.
class Predictor {
 public:
  explicit Predictor(const MiRnnModel& model, Eigen::Index chunk = 8192);

  /// Fields predicted by block b at the columns of coords.
  Eigen::MatrixXd predict(int b, const Eigen::MatrixXd& coords);

  const MiRnnModel& model() const { return *model_; }

 private:
  struct Compiled {
    QueryGraph query;
    std::unique_ptr<ad::Program> program;
    int input_count = 0;
  };
  Compiled& compiled(int b);

  const MiRnnModel* model_;
  Eigen::Index chunk_;
  NetworkGraph net_;
  std::vector<std::unique_ptr<Compiled>> cache_;
  std::vector<Eigen::MatrixXd> inputs_;
};

struct BlockPrediction {
  int block = 0;
  Eigen::VectorXd fields;
};

/// Prediction of every block owning the point's time (two inside a mutual
/// interval). Throws domain if no block owns it.
std::vector<BlockPrediction> unroll(const MiRnnModel& model, std::span<const double> point);

}  // namespace mirnn
