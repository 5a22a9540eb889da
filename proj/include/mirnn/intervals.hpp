#pragma once

#include <array>
#include <string>
#include <vector>

namespace mirnn {

struct Interval {
  double start = 0.0;
  double end = 0.0;

  bool contains(double t) const { return t >= start && t <= end; }
  double length() const { return end - start; }
};

enum class SubInterval { mutual = 0, near_independent = 1, remaining_independent = 2 };

const char* to_string(SubInterval c) noexcept;

/// Block time intervals of an MI-RNN. Blocks are indexed from 0; block i and
/// block i+1 share the closed mutual interval [start(i+1), end(i)].
class TimePartition {
 public:
  /// Equal base division of [t_start, t_end] into n_blocks, then every block
  /// except the last is extended past its base end by mutual_length.
  static TimePartition uniform(double t_start, double t_end, int n_blocks,
                               double mutual_length, double near_width = 0.05);

  /// Explicit, possibly unequal, intervals. They must be ordered, leave no
  /// gaps, and only consecutive blocks may overlap.
  static TimePartition explicit_intervals(std::vector<Interval> blocks,
                                          double near_width = 0.05);

  int block_count() const { return static_cast<int>(blocks_.size()); }
  const Interval& block(int i) const;
  const std::vector<Interval>& blocks() const { return blocks_; }

  /// Overlap of blocks i and i+1; block_count() - 1 entries. Zero-length when
  /// the blocks only touch.
  std::vector<Interval> mutual_intervals() const;
  Interval mutual_interval(int i) const;
  bool has_mutual_overlap(int i) const;

  double t_start() const { return blocks_.front().start; }
  double t_end() const { return blocks_.back().end; }
  double near_width() const { return near_width_; }

  /// Sub-interval class of t within block b. Throws domain when t lies
  /// outside the block.
  SubInterval classify(int b, double t) const;
  /// Same, with t first clamped into the block. Used for the upstream links
  /// of a conditioning chain, whose times may fall outside the block.
  SubInterval classify_clamped(int b, double t) const;

  /// All blocks whose closed interval contains t, in increasing order.
  std::vector<int> owning_blocks(double t) const;

 private:
  TimePartition(std::vector<Interval> blocks, double near_width);

  std::vector<Interval> blocks_;
  double near_width_ = 0.05;
};

enum class Conditioning {
  temporal_alignment,  // preceding block evaluated at the query time
  fixed,               // at a given time
  preceding_end,       // at the end of the preceding block's interval
};

struct ConditioningRule {
  Conditioning kind = Conditioning::preceding_end;
  double time = 0.0;  // Conditioning::fixed only

  static ConditioningRule aligned() { return {Conditioning::temporal_alignment, 0.0}; }
  static ConditioningRule at(double t) { return {Conditioning::fixed, t}; }
  static ConditioningRule at_preceding_end() { return {Conditioning::preceding_end, 0.0}; }

  std::string describe() const;
};

/// One conditioning rule per sub-interval class of the query block.
struct ConditioningPolicy {
  std::array<ConditioningRule, 3> rules{ConditioningRule::at_preceding_end(),
                                        ConditioningRule::at_preceding_end(),
                                        ConditioningRule::at_preceding_end()};

  static ConditioningPolicy uniform(ConditioningRule r) { return {{r, r, r}}; }

  const ConditioningRule& operator[](SubInterval c) const {
    return rules[static_cast<std::size_t>(c)];
  }
  bool uses_alignment() const;
  void validate() const;
};

/// Time at which block b-1 is evaluated to condition block b's prediction at t.
double conditioning_time(const ConditioningPolicy& policy, const TimePartition& partition,
                         int b, double t);

/// Forget factors for the mutual, near-independent and remaining-independent
/// classes, in that order.
struct ForgetFactorSchedule {
  std::array<double, 3> factors{0.5, 0.5, 0.5};

  static ForgetFactorSchedule uniform(double f) { return {{f, f, f}}; }
  double operator[](SubInterval c) const { return factors[static_cast<std::size_t>(c)]; }
  void validate() const;
};

}  // namespace mirnn
