#include "mirnn/intervals.hpp"
#include "mirnn/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mirnn {

const char* to_string(SubInterval c) noexcept {
  switch (c) {
    case SubInterval::mutual: return "mutual";
    case SubInterval::near_independent: return "near";
    case SubInterval::remaining_independent: return "remaining";
  }
  return "?";
}

TimePartition::TimePartition(std::vector<Interval> blocks, double near_width)
    : blocks_(std::move(blocks)), near_width_(near_width) {}

TimePartition TimePartition::uniform(double t_start, double t_end, int n_blocks,
                                     double mutual_length, double near_width) {
  if (n_blocks < 1) fail(ErrorCode::partition, "partition needs at least one block");
  if (!(t_end > t_start)) fail(ErrorCode::partition, "partition needs t_end > t_start");
  if (!(mutual_length >= 0.0)) fail(ErrorCode::partition, "mutual length must be >= 0");
  if (!(near_width >= 0.0)) fail(ErrorCode::partition, "near width must be >= 0");
  const double base = (t_end - t_start) / n_blocks;
  if (n_blocks > 1 && mutual_length >= base)
    fail(ErrorCode::degenerate_overlap,
         "mutual length " + std::to_string(mutual_length) +
             " is not shorter than the base block length " + std::to_string(base));
  std::vector<Interval> blocks;
  for (int i = 0; i < n_blocks; ++i) {
    const double s = t_start + i * base;
    const double e = i + 1 == n_blocks ? t_end : t_start + (i + 1) * base + mutual_length;
    blocks.push_back({s, e});
  }
  return TimePartition(std::move(blocks), near_width);
}

TimePartition TimePartition::explicit_intervals(std::vector<Interval> blocks,
                                                double near_width) {
  if (blocks.empty()) fail(ErrorCode::partition, "partition needs at least one block");
  if (!(near_width >= 0.0)) fail(ErrorCode::partition, "near width must be >= 0");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (!std::isfinite(b.start) || !std::isfinite(b.end) || !(b.end > b.start))
      fail(ErrorCode::partition, "block " + std::to_string(i) + " is empty or not finite");
    if (i == 0) continue;
    const auto& p = blocks[i - 1];
    if (!(b.start > p.start))
      fail(ErrorCode::partition, "block starts must strictly increase");
    if (b.start > p.end)
      fail(ErrorCode::partition, "gap between blocks " + std::to_string(i - 1) + " and " +
                                     std::to_string(i));
    if (!(b.end > p.end))
      fail(ErrorCode::degenerate_overlap,
           "block " + std::to_string(i) + " lies inside its predecessor");
    if (i >= 2 && !(b.start > blocks[i - 2].end))
      fail(ErrorCode::degenerate_overlap, "blocks " + std::to_string(i - 2) + " and " +
                                              std::to_string(i) + " overlap");
  }
  return TimePartition(std::move(blocks), near_width);
}

const Interval& TimePartition::block(int i) const {
  if (i < 0 || i >= block_count())
    fail(ErrorCode::partition, "block index " + std::to_string(i) + " out of range");
  return blocks_[static_cast<std::size_t>(i)];
}

Interval TimePartition::mutual_interval(int i) const {
  if (i < 0 || i + 1 >= block_count())
    fail(ErrorCode::partition, "mutual interval " + std::to_string(i) + " out of range");
  return {block(i + 1).start, block(i).end};
}

bool TimePartition::has_mutual_overlap(int i) const {
  return mutual_interval(i).length() > 0.0;
}

std::vector<Interval> TimePartition::mutual_intervals() const {
  std::vector<Interval> out;
  for (int i = 0; i + 1 < block_count(); ++i) out.push_back(mutual_interval(i));
  return out;
}

SubInterval TimePartition::classify(int b, double t) const {
  const Interval& iv = block(b);
  if (!iv.contains(t))
    fail(ErrorCode::domain, "t = " + std::to_string(t) + " lies outside block " +
                                std::to_string(b));
  if (b == 0) return SubInterval::remaining_independent;
  const double prev_end = block(b - 1).end;
  if (t <= prev_end) return SubInterval::mutual;
  if (t <= prev_end + near_width_) return SubInterval::near_independent;
  return SubInterval::remaining_independent;
}

SubInterval TimePartition::classify_clamped(int b, double t) const {
  const Interval& iv = block(b);
  return classify(b, std::clamp(t, iv.start, iv.end));
}

std::vector<int> TimePartition::owning_blocks(double t) const {
  if (!(t >= t_start() && t <= t_end()))
    fail(ErrorCode::domain, "t = " + std::to_string(t) + " lies outside [" +
                                std::to_string(t_start()) + ", " + std::to_string(t_end()) +
                                "]");
  std::vector<int> out;
  for (int i = 0; i < block_count(); ++i)
    if (blocks_[static_cast<std::size_t>(i)].contains(t)) out.push_back(i);
  return out;
}

std::string ConditioningRule::describe() const {
  switch (kind) {
    case Conditioning::temporal_alignment: return "TA";
    case Conditioning::preceding_end: return "end";
    case Conditioning::fixed: {
      std::ostringstream os;
      os << time;
      return os.str();
    }
  }
  return "?";
}

bool ConditioningPolicy::uses_alignment() const {
  return std::any_of(rules.begin(), rules.end(), [](const ConditioningRule& r) {
    return r.kind == Conditioning::temporal_alignment;
  });
}

void ConditioningPolicy::validate() const {
  for (const auto& r : rules)
    if (r.kind == Conditioning::fixed && !std::isfinite(r.time))
      fail(ErrorCode::config, "fixed conditioning time must be finite");
}

double conditioning_time(const ConditioningPolicy& policy, const TimePartition& partition,
                         int b, double t) {
  if (b < 1 || b >= partition.block_count())
    fail(ErrorCode::partition, "conditioning needs a preceding block");
  const ConditioningRule& r = policy[partition.classify_clamped(b, t)];
  switch (r.kind) {
    case Conditioning::temporal_alignment: return t;
    case Conditioning::fixed: return r.time;
    case Conditioning::preceding_end: return partition.block(b - 1).end;
  }
  return t;
}

void ForgetFactorSchedule::validate() const {
  for (double f : factors)
    if (!(f >= 0.0 && f <= 1.0))
      fail(ErrorCode::config, "forget factor " + std::to_string(f) + " outside [0, 1]");
}

}  // namespace mirnn
