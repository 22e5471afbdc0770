#pragma once

// Trajectory domain types: timestamp merging, masking, the interpolation
// prior, normalization, and assembly of the L x D condition tensor.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trace/tensor.hpp"

namespace trace {

struct Point {
  double lon = 0.0;
  double lat = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

using TrajectorySeq = std::vector<Point>;

// Strictly increasing timestamps. Query sequences may be empty; observed
// sequences are checked for non-emptiness where they are consumed.
class TimestampSeq {
 public:
  TimestampSeq() = default;
  explicit TimestampSeq(std::vector<double> values);

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double front() const { return values_.front(); }
  double back() const { return values_.back(); }

  friend bool operator==(const TimestampSeq&, const TimestampSeq&) = default;

 private:
  std::vector<double> values_;
};

void validate_trajectory(const TrajectorySeq& points, const TimestampSeq& times);

enum class ContextKind { kAgentId, kStartTime, kWeekday, kDuration, kCustom };

std::string_view context_kind_name(ContextKind kind);
ContextKind parse_context_kind(std::string_view name);
bool is_categorical(ContextKind kind);

struct Context {
  ContextKind kind = ContextKind::kCustom;
  // Categorical kinds carry one value holding the category index.
  std::vector<double> payload;
};

struct RecoveryTask {
  TimestampSeq observed_times;
  TrajectorySeq observed_points;
  TimestampSeq query_times;
  std::vector<Context> contexts;
  std::optional<TrajectorySeq> truth;

  // Checks non-empty observation, aligned lengths, S and Q disjoint, and
  // ground-truth length.
  void validate() const;
};

// A dense (fully observed) trajectory in normalized space.
struct DenseTrajectory {
  TimestampSeq times;
  TrajectorySeq points;
  std::vector<Context> contexts;
};

struct MergedSequence {
  std::vector<double> times;
  TrajectorySeq points;
  std::vector<std::uint8_t> mask;
  TrajectorySeq lerp_points;

  std::size_t length() const { return times.size(); }
  std::vector<std::size_t> query_positions() const;
  std::vector<std::size_t> observed_positions() const;
};

// Chronological merge of S and Q. Query slots take query_init in order.
// Throws kDuplicateTime when S and Q share a timestamp.
MergedSequence merge(const TimestampSeq& observed_times, const TimestampSeq& query_times,
                     const TrajectorySeq& observed_points, const TrajectorySeq& query_init);

// Time-weighted linear interpolation between the nearest observed neighbours,
// clamped to the nearest observed point outside the observed time range.
TrajectorySeq lerp_fill(const MergedSequence& merged);

std::vector<double> sample_intervals(const TimestampSeq& times);

struct CoordStats {
  double mean_lon = 0.0;
  double mean_lat = 0.0;
  double std_lon = 1.0;
  double std_lat = 1.0;
};

struct NormStats {
  CoordStats coords;
  double t_start = 0.0;
  double t_span = 1.0;
};

struct NormalizedTrajectory {
  TrajectorySeq points;
  TimestampSeq times;
  NormStats stats;
};

// Population mean/std per axis over every point given. Zero std is an error.
CoordStats fit_coord_stats(std::span<const TrajectorySeq> trajectories);

// z-scores coordinates with the given dataset-level stats and maps times
// affinely so the first maps to 0 and the last to 1.
NormalizedTrajectory normalize(const TrajectorySeq& raw_points, const std::vector<double>& raw_times,
                               const CoordStats& coords);
// Same, fitting coordinate stats on this trajectory alone.
NormalizedTrajectory normalize(const TrajectorySeq& raw_points, const std::vector<double>& raw_times);

Point denormalize_point(const Point& p, const CoordStats& coords);
double denormalize_time(double t, const NormStats& stats);
TrajectorySeq denormalize(const TrajectorySeq& points, const CoordStats& coords);
std::vector<double> denormalize_times(const std::vector<double>& times, const NormStats& stats);

struct ChannelRange {
  std::string name;
  std::size_t begin = 0;
  std::size_t count = 0;
};

// Fixed channel order of the condition tensor. Stored in checkpoints.
inline constexpr int kChannelLayoutVersion = 1;
inline constexpr std::size_t kPointChannels = 0;
inline constexpr std::size_t kTimeChannel = 2;
inline constexpr std::size_t kMaskChannel = 3;
inline constexpr std::size_t kLerpChannels = 4;
inline constexpr std::size_t kBaseChannels = 6;

std::vector<std::string> channel_order_names();

// The aggregated condition, stored channel-major (D rows x L columns).
template <class Real>
struct ConditionTensor {
  Tensor<Real> data;
  std::vector<ChannelRange> channel_map;

  std::size_t length() const { return data.cols(); }
  std::size_t depth() const { return data.rows(); }
  const ChannelRange& range(std::string_view name) const;
  Tensor<Real> extract(std::string_view name) const;
};

// Concatenates (points, time, mask, lerp, E_1..E_K). Each embedding is
// d_i x L, channel-major.
template <class Real>
ConditionTensor<Real> aggregate(const MergedSequence& merged, const std::vector<Tensor<Real>>& embeddings);

// Overwrites the point channels at mask=1 positions with a 2 x |Q| block.
template <class Real>
void write_query_block(ConditionTensor<Real>& cond, const std::vector<std::uint8_t>& mask, const Tensor<Real>& block);

template <class Real>
Tensor<Real> read_query_block(const ConditionTensor<Real>& cond, const std::vector<std::uint8_t>& mask);

// 2 x n block of the given points (row 0 lon, row 1 lat).
template <class Real>
Tensor<Real> points_to_block(const TrajectorySeq& points);

template <class Real>
TrajectorySeq block_to_points(const Tensor<Real>& block);

}  // namespace trace
