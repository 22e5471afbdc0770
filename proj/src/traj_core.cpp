#include "trace/traj_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace trace {

TimestampSeq::TimestampSeq(std::vector<double> values) : values_(std::move(values)) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    require(std::isfinite(values_[i]), ErrorCategory::kInvalidArgument, "timestamp is not finite");
    if (i > 0 && !(values_[i - 1] < values_[i])) {
      fail(ErrorCategory::kInvalidArgument, "timestamps must be strictly increasing (index " + std::to_string(i) + ")");
    }
  }
}

void validate_trajectory(const TrajectorySeq& points, const TimestampSeq& times) {
  require(points.size() == times.size(), ErrorCategory::kShapeMismatch, "trajectory length differs from timestamp count");
  for (const auto& p : points) {
    require(std::isfinite(p.lon) && std::isfinite(p.lat), ErrorCategory::kInvalidArgument, "non-finite coordinate");
  }
}

std::string_view context_kind_name(ContextKind kind) {
  switch (kind) {
    case ContextKind::kAgentId:
      return "agent_id";
    case ContextKind::kStartTime:
      return "start_time";
    case ContextKind::kWeekday:
      return "weekday";
    case ContextKind::kDuration:
      return "duration";
    case ContextKind::kCustom:
      return "custom";
  }
  return "custom";
}

ContextKind parse_context_kind(std::string_view name) {
  for (auto k : {ContextKind::kAgentId, ContextKind::kStartTime, ContextKind::kWeekday, ContextKind::kDuration,
                 ContextKind::kCustom}) {
    if (context_kind_name(k) == name) return k;
  }
  fail(ErrorCategory::kInvalidArgument, "unknown context kind: " + std::string(name));
}

bool is_categorical(ContextKind kind) { return kind == ContextKind::kAgentId || kind == ContextKind::kWeekday; }

void RecoveryTask::validate() const {
  require(!observed_times.empty(), ErrorCategory::kInvalidArgument, "task has no observed points");
  validate_trajectory(observed_points, observed_times);
  if (truth) {
    require(truth->size() == query_times.size(), ErrorCategory::kShapeMismatch, "ground truth length differs from |Q|");
  }
  const auto& s = observed_times.values();
  const auto& q = query_times.values();
  std::size_t i = 0, j = 0;
  while (i < s.size() && j < q.size()) {
    if (s[i] == q[j]) fail(ErrorCategory::kDuplicateTime, "query time " + std::to_string(q[j]) + " is also observed");
    s[i] < q[j] ? ++i : ++j;
  }
}

std::vector<std::size_t> MergedSequence::query_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) out.push_back(k);
  }
  return out;
}

std::vector<std::size_t> MergedSequence::observed_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) out.push_back(k);
  }
  return out;
}

MergedSequence merge(const TimestampSeq& observed_times, const TimestampSeq& query_times,
                     const TrajectorySeq& observed_points, const TrajectorySeq& query_init) {
  require(observed_points.size() == observed_times.size(), ErrorCategory::kShapeMismatch,
          "observed points and times differ in length");
  require(query_init.size() == query_times.size(), ErrorCategory::kShapeMismatch,
          "query initialization and query times differ in length");
  const auto& s = observed_times.values();
  const auto& q = query_times.values();
  MergedSequence out;
  const std::size_t total = s.size() + q.size();
  out.times.reserve(total);
  out.points.reserve(total);
  out.mask.reserve(total);
  std::size_t i = 0, j = 0;
  while (i < s.size() || j < q.size()) {
    const bool take_query = i == s.size() || (j < q.size() && q[j] < s[i]);
    if (i < s.size() && j < q.size() && q[j] == s[i]) {
      fail(ErrorCategory::kDuplicateTime, "timestamp " + std::to_string(q[j]) + " appears in both S and Q");
    }
    if (take_query) {
      out.times.push_back(q[j]);
      out.points.push_back(query_init[j]);
      out.mask.push_back(1);
      ++j;
    } else {
      out.times.push_back(s[i]);
      out.points.push_back(observed_points[i]);
      out.mask.push_back(0);
      ++i;
    }
  }
  if (!s.empty()) out.lerp_points = lerp_fill(out);
  return out;
}

TrajectorySeq lerp_fill(const MergedSequence& merged) {
  const auto observed = merged.observed_positions();
  require(!observed.empty(), ErrorCategory::kInvalidArgument, "interpolation needs at least one observed point");
  TrajectorySeq out = merged.points;
  std::size_t next = 0;  // index into observed of the first observed position > k
  for (std::size_t k = 0; k < merged.length(); ++k) {
    if (!merged.mask[k]) {
      ++next;
      continue;
    }
    if (next == 0) {
      out[k] = merged.points[observed.front()];
    } else if (next == observed.size()) {
      out[k] = merged.points[observed.back()];
    } else {
      const std::size_t a = observed[next - 1];
      const std::size_t b = observed[next];
      const double w = (merged.times[k] - merged.times[a]) / (merged.times[b] - merged.times[a]);
      const Point& pa = merged.points[a];
      const Point& pb = merged.points[b];
      out[k] = {pa.lon + w * (pb.lon - pa.lon), pa.lat + w * (pb.lat - pa.lat)};
    }
  }
  return out;
}

std::vector<double> sample_intervals(const TimestampSeq& times) {
  require(times.size() >= 2, ErrorCategory::kInvalidArgument, "sample intervals need at least two timestamps");
  std::vector<double> out(times.size() - 1);
  for (std::size_t i = 0; i + 1 < times.size(); ++i) out[i] = times[i + 1] - times[i];
  return out;
}

CoordStats fit_coord_stats(std::span<const TrajectorySeq> trajectories) {
  double n = 0, sum_lon = 0, sum_lat = 0;
  for (const auto& tr : trajectories) {
    for (const auto& p : tr) {
      sum_lon += p.lon;
      sum_lat += p.lat;
      n += 1;
    }
  }
  require(n >= 2, ErrorCategory::kInvalidArgument, "normalization needs at least two points");
  CoordStats s;
  s.mean_lon = sum_lon / n;
  s.mean_lat = sum_lat / n;
  double var_lon = 0, var_lat = 0;
  for (const auto& tr : trajectories) {
    for (const auto& p : tr) {
      var_lon += (p.lon - s.mean_lon) * (p.lon - s.mean_lon);
      var_lat += (p.lat - s.mean_lat) * (p.lat - s.mean_lat);
    }
  }
  s.std_lon = std::sqrt(var_lon / n);
  s.std_lat = std::sqrt(var_lat / n);
  require(s.std_lon > 0 && s.std_lat > 0, ErrorCategory::kNumeric, "zero coordinate spread on an axis");
  return s;
}

NormalizedTrajectory normalize(const TrajectorySeq& raw_points, const std::vector<double>& raw_times,
                               const CoordStats& coords) {
  require(raw_points.size() >= 2, ErrorCategory::kInvalidArgument, "normalization needs at least two points");
  require(raw_points.size() == raw_times.size(), ErrorCategory::kShapeMismatch, "points and times differ in length");
  require(coords.std_lon > 0 && coords.std_lat > 0, ErrorCategory::kNumeric, "zero coordinate spread on an axis");
  NormalizedTrajectory out;
  out.stats.coords = coords;
  out.stats.t_start = raw_times.front();
  out.stats.t_span = raw_times.back() - raw_times.front();
  require(out.stats.t_span > 0, ErrorCategory::kInvalidArgument, "trajectory has zero duration");
  out.points.reserve(raw_points.size());
  for (const auto& p : raw_points) {
    out.points.push_back({(p.lon - coords.mean_lon) / coords.std_lon, (p.lat - coords.mean_lat) / coords.std_lat});
  }
  std::vector<double> t(raw_times.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (raw_times[i] - out.stats.t_start) / out.stats.t_span;
  t.back() = 1.0;
  out.times = TimestampSeq(std::move(t));
  return out;
}

NormalizedTrajectory normalize(const TrajectorySeq& raw_points, const std::vector<double>& raw_times) {
  const TrajectorySeq* one = &raw_points;
  return normalize(raw_points, raw_times, fit_coord_stats(std::span<const TrajectorySeq>(one, 1)));
}

Point denormalize_point(const Point& p, const CoordStats& c) {
  return {p.lon * c.std_lon + c.mean_lon, p.lat * c.std_lat + c.mean_lat};
}

double denormalize_time(double t, const NormStats& stats) { return stats.t_start + t * stats.t_span; }

TrajectorySeq denormalize(const TrajectorySeq& points, const CoordStats& coords) {
  TrajectorySeq out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(denormalize_point(p, coords));
  return out;
}

std::vector<double> denormalize_times(const std::vector<double>& times, const NormStats& stats) {
  std::vector<double> out(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) out[i] = denormalize_time(times[i], stats);
  return out;
}

std::vector<std::string> channel_order_names() { return {"points", "time", "mask", "lerp"}; }

template <class Real>
const ChannelRange& ConditionTensor<Real>::range(std::string_view name) const {
  for (const auto& r : channel_map) {
    if (r.name == name) return r;
  }
  fail(ErrorCategory::kInvalidArgument, "no channel range named " + std::string(name));
}

template <class Real>
Tensor<Real> ConditionTensor<Real>::extract(std::string_view name) const {
  const auto& r = range(name);
  Tensor<Real> out(r.count, data.cols());
  std::copy_n(data.data() + r.begin * data.cols(), r.count * data.cols(), out.data());
  return out;
}

template <class Real>
ConditionTensor<Real> aggregate(const MergedSequence& merged, const std::vector<Tensor<Real>>& embeddings) {
  const std::size_t L = merged.length();
  require(merged.points.size() == L && merged.mask.size() == L && merged.lerp_points.size() == L,
          ErrorCategory::kShapeMismatch, "merged sequence fields differ in length");
  std::size_t depth = kBaseChannels;
  for (const auto& e : embeddings) {
    if (e.cols() != L) {
      fail(ErrorCategory::kShapeMismatch,
           "context embedding length " + std::to_string(e.cols()) + " differs from L=" + std::to_string(L));
    }
    depth += e.rows();
  }
  ConditionTensor<Real> out;
  out.data = Tensor<Real>(depth, L);
  auto& d = out.data;
  for (std::size_t k = 0; k < L; ++k) {
    d(kPointChannels, k) = static_cast<Real>(merged.points[k].lon);
    d(kPointChannels + 1, k) = static_cast<Real>(merged.points[k].lat);
    d(kTimeChannel, k) = static_cast<Real>(merged.times[k]);
    d(kMaskChannel, k) = static_cast<Real>(merged.mask[k]);
    d(kLerpChannels, k) = static_cast<Real>(merged.lerp_points[k].lon);
    d(kLerpChannels + 1, k) = static_cast<Real>(merged.lerp_points[k].lat);
  }
  out.channel_map = {{"points", kPointChannels, 2}, {"time", kTimeChannel, 1}, {"mask", kMaskChannel, 1},
                     {"lerp", kLerpChannels, 2}};
  std::size_t row = kBaseChannels;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const auto& e = embeddings[i];
    std::copy_n(e.data(), e.size(), d.data() + row * L);
    out.channel_map.push_back({"E" + std::to_string(i + 1), row, e.rows()});
    row += e.rows();
  }
  return out;
}

template <class Real>
void write_query_block(ConditionTensor<Real>& cond, const std::vector<std::uint8_t>& mask, const Tensor<Real>& block) {
  require(mask.size() == cond.length(), ErrorCategory::kShapeMismatch, "mask length differs from condition length");
  std::size_t j = 0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    require(j < block.cols(), ErrorCategory::kShapeMismatch, "query block narrower than the mask");
    cond.data(kPointChannels, k) = block(0, j);
    cond.data(kPointChannels + 1, k) = block(1, j);
    ++j;
  }
  require(block.rows() == 2 && j == block.cols(), ErrorCategory::kShapeMismatch, "query block shape does not match mask");
}

template <class Real>
Tensor<Real> read_query_block(const ConditionTensor<Real>& cond, const std::vector<std::uint8_t>& mask) {
  require(mask.size() == cond.length(), ErrorCategory::kShapeMismatch, "mask length differs from condition length");
  std::size_t m = 0;
  for (auto v : mask) m += v ? 1 : 0;
  Tensor<Real> out(2, m);
  std::size_t j = 0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    out(0, j) = cond.data(kPointChannels, k);
    out(1, j) = cond.data(kPointChannels + 1, k);
    ++j;
  }
  return out;
}

template <class Real>
Tensor<Real> points_to_block(const TrajectorySeq& points) {
  Tensor<Real> out(2, points.size());
  for (std::size_t j = 0; j < points.size(); ++j) {
    out(0, j) = static_cast<Real>(points[j].lon);
    out(1, j) = static_cast<Real>(points[j].lat);
  }
  return out;
}

template <class Real>
TrajectorySeq block_to_points(const Tensor<Real>& block) {
  require(block.rows() == 2, ErrorCategory::kShapeMismatch, "point block must have 2 rows");
  TrajectorySeq out(block.cols());
  for (std::size_t j = 0; j < block.cols(); ++j) out[j] = {double(block(0, j)), double(block(1, j))};
  return out;
}

#define TRACE_INSTANTIATE(Real)                                                                                   \
  template struct ConditionTensor<Real>;                                                                          \
  template ConditionTensor<Real> aggregate<Real>(const MergedSequence&, const std::vector<Tensor<Real>>&);        \
  template void write_query_block<Real>(ConditionTensor<Real>&, const std::vector<std::uint8_t>&,                \
                                        const Tensor<Real>&);                                                     \
  template Tensor<Real> read_query_block<Real>(const ConditionTensor<Real>&, const std::vector<std::uint8_t>&);  \
  template Tensor<Real> points_to_block<Real>(const TrajectorySeq&);                                              \
  template TrajectorySeq block_to_points<Real>(const Tensor<Real>&);

TRACE_INSTANTIATE(float)
TRACE_INSTANTIATE(double)
#undef TRACE_INSTANTIATE

}  // namespace trace
