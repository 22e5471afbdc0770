#include "trace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace trace {
namespace {

void require_paired(const TrajectorySeq& pred, const TrajectorySeq& truth) {
  require(pred.size() == truth.size(), ErrorCategory::kShapeMismatch,
          "prediction has " + std::to_string(pred.size()) + " points, truth " + std::to_string(truth.size()));
  require(!pred.empty(), ErrorCategory::kInvalidArgument, "metric over an empty trajectory");
}

double distance(const Point& a, const Point& b) { return std::hypot(a.lon - b.lon, a.lat - b.lat); }

double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / double(v.size()));
}

}  // namespace

double mse(const TrajectorySeq& pred, const TrajectorySeq& truth) {
  require_paired(pred, truth);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i].lon - truth[i].lon, dy = pred[i].lat - truth[i].lat;
    acc += dx * dx + dy * dy;
  }
  return acc / double(2 * pred.size());
}

double mae(const TrajectorySeq& pred, const TrajectorySeq& truth) {
  require_paired(pred, truth);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc += std::abs(pred[i].lon - truth[i].lon) + std::abs(pred[i].lat - truth[i].lat);
  }
  return acc / double(2 * pred.size());
}

std::string_view ndtw_norm_name(NdtwNorm norm) { return norm == NdtwNorm::kPathLength ? "path_length" : "max_length"; }

NdtwNorm parse_ndtw_norm(std::string_view name) {
  if (name == "path_length") return NdtwNorm::kPathLength;
  if (name == "max_length") return NdtwNorm::kMaxLength;
  fail(ErrorCategory::kInvalidArgument, "unknown NDTW normalization: " + std::string(name));
}

DtwResult dtw(const TrajectorySeq& a, const TrajectorySeq& b) {
  require(!a.empty() && !b.empty(), ErrorCategory::kInvalidArgument, "DTW needs non-empty sequences");
  const std::size_t n = a.size(), m = b.size();
  std::vector<DtwResult> prev(m), cur(m);
  auto better = [](const DtwResult& x, const DtwResult& y) {
    return x.cost < y.cost || (x.cost == y.cost && x.path_length < y.path_length);
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      DtwResult best;
      if (i == 0 && j == 0) {
        best = {0.0, 0};
      } else {
        best = {std::numeric_limits<double>::infinity(), 0};
        if (i > 0 && j > 0 && better(prev[j - 1], best)) best = prev[j - 1];
        if (i > 0 && better(prev[j], best)) best = prev[j];
        if (j > 0 && better(cur[j - 1], best)) best = cur[j - 1];
      }
      cur[j] = {best.cost + distance(a[i], b[j]), best.path_length + 1};
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

double ndtw(const TrajectorySeq& pred, const TrajectorySeq& truth, NdtwNorm norm) {
  const auto r = dtw(pred, truth);
  const double denom =
      norm == NdtwNorm::kPathLength ? double(r.path_length) : double(std::max(pred.size(), truth.size()));
  return r.cost / denom;
}

Irregularity irregularity(const TrajectorySeq& points, const TimestampSeq& times) {
  validate_trajectory(points, times);
  std::vector<double> d;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) d.push_back(distance(points[i], points[i + 1]));
  Irregularity out;
  out.spatial_std = population_std(d);
  out.temporal_std = times.size() >= 2 ? population_std(sample_intervals(times)) : 0.0;
  return out;
}

double haversine_km(const Point& a, const Point& b) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * rad, dlon = (b.lon - a.lon) * rad;
  const double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * rad) * std::cos(b.lat * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(s)));
}

SpeedDistance speed_and_distance_raw(const TrajectorySeq& degrees, const std::vector<double>& seconds) {
  require(degrees.size() >= 2 && degrees.size() == seconds.size(), ErrorCategory::kInvalidArgument,
          "speed and distance need at least two timed points");
  SpeedDistance out;
  for (std::size_t i = 0; i + 1 < degrees.size(); ++i) out.distance_km += haversine_km(degrees[i], degrees[i + 1]);
  const double elapsed = seconds.back() - seconds.front();
  require(elapsed > 0, ErrorCategory::kInvalidArgument, "elapsed time must be positive");
  out.speed_mps = out.distance_km * 1000.0 / elapsed;
  return out;
}

SpeedDistance speed_and_distance(const TrajectorySeq& points, const TimestampSeq& times, const NormStats& stats) {
  validate_trajectory(points, times);
  return speed_and_distance_raw(denormalize(points, stats.coords), denormalize_times(times.values(), stats));
}

std::vector<int> quantile_bins(const std::vector<double>& values, int n_bins) {
  require(n_bins >= 1, ErrorCategory::kInvalidArgument, "need at least one bin");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<int> bins(values.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    bins[order[rank]] = static_cast<int>(rank * std::size_t(n_bins) / order.size());
  }
  return bins;
}

}  // namespace trace
