#pragma once

// Recovery quality metrics, irregularity measures and the speed / distance
// estimators. Errors are computed in normalized coordinates.

#include <cstddef>
#include <string_view>
#include <vector>

#include "trace/traj_core.hpp"

namespace trace {

double mse(const TrajectorySeq& pred, const TrajectorySeq& truth);
double mae(const TrajectorySeq& pred, const TrajectorySeq& truth);

enum class NdtwNorm { kPathLength, kMaxLength };

std::string_view ndtw_norm_name(NdtwNorm norm);
NdtwNorm parse_ndtw_norm(std::string_view name);

struct DtwResult {
  double cost = 0.0;         // summed Euclidean cost of the optimal alignment
  std::size_t path_length = 0;  // cells on that alignment (shortest among ties)
};

DtwResult dtw(const TrajectorySeq& a, const TrajectorySeq& b);

// DTW cost divided by the warping-path length, or by max(|a|, |b|).
double ndtw(const TrajectorySeq& pred, const TrajectorySeq& truth, NdtwNorm norm = NdtwNorm::kPathLength);

struct Irregularity {
  double spatial_std = 0.0;
  double temporal_std = 0.0;
};

// Population std of consecutive point distances and of sample intervals.
Irregularity irregularity(const TrajectorySeq& points, const TimestampSeq& times);

struct SpeedDistance {
  double speed_mps = 0.0;
  double distance_km = 0.0;
};

inline constexpr double kEarthRadiusKm = 6371.0;

double haversine_km(const Point& a, const Point& b);

// Denormalizes with `stats`, sums great-circle segment lengths and divides by
// the elapsed time.
SpeedDistance speed_and_distance(const TrajectorySeq& points, const TimestampSeq& times, const NormStats& stats);

// Same on raw degrees and seconds.
SpeedDistance speed_and_distance_raw(const TrajectorySeq& degrees, const std::vector<double>& seconds);

// Bin index per value so that bins hold equal shares of the ranked values.
// Every value lands in exactly one of n_bins bins.
std::vector<int> quantile_bins(const std::vector<double>& values, int n_bins);

}  // namespace trace
