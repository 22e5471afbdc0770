#include "trace/synthdata.hpp"

#include <algorithm>
#include <cmath>

// boost 1.74 pchip.hpp calls isnan unqualified.
using std::isnan;
#include <boost/math/interpolators/pchip.hpp>

#include <numbers>
#include <numeric>

namespace trace {
namespace {

constexpr double kMetresPerDegree = 111320.0;
constexpr double kSecondsPerDay = 86400.0;
constexpr double kEpochStart = 1'700'000'000.0;

// Shape-preserving cubic through `count` random waypoints in [lo, hi],
// sampled at n evenly spaced positions. Never leaves [lo, hi].
std::vector<double> waypoint_profile(std::size_t n, int count, double lo, double hi, Rng& rng) {
  count = std::max(count, 4);
  std::vector<double> xs(count), ys(count);
  for (int i = 0; i < count; ++i) {
    xs[i] = double(i) * double(n - 1) / double(count - 1);
    ys[i] = rng.uniform(lo, hi);
  }
  boost::math::interpolators::pchip<std::vector<double>> spline(std::move(xs), std::move(ys));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp(spline(double(i)), lo, hi);
  return out;
}

// Places a path given in local metres inside the bounding box: uniform
// scaling (angles preserved) if it does not fit, then a random translation.
TrajectorySeq place_in_box(const std::vector<LocalXY>& path, const GeneratorParams& g, Rng& rng) {
  const double cos_lat = std::cos(g.center_lat * std::numbers::pi / 180.0);
  const double box_x = 2 * g.half_box_deg * kMetresPerDegree * cos_lat * 0.95;
  const double box_y = 2 * g.half_box_deg * kMetresPerDegree * 0.95;
  double min_x = path[0].x, max_x = path[0].x, min_y = path[0].y, max_y = path[0].y;
  for (const auto& p : path) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double w = max_x - min_x, h = max_y - min_y;
  double s = 1.0;
  if (w > box_x) s = std::min(s, box_x / w);
  if (h > box_y) s = std::min(s, box_y / h);
  const double slack_x = box_x - s * w, slack_y = box_y - s * h;
  const double off_x = -box_x / 2 + rng.uniform(0.0, slack_x) - s * min_x;
  const double off_y = -box_y / 2 + rng.uniform(0.0, slack_y) - s * min_y;
  TrajectorySeq out;
  out.reserve(path.size());
  for (const auto& p : path) {
    const double x = s * p.x + off_x, y = s * p.y + off_y;
    out.push_back({g.center_lon + x / (kMetresPerDegree * cos_lat), g.center_lat + y / kMetresPerDegree});
  }
  return out;
}

RawTrajectory taxi(std::size_t n, const GeneratorParams& g, Rng& rng) {
  const auto turn = waypoint_profile(n, g.taxi_control_points, -g.taxi_max_turn, g.taxi_max_turn, rng);
  const auto speed = waypoint_profile(n, g.taxi_control_points, g.taxi_min_speed, g.taxi_max_speed, rng);
  std::vector<LocalXY> path(n);
  double heading = rng.uniform(0.0, 2 * std::numbers::pi);
  for (std::size_t i = 1; i < n; ++i) {
    if (i > 1) heading += turn[i];
    const double step = speed[i] * g.taxi_interval_s;
    path[i] = {path[i - 1].x + step * std::cos(heading), path[i - 1].y + step * std::sin(heading)};
  }
  RawTrajectory out;
  out.points = place_in_box(path, g, rng);
  const double start = kEpochStart + std::floor(rng.uniform(0.0, 7 * kSecondsPerDay));
  out.times.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.times[i] = start + g.taxi_interval_s * double(i);
  out.weekday = static_cast<int>(std::floor((start - kEpochStart) / kSecondsPerDay)) % 7;
  out.agent_id = static_cast<int>(rng.uniform_int(0, g.agents - 1));
  return out;
}

RawTrajectory courier(std::size_t n, const GeneratorParams& g, Rng& rng) {
  const double start = kEpochStart + std::floor(rng.uniform(0.0, 7 * kSecondsPerDay));
  RawTrajectory out;
  out.times.resize(n);
  out.times[0] = start;
  const double mu = std::log(g.courier_median_interval_s);
  for (std::size_t i = 1; i < n; ++i) {
    const double dt = std::max(1.0, std::round(std::exp(mu + g.courier_interval_sigma * rng.normal())));
    out.times[i] = out.times[i - 1] + dt;
  }
  std::vector<LocalXY> path(n);
  LocalXY anchor{0, 0};
  bool dwelling = true;
  double heading = rng.uniform(0.0, 2 * std::numbers::pi);
  double speed = rng.uniform(g.courier_min_speed, g.courier_max_speed);
  std::size_t remaining = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (remaining == 0) {
      dwelling = rng.uniform() < g.courier_dwell_probability;
      remaining = static_cast<std::size_t>(rng.uniform_int(4, 16));
      heading = rng.uniform(0.0, 2 * std::numbers::pi);
      speed = rng.uniform(g.courier_min_speed, g.courier_max_speed);
    }
    --remaining;
    if (i > 0 && !dwelling) {
      const double dt = out.times[i] - out.times[i - 1];
      heading += 0.15 * rng.normal();
      anchor.x += speed * dt * std::cos(heading);
      anchor.y += speed * dt * std::sin(heading);
    }
    path[i] = {anchor.x + g.courier_jitter_m * rng.normal(), anchor.y + g.courier_jitter_m * rng.normal()};
  }
  out.points = place_in_box(path, g, rng);
  out.weekday = static_cast<int>(std::floor((start - kEpochStart) / kSecondsPerDay)) % 7;
  out.agent_id = static_cast<int>(rng.uniform_int(0, g.agents - 1));
  return out;
}

// Zero-mean, unit-variance smooth field (moving average of white noise).
std::vector<double> smooth_field(std::size_t n, Rng& rng) {
  const std::size_t half = std::max<std::size_t>(1, n / 16);
  std::vector<double> white(n + 2 * half);
  for (auto& v : white) v = rng.normal();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j <= 2 * half; ++j) s += white[i + j];
    out[i] = s;
  }
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / double(n);
  double var = 0;
  for (double v : out) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / double(n));
  for (auto& v : out) v = sd > 0 ? (v - mean) / sd : 0.0;
  return out;
}

}  // namespace

std::string_view style_name(TrajectoryStyle style) {
  return style == TrajectoryStyle::kTaxiSmooth ? "taxi_smooth" : "courier_jittery";
}

TrajectoryStyle parse_style(std::string_view name) {
  if (name == "taxi_smooth") return TrajectoryStyle::kTaxiSmooth;
  if (name == "courier_jittery") return TrajectoryStyle::kCourierJittery;
  fail(ErrorCategory::kInvalidArgument, "unknown trajectory style: " + std::string(name));
}

std::vector<RawTrajectory> generate(std::size_t n_traj, std::size_t length, TrajectoryStyle style, Rng& rng,
                                    const GeneratorParams& params) {
  require(length >= 2, ErrorCategory::kInvalidArgument, "trajectories need at least two points");
  std::vector<RawTrajectory> out;
  out.reserve(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) {
    Rng local = rng.derive("trajectory", i);
    out.push_back(style == TrajectoryStyle::kTaxiSmooth ? taxi(length, params, local) : courier(length, params, local));
  }
  return out;
}

LocalXY to_local_metres(const Point& p, double ref_lon, double ref_lat) {
  const double cos_lat = std::cos(ref_lat * std::numbers::pi / 180.0);
  return {(p.lon - ref_lon) * kMetresPerDegree * cos_lat, (p.lat - ref_lat) * kMetresPerDegree};
}

std::vector<double> turn_angles(const TrajectorySeq& degrees, double ref_lat) {
  std::vector<double> out;
  if (degrees.size() < 3) return out;
  const double ref_lon = degrees.front().lon;
  for (std::size_t i = 1; i + 1 < degrees.size(); ++i) {
    const auto a = to_local_metres(degrees[i - 1], ref_lon, ref_lat);
    const auto b = to_local_metres(degrees[i], ref_lon, ref_lat);
    const auto c = to_local_metres(degrees[i + 1], ref_lon, ref_lat);
    const double h1 = std::atan2(b.y - a.y, b.x - a.x);
    const double h2 = std::atan2(c.y - b.y, c.x - b.x);
    double d = h2 - h1;
    while (d > std::numbers::pi) d -= 2 * std::numbers::pi;
    while (d < -std::numbers::pi) d += 2 * std::numbers::pi;
    out.push_back(std::abs(d));
  }
  return out;
}

RecoveryTask sparsify(const DenseTrajectory& dense, double erase_ratio, double irregularity, Rng& rng) {
  require(erase_ratio > 0 && erase_ratio < 1, ErrorCategory::kInvalidArgument, "erase ratio must lie in (0, 1)");
  require(irregularity >= 0, ErrorCategory::kInvalidArgument, "irregularity must be non-negative");
  validate_trajectory(dense.points, dense.times);
  const std::size_t n = dense.points.size();
  const std::size_t n_erase = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(erase_ratio * double(n))));
  if (n_erase + 2 > n) {
    fail(ErrorCategory::kInvalidArgument, "sparsification would leave fewer than two observed points");
  }

  // The first and last points always stay observed.
  const std::size_t m = n - 2;
  const auto field = smooth_field(m, rng);
  std::vector<double> cumulative(m);
  double total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    total += std::exp(irregularity * field[i]);
    cumulative[i] = total;
  }
  const double phase = rng.uniform();
  std::vector<std::uint8_t> taken(m, 0);
  for (std::size_t k = 0; k < n_erase; ++k) {
    const double target = (double(k) + phase) / double(n_erase) * total;
    std::size_t idx = static_cast<std::size_t>(std::lower_bound(cumulative.begin(), cumulative.end(), target) -
                                               cumulative.begin());
    idx = std::min(idx, m - 1);
    // Nearest free slot, searching outward.
    for (std::size_t d = 0; d < m; ++d) {
      if (idx + d < m && !taken[idx + d]) {
        idx += d;
        break;
      }
      if (d <= idx && !taken[idx - d]) {
        idx -= d;
        break;
      }
    }
    taken[idx] = 1;
  }
  std::vector<std::uint8_t> erased(n, 0);
  std::copy(taken.begin(), taken.end(), erased.begin() + 1);

  std::vector<double> s, q;
  TrajectorySeq sp, qp;
  for (std::size_t i = 0; i < n; ++i) {
    if (erased[i]) {
      q.push_back(dense.times[i]);
      qp.push_back(dense.points[i]);
    } else {
      s.push_back(dense.times[i]);
      sp.push_back(dense.points[i]);
    }
  }
  RecoveryTask task;
  task.observed_times = TimestampSeq(std::move(s));
  task.observed_points = std::move(sp);
  task.query_times = TimestampSeq(std::move(q));
  task.truth = std::move(qp);
  task.contexts = dense.contexts;
  return task;
}

}  // namespace trace
