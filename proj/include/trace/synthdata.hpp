#pragma once

// Synthetic GPS trajectories and controllable sparsification.

#include <cstdint>
#include <string_view>
#include <vector>

#include "trace/rng.hpp"
#include "trace/traj_core.hpp"

namespace trace {

// Raw trajectory in degrees and seconds, the unit of the JSONL dataset.
struct RawTrajectory {
  std::vector<double> times;
  TrajectorySeq points;
  int agent_id = -1;  // -1: absent
  int weekday = -1;   // -1: absent
  // Per-point observation flags of a sparse record; empty means dense.
  std::vector<std::uint8_t> observed;
};

enum class TrajectoryStyle { kTaxiSmooth, kCourierJittery };

std::string_view style_name(TrajectoryStyle style);
TrajectoryStyle parse_style(std::string_view name);

struct GeneratorParams {
  double center_lon = 116.3975;
  double center_lat = 39.9087;
  double half_box_deg = 0.05;
  int agents = 16;
  // taxi_smooth
  double taxi_interval_s = 10.0;
  double taxi_min_speed = 6.0;  // m/s
  double taxi_max_speed = 14.0;
  double taxi_max_turn = 0.25;  // rad per step
  int taxi_control_points = 8;
  // courier_jittery
  double courier_median_interval_s = 10.0;
  double courier_interval_sigma = 0.8;  // log-normal shape
  double courier_min_speed = 1.5;
  double courier_max_speed = 5.0;
  double courier_jitter_m = 3.0;
  double courier_dwell_probability = 0.35;
};

std::vector<RawTrajectory> generate(std::size_t n_traj, std::size_t length, TrajectoryStyle style, Rng& rng,
                                    const GeneratorParams& params = {});

// Local east/north metres around a reference latitude (equirectangular).
struct LocalXY {
  double x = 0.0;
  double y = 0.0;
};
LocalXY to_local_metres(const Point& p, double ref_lon, double ref_lat);

// Absolute heading change at every interior point, in local metric space.
std::vector<double> turn_angles(const TrajectorySeq& degrees, double ref_lat);

// Removes round(erase_ratio * L) interior points (at least one); the end
// points are always kept. The removed points become the query with ground
// truth attached. irregularity = 0 spreads the
// removals evenly; larger values concentrate them into contiguous bursts.
RecoveryTask sparsify(const DenseTrajectory& dense, double erase_ratio, double irregularity, Rng& rng);

}  // namespace trace
