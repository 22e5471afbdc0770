#pragma once

// File formats: the JSON Lines trajectory dataset, the normalization
// sidecar, provenance manifests and the recovery output.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "trace/synthdata.hpp"
#include "trace/traj_core.hpp"

namespace trace {

// One object per line: times, lon, lat, optional agent_id, weekday and
// observed (0/1 per point).
std::vector<RawTrajectory> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const std::vector<RawTrajectory>& data);

std::string dataset_line(const RawTrajectory& t);
RawTrajectory parse_dataset_line(const std::string& line);

// "<dataset>.norm.json" next to the dataset.
std::filesystem::path norm_sidecar_path(const std::filesystem::path& dataset);
void write_coord_stats(const std::filesystem::path& path, const CoordStats& stats);
CoordStats read_coord_stats(const std::filesystem::path& path);
nlohmann::ordered_json coord_stats_json(const CoordStats& stats);
CoordStats coord_stats_from_json(const nlohmann::json& j);

CoordStats fit_coord_stats(const std::vector<RawTrajectory>& data);

// Contexts carried by a raw record (agent_id, weekday when present).
std::vector<Context> record_contexts(const RawTrajectory& t);

// Normalizes a dense record with dataset-level coordinate stats.
DenseTrajectory to_dense(const RawTrajectory& t, const CoordStats& coords, NormStats* stats_out = nullptr);

// Task of a record: its observed flags decide S and Q; dense records need
// `fallback_observed`. Query ground truth is attached when `with_truth`.
RecoveryTask to_task(const RawTrajectory& t, const CoordStats& coords, const std::vector<std::uint8_t>& observed,
                     bool with_truth, NormStats* stats_out = nullptr);

// "<file>.manifest.json" beside an output file.
std::filesystem::path manifest_path(const std::filesystem::path& output);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);
nlohmann::json read_json(const std::filesystem::path& path);

struct RecoveredRecord {
  std::vector<double> times;  // raw seconds
  TrajectorySeq points;       // raw degrees
  std::vector<std::uint8_t> recovered;
  int agent_id = -1;
  int weekday = -1;
};

// Adds `recovered` (0/1) and `source` (observed|predicted) to the dataset
// fields.
void write_recoveries(const std::filesystem::path& path, const std::vector<RecoveredRecord>& records);
std::vector<RecoveredRecord> read_recoveries(const std::filesystem::path& path);

}  // namespace trace
