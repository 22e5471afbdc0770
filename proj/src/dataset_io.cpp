#include "trace/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace trace {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCategory::kIo, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCategory::kIo, "cannot write " + path.string());
  return out;
}

std::vector<double> number_array(const json& j, const char* key, std::size_t line) {
  require(j.contains(key) && j[key].is_array(), ErrorCategory::kFormat,
          "line " + std::to_string(line) + ": missing array field '" + key + "'");
  std::vector<double> out;
  out.reserve(j[key].size());
  for (const auto& v : j[key]) {
    if (v.is_null()) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      require(v.is_number(), ErrorCategory::kFormat, "line " + std::to_string(line) + ": non-numeric entry in " + key);
      out.push_back(v.get<double>());
    }
  }
  return out;
}

ojson coord_value(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

RawTrajectory parse_record(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(ErrorCategory::kFormat, "line " + std::to_string(line_no) + ": " + e.what());
  }
  RawTrajectory t;
  t.times = number_array(j, "times", line_no);
  const auto lon = number_array(j, "lon", line_no);
  const auto lat = number_array(j, "lat", line_no);
  require(lon.size() == t.times.size() && lat.size() == t.times.size(), ErrorCategory::kFormat,
          "line " + std::to_string(line_no) + ": times, lon and lat differ in length");
  for (std::size_t i = 0; i < lon.size(); ++i) t.points.push_back({lon[i], lat[i]});
  if (j.contains("agent_id")) t.agent_id = j["agent_id"].get<int>();
  if (j.contains("weekday")) t.weekday = j["weekday"].get<int>();
  if (j.contains("observed")) {
    for (const auto& v : j["observed"]) t.observed.push_back(v.get<int>() != 0 ? 1 : 0);
    require(t.observed.size() == t.times.size(), ErrorCategory::kFormat,
            "line " + std::to_string(line_no) + ": observed flags differ in length");
  }
  TimestampSeq check(t.times);
  return t;
}

}  // namespace

std::string dataset_line(const RawTrajectory& t) {
  ojson j;
  j["times"] = t.times;
  j["lon"] = ojson::array();
  j["lat"] = ojson::array();
  for (const auto& p : t.points) {
    j["lon"].push_back(coord_value(p.lon));
    j["lat"].push_back(coord_value(p.lat));
  }
  if (t.agent_id >= 0) j["agent_id"] = t.agent_id;
  if (t.weekday >= 0) j["weekday"] = t.weekday;
  if (!t.observed.empty()) j["observed"] = std::vector<int>(t.observed.begin(), t.observed.end());
  return j.dump();
}

RawTrajectory parse_dataset_line(const std::string& line) { return parse_record(line, 1); }

std::vector<RawTrajectory> read_dataset(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<RawTrajectory> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_record(line, n));
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<RawTrajectory>& data) {
  auto out = open_out(path);
  for (const auto& t : data) out << dataset_line(t) << '\n';
  require(out.good(), ErrorCategory::kIo, "write failed: " + path.string());
}

std::filesystem::path norm_sidecar_path(const std::filesystem::path& dataset) {
  return dataset.string() + ".norm.json";
}

ojson coord_stats_json(const CoordStats& s) {
  return ojson{{"mean_lon", s.mean_lon}, {"mean_lat", s.mean_lat}, {"std_lon", s.std_lon}, {"std_lat", s.std_lat}};
}

CoordStats coord_stats_from_json(const json& j) {
  try {
    return {j.at("mean_lon").get<double>(), j.at("mean_lat").get<double>(), j.at("std_lon").get<double>(),
            j.at("std_lat").get<double>()};
  } catch (const json::exception& e) {
    fail(ErrorCategory::kFormat, std::string("normalization stats: ") + e.what());
  }
}

void write_coord_stats(const std::filesystem::path& path, const CoordStats& stats) {
  write_json(path, coord_stats_json(stats));
}

CoordStats read_coord_stats(const std::filesystem::path& path) { return coord_stats_from_json(read_json(path)); }

CoordStats fit_coord_stats(const std::vector<RawTrajectory>& data) {
  std::vector<TrajectorySeq> seqs;
  seqs.reserve(data.size());
  for (const auto& t : data) {
    TrajectorySeq finite;
    for (std::size_t i = 0; i < t.points.size(); ++i) {
      if (t.observed.empty() || t.observed[i]) finite.push_back(t.points[i]);
    }
    seqs.push_back(std::move(finite));
  }
  return fit_coord_stats(std::span<const TrajectorySeq>(seqs));
}

std::vector<Context> record_contexts(const RawTrajectory& t) {
  std::vector<Context> out;
  if (t.agent_id >= 0) out.push_back({ContextKind::kAgentId, {double(t.agent_id)}});
  if (t.weekday >= 0) out.push_back({ContextKind::kWeekday, {double(t.weekday)}});
  return out;
}

DenseTrajectory to_dense(const RawTrajectory& t, const CoordStats& coords, NormStats* stats_out) {
  auto n = normalize(t.points, t.times, coords);
  validate_trajectory(n.points, n.times);
  if (stats_out) *stats_out = n.stats;
  return {std::move(n.times), std::move(n.points), record_contexts(t)};
}

RecoveryTask to_task(const RawTrajectory& t, const CoordStats& coords, const std::vector<std::uint8_t>& observed,
                     bool with_truth, NormStats* stats_out) {
  require(observed.size() == t.points.size(), ErrorCategory::kShapeMismatch, "observation flags differ in length");
  const auto n = normalize(t.points, t.times, coords);
  if (stats_out) *stats_out = n.stats;
  std::vector<double> s, q;
  TrajectorySeq sp, qp;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (observed[i]) {
      s.push_back(n.times[i]);
      sp.push_back(n.points[i]);
    } else {
      q.push_back(n.times[i]);
      qp.push_back(n.points[i]);
    }
  }
  RecoveryTask task;
  task.observed_times = TimestampSeq(std::move(s));
  task.observed_points = std::move(sp);
  task.query_times = TimestampSeq(std::move(q));
  task.contexts = record_contexts(t);
  if (with_truth) task.truth = std::move(qp);
  task.validate();
  return task;
}

std::filesystem::path manifest_path(const std::filesystem::path& output) { return output.string() + ".manifest.json"; }

void write_json(const std::filesystem::path& path, const ojson& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  require(out.good(), ErrorCategory::kIo, "write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCategory::kFormat, path.string() + ": " + e.what());
  }
}

void write_recoveries(const std::filesystem::path& path, const std::vector<RecoveredRecord>& records) {
  auto out = open_out(path);
  for (const auto& r : records) {
    ojson j;
    j["times"] = r.times;
    j["lon"] = ojson::array();
    j["lat"] = ojson::array();
    for (const auto& p : r.points) {
      j["lon"].push_back(coord_value(p.lon));
      j["lat"].push_back(coord_value(p.lat));
    }
    if (r.agent_id >= 0) j["agent_id"] = r.agent_id;
    if (r.weekday >= 0) j["weekday"] = r.weekday;
    j["recovered"] = std::vector<int>(r.recovered.begin(), r.recovered.end());
    j["source"] = ojson::array();
    for (auto f : r.recovered) j["source"].push_back(f ? "predicted" : "observed");
    out << j.dump() << '\n';
  }
  require(out.good(), ErrorCategory::kIo, "write failed: " + path.string());
}

std::vector<RecoveredRecord> read_recoveries(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<RecoveredRecord> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto raw = parse_record(line, n);
    const auto j = json::parse(line);
    RecoveredRecord r;
    r.times = raw.times;
    r.points = raw.points;
    r.agent_id = raw.agent_id;
    r.weekday = raw.weekday;
    require(j.contains("recovered"), ErrorCategory::kFormat, "line " + std::to_string(n) + ": missing 'recovered'");
    for (const auto& v : j["recovered"]) r.recovered.push_back(v.get<int>() != 0 ? 1 : 0);
    require(r.recovered.size() == r.times.size(), ErrorCategory::kFormat,
            "line " + std::to_string(n) + ": recovered flags differ in length");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace trace
