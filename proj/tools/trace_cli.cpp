// trace: command-line front end for data generation, training, recovery,
// evaluation and benchmark sweeps.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "trace/checkpoint.hpp"
#include "trace/dataset_io.hpp"
#include "trace/kernels.hpp"
#include "trace/metrics.hpp"
#include "trace/sampling.hpp"
#include "trace/synthdata.hpp"
#include "trace/training.hpp"

namespace fs = std::filesystem;
using namespace trace;
using ojson = nlohmann::ordered_json;

namespace {

struct Common {
  unsigned workers = 1;
  std::string data_dir;
  bool timing = true;
  std::string command;
};

std::string join_command(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    std::string a = argv[i];
    if (i == 0) a = fs::path(a).filename().string();
    if (a.find_first_of(" \t\"'") != std::string::npos) a = "'" + a + "'";
    out += (i ? " " : "") + a;
  }
  return out;
}

fs::path resolve(const Common& c, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !c.data_dir.empty()) return fs::path(c.data_dir) / path;
  return path;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double clock_or_zero(const Common& c, double seconds) { return c.timing ? seconds : 0.0; }

// CSV with provenance comment lines.
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const Common& c, std::uint64_t seed, const std::vector<std::string>& columns,
            bool append = false) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const bool fresh = !append || !fs::exists(path);
    out_.open(path, fresh ? std::ios::trunc : std::ios::app);
    require(out_.good(), ErrorCategory::kIo, "cannot write " + path.string());
    if (fresh) {
      out_ << "# command: " << c.command << "\n# seed: " << seed << "\n";
      row(columns);
    }
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
    require(out_.good(), ErrorCategory::kIo, "CSV write failed");
  }

 private:
  std::ofstream out_;
};

ojson provenance(const Common& c, std::uint64_t seed) {
  return ojson{{"command", c.command}, {"seed", seed}};
}

CoordStats coords_for(const fs::path& data, const std::vector<RawTrajectory>& records) {
  const auto side = norm_sidecar_path(data);
  if (fs::exists(side)) return read_coord_stats(side);
  return fit_coord_stats(records);
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  std::size_t n = 100;
  std::size_t length = 512;
  std::string style = "taxi_smooth";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen_data(const Common& c, const GenArgs& a) {
  const auto style = parse_style(a.style);
  Rng rng(a.seed);
  GeneratorParams gp;
  const auto data = generate(a.n, a.length, style, rng, gp);
  const auto out = resolve(c, a.out);
  write_dataset(out, data);
  ojson m = provenance(c, a.seed);
  m["n"] = a.n;
  m["length"] = a.length;
  m["style"] = a.style;
  m["generator"] = {{"center_lon", gp.center_lon},
                    {"center_lat", gp.center_lat},
                    {"half_box_deg", gp.half_box_deg},
                    {"agents", gp.agents},
                    {"taxi_interval_s", gp.taxi_interval_s},
                    {"taxi_speed_mps", {gp.taxi_min_speed, gp.taxi_max_speed}},
                    {"taxi_max_turn_rad", gp.taxi_max_turn},
                    {"taxi_control_points", gp.taxi_control_points},
                    {"courier_median_interval_s", gp.courier_median_interval_s},
                    {"courier_interval_sigma", gp.courier_interval_sigma},
                    {"courier_speed_mps", {gp.courier_min_speed, gp.courier_max_speed}},
                    {"courier_jitter_m", gp.courier_jitter_m},
                    {"courier_dwell_probability", gp.courier_dwell_probability}};
  if (!data.empty()) {
    write_coord_stats(norm_sidecar_path(out), fit_coord_stats(data));
    m["norm_stats"] = norm_sidecar_path(out).filename().string();
  }
  write_json(manifest_path(out), m);
  return 0;
}

// ---------------------------------------------------------------- sparsify

struct SparsifyArgs {
  std::string data;
  double erase_ratio = 0.5;
  double irregularity = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_sparsify(const Common& c, const SparsifyArgs& a) {
  const auto in = resolve(c, a.data);
  auto records = read_dataset(in);
  const auto coords = coords_for(in, records);
  const Rng root(a.seed);
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    require(r.observed.empty(), ErrorCategory::kInvalidArgument, "record " + std::to_string(i) + " is already sparse");
    const auto dense = to_dense(r, coords);
    Rng rng = root.derive("sparsify", i);
    const auto task = sparsify(dense, a.erase_ratio, a.irregularity, rng);
    const std::set<double> kept(task.observed_times.values().begin(), task.observed_times.values().end());
    r.observed.resize(r.points.size());
    for (std::size_t k = 0; k < r.points.size(); ++k) r.observed[k] = kept.contains(dense.times[k]) ? 1 : 0;
  }
  const auto out = resolve(c, a.out);
  write_dataset(out, records);
  write_coord_stats(norm_sidecar_path(out), coords);
  ojson m = provenance(c, a.seed);
  m["source"] = in.string();
  m["erase_ratio"] = a.erase_ratio;
  m["irregularity"] = a.irregularity;
  m["records"] = records.size();
  write_json(manifest_path(out), m);
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string scheme = "uniform_t";
  std::string loss_scope = "query_only";
  int segment_steps = 2;
  int stride = 0;
  int batch_size = 8;
  long iterations = 1000;
  double lr = 2e-4;
  double clip = 1.0;
  std::uint64_t seed = 0;
  int steps = kDefaultSteps;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;
  int blocks = 4;
  int base_channels = 32;
  std::vector<int> multipliers{1, 2, 4, 8};
  int kernel = 5;
  int step_embed = 64;
  std::string contexts = "auto";
  bool no_spdm = false;
  bool lerp_residual = false;
  double erase_ratio = 0.5;
  double irregularity = 0.0;
  long checkpoint_every = 0;
  std::string resume;
};

std::vector<ContextSpec> infer_contexts(const std::string& mode, const std::vector<RawTrajectory>& data) {
  if (mode == "none") return {};
  require(mode == "auto", ErrorCategory::kInvalidArgument, "--contexts must be auto or none");
  int max_agent = -1, max_day = -1;
  bool all_agent = true, all_day = true;
  for (const auto& r : data) {
    all_agent = all_agent && r.agent_id >= 0;
    all_day = all_day && r.weekday >= 0;
    max_agent = std::max(max_agent, r.agent_id);
    max_day = std::max(max_day, r.weekday);
  }
  std::vector<ContextSpec> out;
  // The extra row stands in for agents never seen in training.
  if (all_agent && max_agent >= 0) out.push_back({ContextKind::kAgentId, 8, max_agent + 2, 1});
  if (all_day && max_day >= 0) out.push_back({ContextKind::kWeekday, 4, 7, 1});
  return out;
}

// Categories beyond a table map to its last row.
std::vector<RecoveryTask> fit_categories(std::vector<RecoveryTask> tasks, const ArchConfig& arch) {
  for (auto& t : tasks) {
    for (auto& ctx : t.contexts) {
      if (!is_categorical(ctx.kind) || ctx.payload.empty()) continue;
      for (const auto& spec : arch.contexts) {
        if (spec.kind == ctx.kind && spec.vocab > 0) ctx.payload[0] = std::min(ctx.payload[0], double(spec.vocab - 1));
      }
    }
  }
  return tasks;
}

// 0 steps: the full chain for DDPM, 11 for DDIM.
int resolve_steps(int steps, SamplerMode mode, int T) {
  if (steps <= 0) steps = mode == SamplerMode::kDdpm ? T : 11;
  return std::min(steps, T);
}

int cmd_train(const Common& c, const TrainArgs& a) {
  const auto in = resolve(c, a.data);
  const auto records = read_dataset(in);
  require(!records.empty(), ErrorCategory::kInvalidArgument, "training dataset is empty");
  const auto coords = coords_for(in, records);
  std::vector<DenseTrajectory> dense;
  for (const auto& r : records) {
    require(r.observed.empty(), ErrorCategory::kInvalidArgument, "training needs dense records");
    dense.push_back(to_dense(r, coords));
  }

  TrainConfig tc;
  tc.segment_steps = a.segment_steps;
  tc.stride = a.stride;
  tc.batch_size = a.batch_size;
  tc.scheme = parse_scheme(a.scheme);
  tc.loss_scope = parse_loss_scope(a.loss_scope);
  tc.adam.learning_rate = a.lr;
  tc.adam.clip_norm = a.clip;
  tc.iterations = a.iterations;
  tc.seed = a.seed;
  tc.use_state = !a.no_spdm;
  tc.erase_ratio = a.erase_ratio;
  tc.irregularity = a.irregularity;

  Checkpoint ckpt;
  if (!a.resume.empty()) {
    ckpt = load_checkpoint(resolve(c, a.resume));
    require(ckpt.use_state == tc.use_state, ErrorCategory::kInvalidArgument,
            "--no-spdm differs from the resumed checkpoint");
    // Fresh slot draws after a resume, keyed by the step reached.
    tc.seed = Rng(a.seed).derive("resume", static_cast<std::uint64_t>(ckpt.training_step)).seed();
  } else {
    ckpt.arch.blocks = a.blocks;
    ckpt.arch.base_channels = a.base_channels;
    ckpt.arch.channel_multipliers = a.multipliers;
    ckpt.arch.kernel_size = a.kernel;
    ckpt.arch.step_embed_dim = a.step_embed;
    ckpt.arch.contexts = infer_contexts(a.contexts, records);
    ckpt.arch.length = static_cast<int>(records.front().points.size());
    ckpt.arch.lerp_residual = a.lerp_residual;
    ckpt.arch.validate();
    ckpt.schedule = make_schedule(a.steps, a.beta_start, a.beta_end);
    Rng init = Rng(a.seed).derive("init_params");
    ckpt.params = init_params(ckpt.arch, init);
    ckpt.use_state = tc.use_state;
  }
  ckpt.coords = coords;

  std::cerr << "parameters: " << ckpt.params.scalar_count() << " (" << ckpt.params.count() << " tensors), kernels "
            << kernels::isa_name(kernels::active_isa()) << "\n";
  Trainer trainer(ckpt.arch, tc, ckpt.schedule, std::move(ckpt.params),
                  sparsifying_source(dense, tc.erase_ratio, tc.irregularity));
  if (ckpt.adam) trainer.adam() = *ckpt.adam;
  trainer.set_iteration(ckpt.training_step);

  const fs::path out = resolve(c, a.out);
  fs::create_directories(out);
  CsvWriter log(out / "loss.csv", c, a.seed, {"iteration", "mean_loss", "mean_t", "wall_seconds"}, !a.resume.empty());

  auto snapshot = [&](const fs::path& path) {
    Checkpoint s;
    s.arch = ckpt.arch;
    s.schedule = ckpt.schedule;
    s.params = trainer.params();
    s.use_state = tc.use_state;
    s.training_step = trainer.iteration();
    s.adam = trainer.adam();
    s.coords = coords;
    s.extra = provenance(c, a.seed);
    s.extra["train"] = {{"scheme", a.scheme},          {"segment_steps", a.segment_steps},
                        {"stride", tc.effective_stride()}, {"batch_size", a.batch_size},
                        {"learning_rate", a.lr},       {"clip_norm", a.clip},
                        {"loss_scope", a.loss_scope},  {"erase_ratio", a.erase_ratio},
                        {"irregularity", a.irregularity}};
    save_checkpoint(path, s);
  };

  const double wall0 = trainer.elapsed_seconds();
  trainer.run(a.iterations, [&](const IterationStats& s) {
    log.row({std::to_string(s.iteration), num(s.mean_loss), num(s.mean_t), num(clock_or_zero(c, s.wall_seconds - wall0))});
    if (a.checkpoint_every > 0 && s.iteration % a.checkpoint_every == 0) {
      snapshot(out / ("ckpt_" + std::to_string(s.iteration) + ".bin"));
    }
    return true;
  });
  snapshot(out / "final.bin");
  return 0;
}

// ---------------------------------------------------------------- recover

struct RecoverArgs {
  std::string data;
  std::string ckpt;
  std::string mode = "ddim";
  std::string method = "trace";
  int steps = 0;
  bool no_state = false;
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;
  std::string out;
};

struct LoadedTasks {
  std::vector<RawTrajectory> records;
  std::vector<RecoveryTask> tasks;
  std::vector<NormStats> stats;
};

LoadedTasks load_sparse(const fs::path& path, const CoordStats& coords) {
  LoadedTasks lt;
  lt.records = read_dataset(path);
  for (std::size_t i = 0; i < lt.records.size(); ++i) {
    const auto& r = lt.records[i];
    require(!r.observed.empty(), ErrorCategory::kInvalidArgument,
            "record " + std::to_string(i) + " has no observed flags; run sparsify first");
    NormStats ns;
    lt.tasks.push_back(to_task(r, coords, r.observed, false, &ns));
    lt.stats.push_back(ns);
  }
  return lt;
}

RecoveredRecord to_record(const RawTrajectory& r, const Recovery& rec, const NormStats& ns) {
  RecoveredRecord out;
  out.times = r.times;
  out.agent_id = r.agent_id;
  out.weekday = r.weekday;
  out.points.resize(r.points.size());
  out.recovered.resize(r.points.size());
  for (std::size_t k = 0; k < r.points.size(); ++k) {
    out.recovered[k] = r.observed[k] ? 0 : 1;
    // Observed coordinates are copied from the input, never round-tripped.
    out.points[k] = r.observed[k] ? r.points[k] : denormalize_point(rec.dense.points[k], ns.coords);
  }
  return out;
}

int cmd_recover(const Common& c, const RecoverArgs& a) {
  const auto in = resolve(c, a.data);
  std::optional<Checkpoint> ckpt;
  if (a.method == "trace") {
    require(!a.ckpt.empty(), ErrorCategory::kInvalidArgument, "--ckpt is required for --method trace");
    ckpt = load_checkpoint(resolve(c, a.ckpt));
  } else {
    require(a.method == "lerp", ErrorCategory::kInvalidArgument, "--method must be trace or lerp");
  }
  CoordStats coords;
  if (ckpt && ckpt->coords) {
    coords = *ckpt->coords;
  } else {
    coords = coords_for(in, read_dataset(in));
  }
  const auto lt = load_sparse(in, coords);

  BatchRecovery br;
  RecoverOptions opts;
  if (ckpt) {
    opts.mode = parse_sampler(a.mode);
    opts.plan = make_step_plan(ckpt->schedule.steps, resolve_steps(a.steps, opts.mode, ckpt->schedule.steps));
    opts.use_state = ckpt->use_state && !a.no_state;
    br = batch_recover(fit_categories(lt.tasks, ckpt->arch), ckpt->params, ckpt->arch, ckpt->schedule, opts, a.seed, a.batch_size, c.workers);
  } else {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& t : lt.tasks) br.results.push_back(lerp_recover(t));
    br.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    br.timing.push_back({0, lt.tasks.size(), br.total_seconds});
  }

  std::vector<RecoveredRecord> out_records;
  long calls = 0;
  for (std::size_t i = 0; i < lt.tasks.size(); ++i) {
    out_records.push_back(to_record(lt.records[i], br.results[i], lt.stats[i]));
    calls += br.results[i].network_calls;
  }
  const auto out = resolve(c, a.out);
  write_recoveries(out, out_records);

  const int n_steps = ckpt ? static_cast<int>(opts.plan.size()) - 1 : 0;
  CsvWriter timing(out.string() + ".timing.csv", c, a.seed,
                   {"batch", "tasks", "wall_seconds", "method", "mode", "n_steps", "use_state"});
  for (const auto& t : br.timing) {
    timing.row({std::to_string(t.batch_index), std::to_string(t.tasks), num(clock_or_zero(c, t.wall_seconds)),
                a.method, a.mode, std::to_string(n_steps), opts.use_state && ckpt ? "1" : "0"});
  }
  timing.row({"total", std::to_string(lt.tasks.size()), num(clock_or_zero(c, br.total_seconds)), a.method, a.mode,
              std::to_string(n_steps), opts.use_state && ckpt ? "1" : "0"});

  ojson m = provenance(c, a.seed);
  m["method"] = a.method;
  m["mode"] = a.mode;
  m["n_steps"] = n_steps;
  m["use_state"] = ckpt ? opts.use_state : false;
  m["network_calls"] = calls;
  m["wall_seconds"] = clock_or_zero(c, br.total_seconds);
  m["records"] = lt.tasks.size();
  write_json(manifest_path(out), m);
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string pred;
  std::string truth;
  std::string norm;
  std::string ndtw_norm = "path_length";
  std::string out;
};

struct TaskMetrics {
  std::size_t n_query = 0;
  double mse = 0, mae = 0, ndtw = 0, spatial_std = 0, temporal_std = 0;
};

// Errors over the query points plus the irregularity of the observed input,
// all in normalized units.
TaskMetrics score(const std::vector<double>& times, const std::vector<std::uint8_t>& is_query,
                  const TrajectorySeq& pred, const TrajectorySeq& truth, const CoordStats& coords, NdtwNorm norm) {
  TrajectorySeq raw_obs;
  std::vector<double> obs_times;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!is_query[k]) {
      raw_obs.push_back(truth[k]);
      obs_times.push_back(times[k]);
    }
  }
  const auto full = normalize(pred, times, coords);
  const auto ref = normalize(truth, times, coords);
  TrajectorySeq p, q, o;
  std::vector<double> ot;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (is_query[k]) {
      p.push_back(full.points[k]);
      q.push_back(ref.points[k]);
    } else {
      o.push_back(ref.points[k]);
      ot.push_back(ref.times[k]);
    }
  }
  TaskMetrics m;
  m.n_query = p.size();
  if (!p.empty()) {
    m.mse = mse(p, q);
    m.mae = mae(p, q);
    m.ndtw = ndtw(p, q, norm);
  }
  if (o.size() >= 2) {
    const auto irr = irregularity(o, TimestampSeq(ot));
    m.spatial_std = irr.spatial_std;
    m.temporal_std = irr.temporal_std;
  }
  return m;
}

int cmd_eval(const Common& c, const EvalArgs& a) {
  const auto pred_path = resolve(c, a.pred);
  const auto truth_path = resolve(c, a.truth);
  const auto pred = read_recoveries(pred_path);
  const auto truth = read_dataset(truth_path);
  require(pred.size() == truth.size(), ErrorCategory::kShapeMismatch,
          "prediction and truth files hold different record counts");
  const CoordStats coords = a.norm.empty() ? coords_for(truth_path, truth) : read_coord_stats(resolve(c, a.norm));
  const auto norm = parse_ndtw_norm(a.ndtw_norm);

  std::string n_steps, use_state, wall;
  if (fs::exists(manifest_path(pred_path))) {
    const auto m = read_json(manifest_path(pred_path));
    n_steps = std::to_string(m.value("n_steps", 0));
    use_state = m.value("use_state", false) ? "1" : "0";
    wall = num(m.value("wall_seconds", 0.0));
  }

  CsvWriter csv(resolve(c, a.out), c, 0,
                {"task", "n_query", "mse", "mae", "ndtw", "spatial_std", "temporal_std", "n_steps", "use_state",
                 "wall_seconds", "ndtw_norm"});
  TaskMetrics sum;
  std::size_t scored = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require(pred[i].times == truth[i].times, ErrorCategory::kShapeMismatch,
            "record " + std::to_string(i) + ": timestamps differ between prediction and truth");
    const auto m = score(pred[i].times, pred[i].recovered, pred[i].points, truth[i].points, coords, norm);
    csv.row({std::to_string(i), std::to_string(m.n_query), num(m.mse), num(m.mae), num(m.ndtw), num(m.spatial_std),
             num(m.temporal_std), n_steps, use_state, wall, std::string(ndtw_norm_name(norm))});
    if (m.n_query > 0) {
      sum.mse += m.mse;
      sum.mae += m.mae;
      sum.ndtw += m.ndtw;
      ++scored;
    }
    sum.n_query += m.n_query;
    sum.spatial_std += m.spatial_std;
    sum.temporal_std += m.temporal_std;
  }
  const double nq = std::max<std::size_t>(scored, 1), nt = std::max<std::size_t>(pred.size(), 1);
  csv.row({"mean", std::to_string(sum.n_query), num(sum.mse / nq), num(sum.mae / nq), num(sum.ndtw / nq),
           num(sum.spatial_std / nt), num(sum.temporal_std / nt), n_steps, use_state, wall,
           std::string(ndtw_norm_name(norm))});
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string sweep = "length";
  std::string ckpt;
  std::string style = "taxi_smooth";
  std::string mode = "ddim";
  std::size_t n = 50;
  std::size_t length = 128;
  int steps = 0;
  int bins = 4;
  double erase_ratio = 0.5;
  std::uint64_t seed = 0;
  std::string out;
};

struct Method {
  std::string name;
  bool model = false;
  bool use_state = false;
  int n_steps = 0;
};

struct CellResult {
  std::vector<TaskMetrics> per_task;
  double seconds = 0.0;
};

CellResult run_cell(const Common& c, const std::vector<RecoveryTask>& tasks, const Method& m,
                    const std::optional<Checkpoint>& ckpt, SamplerMode mode, std::uint64_t seed) {
  CellResult out;
  std::vector<Recovery> recs;
  if (m.model) {
    RecoverOptions o;
    o.mode = mode;
    o.plan = make_step_plan(ckpt->schedule.steps, m.n_steps);
    o.use_state = m.use_state;
    auto br = batch_recover(fit_categories(tasks, ckpt->arch), ckpt->params, ckpt->arch, ckpt->schedule, o, seed, 32,
                            c.workers);
    recs = std::move(br.results);
    out.seconds = br.total_seconds;
  } else {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& t : tasks) recs.push_back(lerp_recover(t));
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    TaskMetrics tm;
    tm.n_query = tasks[i].query_times.size();
    tm.mse = mse(recs[i].query_points, *tasks[i].truth);
    tm.mae = mae(recs[i].query_points, *tasks[i].truth);
    tm.ndtw = ndtw(recs[i].query_points, *tasks[i].truth);
    const auto irr = irregularity(tasks[i].observed_points, tasks[i].observed_times);
    tm.spatial_std = irr.spatial_std;
    tm.temporal_std = irr.temporal_std;
    out.per_task.push_back(tm);
  }
  return out;
}

std::vector<RecoveryTask> make_tasks(std::size_t n, std::size_t length, TrajectoryStyle style, double erase,
                                     double knob, const CoordStats* coords, std::uint64_t seed,
                                     std::string_view purpose) {
  Rng gen = Rng(seed).derive(purpose, length);
  const auto raw = generate(n, length, style, gen);
  const CoordStats cs = coords ? *coords : fit_coord_stats(raw);
  std::vector<RecoveryTask> tasks;
  Rng sp = Rng(seed).derive("bench_sparsify", static_cast<std::uint64_t>(knob * 1000 + erase * 100));
  for (const auto& r : raw) {
    auto d = to_dense(r, cs);
    tasks.push_back(sparsify(d, erase, knob, sp));
  }
  return tasks;
}

int cmd_bench(const Common& c, const BenchArgs& a) {
  std::optional<Checkpoint> ckpt;
  if (!a.ckpt.empty()) ckpt = load_checkpoint(resolve(c, a.ckpt));
  const auto style = parse_style(a.style);
  const auto mode = parse_sampler(a.mode);
  const CoordStats* coords = ckpt && ckpt->coords ? &*ckpt->coords : nullptr;

  std::vector<Method> methods;
  if (ckpt) {
    const int steps = resolve_steps(a.steps, mode, ckpt->schedule.steps);
    if (a.sweep == "steps") {
      for (int n : {ckpt->schedule.steps, 51, 26, 11}) {
        if (n > ckpt->schedule.steps) continue;
        if (ckpt->use_state) methods.push_back({"trace_state", true, true, n});
        methods.push_back({"trace_no_state", true, false, n});
      }
    } else {
      methods.push_back({ckpt->use_state ? "trace_state" : "trace_no_state", true, ckpt->use_state, steps});
      if (ckpt->use_state) methods.push_back({"trace_no_state", true, false, steps});
    }
  }
  methods.push_back({"lerp", false, false, 0});

  CsvWriter csv(resolve(c, a.out), c, a.seed,
                {"sweep", "value", "method", "n_steps", "n_tasks", "mse", "mae", "ndtw", "spatial_std", "temporal_std",
                 "wall_seconds"});
  auto emit = [&](const std::string& value, const Method& m, const std::vector<TaskMetrics>& rows, double secs) {
    TaskMetrics s;
    for (const auto& r : rows) {
      s.mse += r.mse;
      s.mae += r.mae;
      s.ndtw += r.ndtw;
      s.spatial_std += r.spatial_std;
      s.temporal_std += r.temporal_std;
    }
    const double n = std::max<std::size_t>(rows.size(), 1);
    csv.row({a.sweep, value, m.name, std::to_string(m.n_steps), std::to_string(rows.size()), num(s.mse / n),
             num(s.mae / n), num(s.ndtw / n), num(s.spatial_std / n), num(s.temporal_std / n),
             num(clock_or_zero(c, secs))});
  };

  if (a.sweep == "length" || a.sweep == "sparsity" || a.sweep == "steps") {
    std::vector<std::pair<std::string, std::vector<RecoveryTask>>> cells;
    if (a.sweep == "length") {
      for (std::size_t L : {64, 128, 256, 512}) {
        cells.emplace_back(std::to_string(L), make_tasks(a.n, L, style, a.erase_ratio, 0.0, coords, a.seed, "bench"));
      }
    } else if (a.sweep == "sparsity") {
      for (double r : {0.3, 0.5, 0.7, 0.9}) {
        cells.emplace_back(num(r), make_tasks(a.n, a.length, style, r, 0.0, coords, a.seed, "bench"));
      }
    } else {
      cells.emplace_back(std::to_string(a.length),
                         make_tasks(a.n, a.length, style, a.erase_ratio, 0.0, coords, a.seed, "bench"));
    }
    for (const auto& [value, tasks] : cells) {
      for (const auto& m : methods) {
        auto r = run_cell(c, tasks, m, ckpt, mode, a.seed);
        emit(value, m, r.per_task, r.seconds);
      }
    }
  } else if (a.sweep == "irregularity") {
    std::vector<RecoveryTask> pool;
    for (double knob : {0.0, 1.0, 2.0, 4.0}) {
      auto t = make_tasks(a.n, a.length, style, a.erase_ratio, knob, coords, a.seed, "bench");
      pool.insert(pool.end(), t.begin(), t.end());
    }
    std::vector<double> tstd;
    for (const auto& t : pool) tstd.push_back(irregularity(t.observed_points, t.observed_times).temporal_std);
    const auto bin = quantile_bins(tstd, a.bins);
    for (const auto& m : methods) {
      auto r = run_cell(c, pool, m, ckpt, mode, a.seed);
      for (int b = 0; b < a.bins; ++b) {
        std::vector<TaskMetrics> rows;
        for (std::size_t i = 0; i < pool.size(); ++i) {
          if (bin[i] == b) rows.push_back(r.per_task[i]);
        }
        emit(std::to_string(b), m, rows, r.seconds * double(rows.size()) / double(pool.size()));
      }
    }
  } else {
    fail(ErrorCategory::kInvalidArgument, "--sweep must be length, sparsity, irregularity or steps");
  }
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Sparse-to-dense GPS trajectory recovery with a state-propagating diffusion model"};
  app.require_subcommand(1);
  Common common;
  common.command = join_command(argc, argv);
  common.workers = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--workers", common.workers, "Cap on parallel workers")->check(CLI::PositiveNumber);
  app.add_option("--data-dir", common.data_dir, "Base directory for relative paths")->envname("TRACE_DATA_DIR");
  bool no_timing = false;
  app.add_flag("--no-timing", no_timing, "Write 0 into every wall-clock field");
  std::string isa;
  app.add_option("--isa", isa, "Kernel set: scalar or avx2 (default: best available)");

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic dense dataset");
  g->add_option("--n", gen.n, "Number of trajectories");
  g->add_option("--length", gen.length, "Points per trajectory");
  g->add_option("--style", gen.style, "taxi_smooth or courier_jittery");
  g->add_option("--seed", gen.seed);
  g->add_option("--out", gen.out, "Output JSONL")->required();

  SparsifyArgs sp;
  auto* s = app.add_subcommand("sparsify", "Erase points of a dense dataset, marking them as queries");
  s->add_option("--data", sp.data)->required();
  s->add_option("--erase-ratio", sp.erase_ratio);
  s->add_option("--irregularity", sp.irregularity);
  s->add_option("--seed", sp.seed);
  s->add_option("--out", sp.out)->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the denoiser");
  // Settings file with a [train] section mirroring the flags; accepted
  // before or after the subcommand name.
  app.set_config("--config", "", "TOML/INI settings file");
  t->fallthrough();
  t->add_option("--data", tr.data)->required();
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--batch-scheme", tr.scheme)->check(CLI::IsMember({"shared_t", "offset_t", "uniform_t"}));
  t->add_option("--segment-steps", tr.segment_steps);
  t->add_option("--stride", tr.stride, "Steps advanced per iteration (0: segment-steps - 1)");
  t->add_option("--batch-size", tr.batch_size);
  t->add_option("--iterations", tr.iterations);
  t->add_option("--lr", tr.lr);
  t->add_option("--clip", tr.clip);
  t->add_option("--seed", tr.seed);
  t->add_option("--steps", tr.steps, "Diffusion steps T");
  t->add_option("--beta-start", tr.beta_start);
  t->add_option("--beta-end", tr.beta_end);
  t->add_option("--blocks", tr.blocks);
  t->add_option("--base-channels", tr.base_channels);
  t->add_option("--multipliers", tr.multipliers)->delimiter(',');
  t->add_option("--kernel", tr.kernel);
  t->add_option("--step-embed", tr.step_embed);
  t->add_option("--contexts", tr.contexts, "auto or none");
  t->add_option("--loss-scope", tr.loss_scope)->check(CLI::IsMember({"query_only", "all_positions"}));
  t->add_flag("--no-spdm", tr.no_spdm, "Train without state propagation");
  t->add_flag("--lerp-residual", tr.lerp_residual, "Predict noise relative to the interpolation prior");
  t->add_option("--erase-ratio", tr.erase_ratio);
  t->add_option("--irregularity", tr.irregularity);
  t->add_option("--checkpoint-every", tr.checkpoint_every);
  t->add_option("--resume", tr.resume, "Checkpoint to continue from");

  RecoverArgs rc;
  auto* r = app.add_subcommand("recover", "Recover query points of a sparse dataset");
  r->add_option("--data", rc.data)->required();
  r->add_option("--ckpt", rc.ckpt);
  r->add_option("--mode", rc.mode)->check(CLI::IsMember({"ddpm", "ddim"}));
  r->add_option("--method", rc.method)->check(CLI::IsMember({"trace", "lerp"}));
  r->add_option("--steps", rc.steps, "Denoiser evaluations (default: all for ddpm, 11 for ddim)");
  r->add_flag("--no-state", rc.no_state);
  r->add_option("--seed", rc.seed);
  r->add_option("--batch-size", rc.batch_size);
  r->add_option("--out", rc.out)->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score recoveries against ground truth");
  e->add_option("--pred", ev.pred)->required();
  e->add_option("--truth", ev.truth)->required();
  e->add_option("--norm", ev.norm, "Coordinate stats JSON (default: truth sidecar)");
  e->add_option("--ndtw-norm", ev.ndtw_norm)->check(CLI::IsMember({"path_length", "max_length"}));
  e->add_option("--out", ev.out)->required();

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Length, sparsity, irregularity or step-count sweeps");
  b->add_option("--sweep", be.sweep)->check(CLI::IsMember({"length", "sparsity", "irregularity", "steps"}));
  b->add_option("--ckpt", be.ckpt);
  b->add_option("--style", be.style);
  b->add_option("--mode", be.mode)->check(CLI::IsMember({"ddpm", "ddim"}));
  b->add_option("--n", be.n, "Tasks per cell");
  b->add_option("--length", be.length);
  b->add_option("--steps", be.steps);
  b->add_option("--bins", be.bins);
  b->add_option("--erase-ratio", be.erase_ratio);
  b->add_option("--seed", be.seed);
  b->add_option("--out", be.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cerr << "error[" << category_name(ErrorCategory::kInvalidArgument) << "]: " << ex.what() << "\n";
    return static_cast<int>(ErrorCategory::kInvalidArgument);
  }
  common.timing = !no_timing;
  if (!isa.empty()) {
    require(isa == "scalar" || isa == "avx2", ErrorCategory::kInvalidArgument, "unknown kernel set " + isa);
    try {
      kernels::set_isa(isa == "scalar" ? kernels::Isa::kScalar : kernels::Isa::kAvx2);
    } catch (const std::invalid_argument& ex) {
      fail(ErrorCategory::kInvalidArgument, ex.what());
    }
  }

  if (g->parsed()) return cmd_gen_data(common, gen);
  if (s->parsed()) return cmd_sparsify(common, sp);
  if (t->parsed()) return cmd_train(common, tr);
  if (r->parsed()) return cmd_recover(common, rc);
  if (e->parsed()) return cmd_eval(common, ev);
  return cmd_bench(common, be);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.category());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error[" << category_name(ErrorCategory::kIo) << "]: " << e.what() << "\n";
    return static_cast<int>(ErrorCategory::kIo);
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
}
