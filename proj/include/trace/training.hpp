#pragma once

// Sequential, state-aware training. Every slot of the batch owns one task and
// its noise ladder and walks its step counter from T down to 1, a few steps
// per iteration; the propagated state is carried from one iteration to the
// next and reset when the slot reloads a fresh task.

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "trace/diffusion_math.hpp"
#include "trace/spdm_net.hpp"

namespace trace {

enum class BatchScheme { kSharedT, kOffsetT, kUniformT };
enum class LossScope { kQueryOnly, kAllPositions };

std::string_view scheme_name(BatchScheme s);
BatchScheme parse_scheme(std::string_view name);
std::string_view loss_scope_name(LossScope s);
LossScope parse_loss_scope(std::string_view name);

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

struct TrainConfig {
  int segment_steps = 2;
  int stride = 0;  // steps advanced per iteration; 0 means segment_steps - 1
  int batch_size = 8;
  BatchScheme scheme = BatchScheme::kUniformT;
  LossScope loss_scope = LossScope::kQueryOnly;
  AdamConfig adam;
  long iterations = 1000;
  std::uint64_t seed = 0;
  bool use_state = true;
  double erase_ratio = 0.5;
  double irregularity = 0.0;

  int effective_stride() const { return stride > 0 ? stride : segment_steps - 1; }
  void validate(int steps) const;
};

// Produces a fresh training task (with ground truth) for a slot.
using TaskSource = std::function<RecoveryTask(Rng&)>;

// Sparsifies uniformly chosen trajectories of a normalized dense dataset.
TaskSource sparsifying_source(const std::vector<DenseTrajectory>& data, double erase_ratio, double irregularity);

template <class Real>
struct SampleSlot {
  RecoveryTask task;
  MergedSequence merged;
  std::vector<std::size_t> queries;
  NoiseLadder<Real> ladder;
  int t_current = 0;
  HiddenState<Real> state;
  Rng rng{0};
};

template <class Real>
NoiseLadder<Real> build_ladder(const RecoveryTask& task, const NoiseSchedule& sched, Rng& rng);

// Loads a task into the slot with a fresh ladder, zero state and step t.
template <class Real>
void load_slot(SampleSlot<Real>& slot, RecoveryTask task, int t, const ArchConfig& cfg, const NoiseSchedule& sched);

// Starting steps of a fresh batch: all T (shared), T - k * ceil(T / B)
// wrapped into [1, T] (offset) or independent uniform draws (uniform).
std::vector<int> init_batch(BatchScheme scheme, int batch_size, int steps, Rng& rng);

// Step given to a slot that reloads: T, or a uniform draw under uniform_t.
int reload_step(BatchScheme scheme, int steps, Rng& rng);

struct SegmentVars {
  Var loss;                       // sum of the per-step MSE terms
  std::vector<Var> carried_state; // state for the slot's next iteration
  int steps_run = 0;
};

// Records the segment starting at slot.t_current: min(segment_steps, t)
// denoiser calls linked by MCGRU updates. The incoming state is a constant.
template <class Real>
SegmentVars segment_loss(Tape<Real>& tape, const SampleSlot<Real>& slot, const ModelParams<Real>& params,
                         const ArchConfig& cfg, const TrainConfig& tc, const NoiseSchedule& sched);

// Moves the slot forward by the stride and stores the carried state, or
// reloads it from `source` once its step count is exhausted.
template <class Real>
void advance_slot(SampleSlot<Real>& slot, HiddenState<Real> carried, const TrainConfig& tc, const ArchConfig& cfg,
                  const NoiseSchedule& sched, const TaskSource& source);

struct AdamState {
  std::vector<Tensor<float>> m;
  std::vector<Tensor<float>> v;
  long step = 0;
};

AdamState make_adam_state(const ModelParams<float>& params);

// Clips the global gradient norm, then applies one Adam update. Returns the
// pre-clip gradient norm.
double adam_update(ModelParams<float>& params, AdamState& state, const AdamConfig& cfg);

struct IterationStats {
  long iteration = 0;
  double mean_loss = 0.0;
  double mean_t = 0.0;
  double wall_seconds = 0.0;
  double grad_norm = 0.0;
};

class Trainer {
 public:
  Trainer(ArchConfig cfg, TrainConfig tc, NoiseSchedule sched, ModelParams<float> params, TaskSource source);

  IterationStats step();
  // Runs until `iterations` total iterations have been done or `stop` says so.
  std::vector<IterationStats> run(long iterations, const std::function<bool(const IterationStats&)>& on_step = {});

  const ModelParams<float>& params() const { return params_; }
  ModelParams<float>& params() { return params_; }
  AdamState& adam() { return adam_; }
  const std::vector<SampleSlot<float>>& slots() const { return slots_; }
  long iteration() const { return iteration_; }
  void set_iteration(long it) { iteration_ = it; }
  double elapsed_seconds() const { return elapsed_; }

 private:
  ArchConfig cfg_;
  TrainConfig tc_;
  NoiseSchedule sched_;
  ModelParams<float> params_;
  TaskSource source_;
  AdamState adam_;
  std::vector<SampleSlot<float>> slots_;
  long iteration_ = 0;
  double elapsed_ = 0.0;
};

// Mean per-step noise-prediction error over complete T..1 sequential passes
// of fixed probe tasks, with state carried between steps as at inference.
double probe_loss(const std::vector<RecoveryTask>& tasks, const ModelParams<float>& params, const ArchConfig& cfg,
                  const NoiseSchedule& sched, const TrainConfig& tc, std::uint64_t seed);

}  // namespace trace
