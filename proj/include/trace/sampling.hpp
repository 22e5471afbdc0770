#pragma once

// Inference: the stateful reverse loop (DDPM or step-skipping DDIM), its
// no-state ablation, the linear-interpolation baseline and batched recovery.

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "trace/diffusion_math.hpp"
#include "trace/spdm_net.hpp"

namespace trace {

enum class SamplerMode { kDdpm, kDdim };

std::string_view sampler_name(SamplerMode mode);
SamplerMode parse_sampler(std::string_view name);

// n_steps + 1 indices from T down to 0 at uniform stride, deduplicated.
std::vector<int> make_step_plan(int steps, int n_steps);

// Strictly decreasing, starts at T, ends at 0. DDPM additionally needs
// consecutive indices.
void validate_step_plan(const std::vector<int>& plan, int steps, SamplerMode mode);

// Predicts the noise of the query block x at step t; t_next is the step the
// sampler moves to afterwards.
using NoisePredictor = std::function<Tensor<float>(const Tensor<float>& x, int t, int t_next)>;

// The bare reverse loop over a plan, starting from x = x_T. DDPM draws its
// z from `rng` (none at t = 1).
Tensor<float> reverse_loop(Tensor<float> x, const NoiseSchedule& sched, const std::vector<int>& plan,
                           SamplerMode mode, const NoisePredictor& predict, Rng& rng);

struct RecoverOptions {
  SamplerMode mode = SamplerMode::kDdim;
  std::vector<int> plan;  // empty: the full plan
  bool use_state = true;
};

struct Recovery {
  TrajectorySeq query_points;  // predictions at Q, in query order
  MergedSequence dense;        // S u Q with predictions at mask = 1
  int network_calls = 0;
  int state_updates = 0;
};

// Query block starts from standard normal noise drawn from `rng`.
Recovery recover(const RecoveryTask& task, const ModelParams<float>& params, const ArchConfig& cfg,
                 const NoiseSchedule& sched, const RecoverOptions& opts, Rng& rng);

// Linear-interpolation baseline, in the same result form.
Recovery lerp_recover(const RecoveryTask& task);

struct BatchTiming {
  std::size_t batch_index = 0;
  std::size_t tasks = 0;
  double wall_seconds = 0.0;
};

struct BatchRecovery {
  std::vector<Recovery> results;
  std::vector<BatchTiming> timing;
  double total_seconds = 0.0;
};

// Task i draws its initial noise from Rng(seed).derive("recover", i), so
// results do not depend on batch size or worker count.
BatchRecovery batch_recover(const std::vector<RecoveryTask>& tasks, const ModelParams<float>& params,
                            const ArchConfig& cfg, const NoiseSchedule& sched, const RecoverOptions& opts,
                            std::uint64_t seed, std::size_t batch_size = 32, unsigned workers = 1);

}  // namespace trace
