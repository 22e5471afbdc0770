#pragma once

// Noise schedule, forward diffusion (single step and closed-form jump),
// recovery of the dependent multi-step noise, and DDPM/DDIM reverse steps.
// Step indices are 1-based; alpha_bar(0) is defined as 1.

#include <vector>

#include "trace/rng.hpp"
#include "trace/tensor.hpp"

namespace trace {

enum class ScheduleShape { kLinear };

struct NoiseSchedule {
  int steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> beta;       // beta[t - 1]
  std::vector<double> alpha;      // alpha[t - 1]
  std::vector<double> alpha_bar;  // alpha_bar[t - 1]

  double beta_at(int t) const { return beta.at(t - 1); }
  double alpha_at(int t) const { return alpha.at(t - 1); }
  double alpha_bar_at(int t) const { return t == 0 ? 1.0 : alpha_bar.at(t - 1); }
};

inline constexpr int kDefaultSteps = 500;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

NoiseSchedule make_schedule(int steps, double beta_start = kDefaultBetaStart, double beta_end = kDefaultBetaEnd,
                            ScheduleShape shape = ScheduleShape::kLinear);

// sqrt(alpha_t) * x_prev + sqrt(beta_t) * eps
template <class Real>
Tensor<Real> forward_step(const Tensor<Real>& x_prev, int t, const NoiseSchedule& sched, const Tensor<Real>& eps);

// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
template <class Real>
Tensor<Real> forward_jump(const Tensor<Real>& x0, int t, const NoiseSchedule& sched, const Tensor<Real>& eps);

// (xt - sqrt(alpha_bar_t) * x0) / sqrt(1 - alpha_bar_t); t must be >= 1.
template <class Real>
Tensor<Real> derive_multistep_noise(const Tensor<Real>& x0, const Tensor<Real>& xt, int t, const NoiseSchedule& sched);

// Posterior-mean DDPM step with sigma_t = sqrt(beta_t). z must be zero at t = 1.
template <class Real>
Tensor<Real> ddpm_reverse_step(const Tensor<Real>& xt, const Tensor<Real>& eps_hat, int t, const NoiseSchedule& sched,
                               const Tensor<Real>& z);

// Deterministic (eta = 0) DDIM jump from t_from down to t_to.
template <class Real>
Tensor<Real> ddim_reverse_step(const Tensor<Real>& xt, const Tensor<Real>& eps_hat, int t_from, int t_to,
                               const NoiseSchedule& sched);

// Jointly consistent single-step noises, diffusion states and multi-step
// noises for one clean block. Vectors are indexed so that single_step[t - 1]
// and multi_step[t - 1] belong to step t, and states[t] is the state at t.
template <class Real>
struct NoiseLadder {
  std::vector<Tensor<Real>> single_step;
  std::vector<Tensor<Real>> states;
  std::vector<Tensor<Real>> multi_step;

  int steps() const { return static_cast<int>(single_step.size()); }
  const Tensor<Real>& state(int t) const { return states.at(t); }
  const Tensor<Real>& multi_noise(int t) const { return multi_step.at(t - 1); }
};

template <class Real>
NoiseLadder<Real> build_noise_ladder(const Tensor<Real>& x0, const NoiseSchedule& sched, Rng& rng);

template <class Real>
Tensor<Real> standard_normal(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace trace
