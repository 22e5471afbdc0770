#include "trace/diffusion_math.hpp"

#include <cmath>
#include <string>

namespace trace {
namespace {

void check_step(int t, const NoiseSchedule& sched, int lowest) {
  if (t < lowest || t > sched.steps) {
    fail(ErrorCategory::kInvalidArgument,
         "step " + std::to_string(t) + " outside [" + std::to_string(lowest) + ", " + std::to_string(sched.steps) + "]");
  }
}

template <class Real>
Tensor<Real> affine(const Tensor<Real>& a, double ca, const Tensor<Real>& b, double cb) {
  Tensor<Real> out(a.rows(), a.cols());
  const Real fa = static_cast<Real>(ca);
  const Real fb = static_cast<Real>(cb);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fa * a[i] + fb * b[i];
  return out;
}

}  // namespace

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end, ScheduleShape shape) {
  require(steps >= 1, ErrorCategory::kInvalidArgument, "schedule needs at least one step");
  require(beta_start > 0 && beta_start <= beta_end && beta_end < 1, ErrorCategory::kInvalidArgument,
          "schedule requires 0 < beta_start <= beta_end < 1");
  require(shape == ScheduleShape::kLinear, ErrorCategory::kInvalidArgument, "unsupported schedule shape");
  NoiseSchedule s;
  s.steps = steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  double running = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : double(i) / double(steps - 1);
    s.beta[i] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[i] = 1.0 - s.beta[i];
    running *= s.alpha[i];
    s.alpha_bar[i] = running;
  }
  return s;
}

template <class Real>
Tensor<Real> forward_step(const Tensor<Real>& x_prev, int t, const NoiseSchedule& sched, const Tensor<Real>& eps) {
  check_step(t, sched, 1);
  require_same_shape(x_prev, eps, "forward_step");
  return affine(x_prev, std::sqrt(sched.alpha_at(t)), eps, std::sqrt(sched.beta_at(t)));
}

template <class Real>
Tensor<Real> forward_jump(const Tensor<Real>& x0, int t, const NoiseSchedule& sched, const Tensor<Real>& eps) {
  check_step(t, sched, 0);
  require_same_shape(x0, eps, "forward_jump");
  const double ab = sched.alpha_bar_at(t);
  return affine(x0, std::sqrt(ab), eps, std::sqrt(1.0 - ab));
}

template <class Real>
Tensor<Real> derive_multistep_noise(const Tensor<Real>& x0, const Tensor<Real>& xt, int t, const NoiseSchedule& sched) {
  require(t != 0, ErrorCategory::kInvalidArgument, "multi-step noise is undefined at t = 0");
  check_step(t, sched, 1);
  require_same_shape(x0, xt, "derive_multistep_noise");
  const double ab = sched.alpha_bar_at(t);
  const double inv = 1.0 / std::sqrt(1.0 - ab);
  return affine(xt, inv, x0, -std::sqrt(ab) * inv);
}

template <class Real>
Tensor<Real> ddpm_reverse_step(const Tensor<Real>& xt, const Tensor<Real>& eps_hat, int t, const NoiseSchedule& sched,
                               const Tensor<Real>& z) {
  check_step(t, sched, 1);
  require_same_shape(xt, eps_hat, "ddpm_reverse_step");
  require_same_shape(xt, z, "ddpm_reverse_step noise");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
  const double eps_coef = sched.beta_at(t) / std::sqrt(1.0 - sched.alpha_bar_at(t));
  const double sigma = std::sqrt(sched.beta_at(t));
  Tensor<Real> out(xt.rows(), xt.cols());
  const Real a = static_cast<Real>(inv_sqrt_alpha);
  const Real e = static_cast<Real>(inv_sqrt_alpha * eps_coef);
  const Real s = static_cast<Real>(sigma);
  for (std::size_t i = 0; i < xt.size(); ++i) out[i] = a * xt[i] - e * eps_hat[i] + s * z[i];
  return out;
}

template <class Real>
Tensor<Real> ddim_reverse_step(const Tensor<Real>& xt, const Tensor<Real>& eps_hat, int t_from, int t_to,
                               const NoiseSchedule& sched) {
  if (!(0 <= t_to && t_to < t_from && t_from <= sched.steps)) {
    fail(ErrorCategory::kInvalidArgument,
         "DDIM step needs 0 <= t_to < t_from <= T, got " + std::to_string(t_from) + " -> " + std::to_string(t_to));
  }
  require_same_shape(xt, eps_hat, "ddim_reverse_step");
  const double ab_from = sched.alpha_bar_at(t_from);
  const double ab_to = sched.alpha_bar_at(t_to);
  const Real x0_scale = static_cast<Real>(1.0 / std::sqrt(ab_from));
  const Real x0_eps = static_cast<Real>(std::sqrt(1.0 - ab_from));
  const Real to_scale = static_cast<Real>(std::sqrt(ab_to));
  const Real to_eps = static_cast<Real>(std::sqrt(1.0 - ab_to));
  Tensor<Real> out(xt.rows(), xt.cols());
  for (std::size_t i = 0; i < xt.size(); ++i) {
    const Real x0_hat = (xt[i] - x0_eps * eps_hat[i]) * x0_scale;
    out[i] = t_to == 0 ? x0_hat : to_scale * x0_hat + to_eps * eps_hat[i];
  }
  return out;
}

template <class Real>
Tensor<Real> standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor<Real> out(rows, cols);
  for (auto& v : out.values()) v = static_cast<Real>(rng.normal());
  return out;
}

template <class Real>
NoiseLadder<Real> build_noise_ladder(const Tensor<Real>& x0, const NoiseSchedule& sched, Rng& rng) {
  NoiseLadder<Real> ladder;
  ladder.single_step.reserve(sched.steps);
  ladder.states.reserve(sched.steps + 1);
  ladder.multi_step.reserve(sched.steps);
  for (int t = 1; t <= sched.steps; ++t) ladder.single_step.push_back(standard_normal<Real>(x0.rows(), x0.cols(), rng));
  ladder.states.push_back(x0);
  for (int t = 1; t <= sched.steps; ++t) {
    ladder.states.push_back(forward_step(ladder.states.back(), t, sched, ladder.single_step[t - 1]));
  }
  for (int t = 1; t <= sched.steps; ++t) {
    ladder.multi_step.push_back(derive_multistep_noise(x0, ladder.states[t], t, sched));
  }
  return ladder;
}

#define TRACE_INSTANTIATE(Real)                                                                                     \
  template Tensor<Real> forward_step<Real>(const Tensor<Real>&, int, const NoiseSchedule&, const Tensor<Real>&);    \
  template Tensor<Real> forward_jump<Real>(const Tensor<Real>&, int, const NoiseSchedule&, const Tensor<Real>&);    \
  template Tensor<Real> derive_multistep_noise<Real>(const Tensor<Real>&, const Tensor<Real>&, int,                 \
                                                     const NoiseSchedule&);                                         \
  template Tensor<Real> ddpm_reverse_step<Real>(const Tensor<Real>&, const Tensor<Real>&, int, const NoiseSchedule&, \
                                                const Tensor<Real>&);                                               \
  template Tensor<Real> ddim_reverse_step<Real>(const Tensor<Real>&, const Tensor<Real>&, int, int,                 \
                                                const NoiseSchedule&);                                              \
  template Tensor<Real> standard_normal<Real>(std::size_t, std::size_t, Rng&);                                      \
  template NoiseLadder<Real> build_noise_ladder<Real>(const Tensor<Real>&, const NoiseSchedule&, Rng&);

TRACE_INSTANTIATE(float)
TRACE_INSTANTIATE(double)
#undef TRACE_INSTANTIATE

}  // namespace trace
