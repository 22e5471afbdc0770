#pragma once

#include <cmath>
#include <vector>

#include "trace/rng.hpp"
#include "trace/spdm_net.hpp"
#include "trace/tensor.hpp"
#include "trace/traj_core.hpp"

namespace trace::testing {

template <class Real>
Tensor<Real> random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor<Real> t(rows, cols);
  for (auto& v : t.values()) v = static_cast<Real>(scale * rng.normal());
  return t;
}

template <class Real>
double max_abs_diff(const Tensor<Real>& a, const Tensor<Real>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

inline ArchConfig tiny_arch(std::size_t L = 16) {
  ArchConfig cfg;
  cfg.blocks = 2;
  cfg.base_channels = 8;
  cfg.channel_multipliers = {1, 2};
  cfg.kernel_size = 5;
  cfg.step_embed_dim = 8;
  cfg.length = static_cast<int>(L);
  return cfg;
}

// Random parameters everywhere, including the zero-initialized noise head.
inline ModelParams<float> random_params(const ArchConfig& cfg, std::uint64_t seed, double head_scale = 0.3) {
  Rng rng(seed);
  auto p = init_params(cfg, rng);
  for (auto& v : p.value("unet.out.w").values()) v = static_cast<float>(head_scale * rng.normal());
  for (auto& v : p.value("unet.out.b").values()) v = static_cast<float>(0.1 * rng.normal());
  return p;
}

// Smooth random walk trajectory with uniform timestamps in [0, 1].
inline DenseTrajectory smooth_dense(std::size_t L, Rng& rng) {
  DenseTrajectory d;
  std::vector<double> t(L);
  double x = rng.normal(), y = rng.normal(), h = rng.uniform(0, 6.28);
  for (std::size_t i = 0; i < L; ++i) {
    t[i] = double(i) / double(L - 1);
    h += 0.2 * rng.normal();
    x += 0.05 * std::cos(h);
    y += 0.05 * std::sin(h);
    d.points.push_back({x, y});
  }
  d.times = TimestampSeq(std::move(t));
  return d;
}

}  // namespace trace::testing
