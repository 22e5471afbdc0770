#include "trace/sampling.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace trace {
namespace {

Tensor<float> gather_columns(const Tensor<float>& x, const std::vector<std::size_t>& cols) {
  Tensor<float> out(x.rows(), cols.size());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) out(r, j) = x(r, cols[j]);
  }
  return out;
}

}  // namespace

std::string_view sampler_name(SamplerMode mode) { return mode == SamplerMode::kDdpm ? "ddpm" : "ddim"; }

SamplerMode parse_sampler(std::string_view name) {
  if (name == "ddpm") return SamplerMode::kDdpm;
  if (name == "ddim") return SamplerMode::kDdim;
  fail(ErrorCategory::kInvalidArgument, "unknown sampler: " + std::string(name));
}

std::vector<int> make_step_plan(int steps, int n_steps) {
  require(steps >= 1 && n_steps >= 1 && n_steps <= steps, ErrorCategory::kInvalidArgument,
          "step count must lie in [1, T]");
  std::vector<int> plan;
  for (int k = 0; k <= n_steps; ++k) {
    const int t = static_cast<int>(std::lround(double(steps) * double(n_steps - k) / double(n_steps)));
    if (plan.empty() || plan.back() != t) plan.push_back(t);
  }
  return plan;
}

void validate_step_plan(const std::vector<int>& plan, int steps, SamplerMode mode) {
  require(plan.size() >= 2 && plan.front() == steps && plan.back() == 0, ErrorCategory::kInvalidArgument,
          "step plan must run from T to 0");
  for (std::size_t i = 0; i + 1 < plan.size(); ++i) {
    require(plan[i] > plan[i + 1], ErrorCategory::kInvalidArgument, "step plan must be strictly decreasing");
    if (mode == SamplerMode::kDdpm) {
      require(plan[i + 1] == plan[i] - 1, ErrorCategory::kInvalidArgument, "DDPM sampling needs consecutive steps");
    }
  }
}

Tensor<float> reverse_loop(Tensor<float> x, const NoiseSchedule& sched, const std::vector<int>& plan,
                           SamplerMode mode, const NoisePredictor& predict, Rng& rng) {
  validate_step_plan(plan, sched.steps, mode);
  for (std::size_t k = 0; k + 1 < plan.size(); ++k) {
    const int t = plan[k], t_next = plan[k + 1];
    const auto eps = predict(x, t, t_next);
    require_same_shape(eps, x, "noise prediction");
    if (mode == SamplerMode::kDdpm) {
      const auto z = t > 1 ? standard_normal<float>(x.rows(), x.cols(), rng) : Tensor<float>(x.rows(), x.cols());
      x = ddpm_reverse_step(x, eps, t, sched, z);
    } else {
      x = ddim_reverse_step(x, eps, t, t_next, sched);
    }
    require(x.all_finite(), ErrorCategory::kNumeric, "non-finite query block at step " + std::to_string(t));
  }
  return x;
}

Recovery recover(const RecoveryTask& task, const ModelParams<float>& params, const ArchConfig& cfg,
                 const NoiseSchedule& sched, const RecoverOptions& opts, Rng& rng) {
  task.validate();
  Recovery out;
  const std::size_t nq = task.query_times.size();
  if (nq == 0) {
    out.dense = merge(task.observed_times, task.query_times, task.observed_points, {});
    return out;
  }
  const auto plan = opts.plan.empty() ? make_step_plan(sched.steps, sched.steps) : opts.plan;
  validate_step_plan(plan, sched.steps, opts.mode);

  Tensor<float> x = standard_normal<float>(2, nq, rng);
  out.dense = merge(task.observed_times, task.query_times, task.observed_points, block_to_points(x));
  const auto queries = out.dense.query_positions();
  auto cond = build_condition(out.dense, task.contexts, params, cfg);
  auto state = HiddenState<float>::zeros(cfg, out.dense.length());

  auto predict = [&](const Tensor<float>& xq, int t, int t_next) {
    write_query_block(cond, out.dense.mask, xq);
    auto res = denoise_forward(cond, state, t, params, cfg, DenoiseOptions{opts.use_state, sched.alpha_bar_at(t)});
    ++out.network_calls;
    if (opts.use_state && t_next > 0) {
      state = propagate_state(state, res.state, t, params, cfg);
      ++out.state_updates;
    }
    return gather_columns(res.eps_hat, queries);
  };
  x = reverse_loop(std::move(x), sched, plan, opts.mode, predict, rng);

  out.query_points = block_to_points(x);
  for (std::size_t j = 0; j < queries.size(); ++j) out.dense.points[queries[j]] = out.query_points[j];
  return out;
}

Recovery lerp_recover(const RecoveryTask& task) {
  task.validate();
  Recovery out;
  out.dense = merge(task.observed_times, task.query_times, task.observed_points,
                    TrajectorySeq(task.query_times.size()));
  for (std::size_t pos : out.dense.query_positions()) {
    out.dense.points[pos] = out.dense.lerp_points[pos];
    out.query_points.push_back(out.dense.lerp_points[pos]);
  }
  return out;
}

BatchRecovery batch_recover(const std::vector<RecoveryTask>& tasks, const ModelParams<float>& params,
                            const ArchConfig& cfg, const NoiseSchedule& sched, const RecoverOptions& opts,
                            std::uint64_t seed, std::size_t batch_size, unsigned workers) {
  require(batch_size >= 1, ErrorCategory::kInvalidArgument, "batch size must be positive");
  workers = std::max(1u, workers);
  BatchRecovery out;
  out.results.resize(tasks.size());
  const Rng root(seed);
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  for (std::size_t b0 = 0, bi = 0; b0 < tasks.size(); b0 += batch_size, ++bi) {
    const std::size_t b1 = std::min(tasks.size(), b0 + batch_size);
    const auto t0 = clock::now();
    std::atomic<std::size_t> next{b0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto work = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < b1;) {
        try {
          Rng rng = root.derive("recover", i);
          out.results[i] = recover(tasks[i], params, cfg, sched, opts, rng);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    };
    const unsigned n_threads = std::min<unsigned>(workers, static_cast<unsigned>(b1 - b0));
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < n_threads; ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
    out.timing.push_back({bi, b1 - b0, std::chrono::duration<double>(clock::now() - t0).count()});
  }
  out.total_seconds = std::chrono::duration<double>(clock::now() - start).count();
  return out;
}

}  // namespace trace
