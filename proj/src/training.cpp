#include "trace/training.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>

#include "trace/synthdata.hpp"

namespace trace {

std::string_view scheme_name(BatchScheme s) {
  switch (s) {
    case BatchScheme::kSharedT:
      return "shared_t";
    case BatchScheme::kOffsetT:
      return "offset_t";
    case BatchScheme::kUniformT:
      return "uniform_t";
  }
  return "?";
}

BatchScheme parse_scheme(std::string_view name) {
  if (name == "shared_t") return BatchScheme::kSharedT;
  if (name == "offset_t") return BatchScheme::kOffsetT;
  if (name == "uniform_t") return BatchScheme::kUniformT;
  fail(ErrorCategory::kInvalidArgument, "unknown batch scheme: " + std::string(name));
}

std::string_view loss_scope_name(LossScope s) { return s == LossScope::kQueryOnly ? "query_only" : "all_positions"; }

LossScope parse_loss_scope(std::string_view name) {
  if (name == "query_only") return LossScope::kQueryOnly;
  if (name == "all_positions") return LossScope::kAllPositions;
  fail(ErrorCategory::kInvalidArgument, "unknown loss scope: " + std::string(name));
}

void TrainConfig::validate(int steps) const {
  require(segment_steps >= 2 && segment_steps <= steps, ErrorCategory::kInvalidArgument,
          "segment steps must lie in [2, T]");
  require(effective_stride() >= 1 && effective_stride() < segment_steps, ErrorCategory::kInvalidArgument,
          "stride must lie in [1, segment_steps - 1]");
  require(batch_size >= 1, ErrorCategory::kInvalidArgument, "batch size must be positive");
  require(iterations >= 0, ErrorCategory::kInvalidArgument, "iteration count must be non-negative");
  require(erase_ratio > 0 && erase_ratio < 1, ErrorCategory::kInvalidArgument, "erase ratio must lie in (0, 1)");
  require(irregularity >= 0, ErrorCategory::kInvalidArgument, "irregularity must be non-negative");
  require(adam.learning_rate >= 0 && adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 &&
              adam.eps > 0,
          ErrorCategory::kInvalidArgument, "invalid optimizer settings");
}

TaskSource sparsifying_source(const std::vector<DenseTrajectory>& data, double erase_ratio, double irregularity) {
  require(!data.empty(), ErrorCategory::kInvalidArgument, "training dataset is empty");
  auto shared = std::make_shared<const std::vector<DenseTrajectory>>(data);
  return [shared, erase_ratio, irregularity](Rng& rng) {
    const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(shared->size()) - 1));
    return sparsify((*shared)[idx], erase_ratio, irregularity, rng);
  };
}

template <class Real>
NoiseLadder<Real> build_ladder(const RecoveryTask& task, const NoiseSchedule& sched, Rng& rng) {
  require(task.truth.has_value(), ErrorCategory::kInvalidArgument, "training tasks need ground-truth query points");
  return build_noise_ladder(points_to_block<Real>(*task.truth), sched, rng);
}

template <class Real>
void load_slot(SampleSlot<Real>& slot, RecoveryTask task, int t, const ArchConfig& cfg, const NoiseSchedule& sched) {
  task.validate();
  require(!task.query_times.empty(), ErrorCategory::kInvalidArgument, "training task has no query points");
  slot.merged = merge(task.observed_times, task.query_times, task.observed_points, *task.truth);
  cfg.validate_length(slot.merged.length());
  slot.queries = slot.merged.query_positions();
  slot.ladder = build_ladder<Real>(task, sched, slot.rng);
  slot.task = std::move(task);
  slot.t_current = t;
  slot.state = HiddenState<Real>::zeros(cfg, slot.merged.length());
}

std::vector<int> init_batch(BatchScheme scheme, int batch_size, int steps, Rng& rng) {
  require(batch_size >= 1 && steps >= 1, ErrorCategory::kInvalidArgument, "batch size and T must be positive");
  std::vector<int> out(batch_size);
  const int delta = (steps + batch_size - 1) / batch_size;
  for (int k = 0; k < batch_size; ++k) {
    switch (scheme) {
      case BatchScheme::kSharedT:
        out[k] = steps;
        break;
      case BatchScheme::kOffsetT: {
        const long shifted = (long(steps) - 1 - long(k) * delta) % steps;
        out[k] = static_cast<int>((shifted + steps) % steps) + 1;
        break;
      }
      case BatchScheme::kUniformT:
        out[k] = static_cast<int>(rng.uniform_int(1, steps));
        break;
    }
  }
  return out;
}

int reload_step(BatchScheme scheme, int steps, Rng& rng) {
  return scheme == BatchScheme::kUniformT ? static_cast<int>(rng.uniform_int(1, steps)) : steps;
}

template <class Real>
SegmentVars segment_loss(Tape<Real>& tape, const SampleSlot<Real>& slot, const ModelParams<Real>& params,
                         const ArchConfig& cfg, const TrainConfig& tc, const NoiseSchedule& sched) {
  require(slot.t_current >= 1, ErrorCategory::kState, "segment requested on an exhausted slot");
  const int n = std::min(tc.segment_steps, slot.t_current);
  const int stride = tc.effective_stride();
  const std::size_t L = slot.merged.length();

  std::vector<std::size_t> columns = slot.queries;
  if (tc.loss_scope == LossScope::kAllPositions) {
    columns.resize(L);
    std::iota(columns.begin(), columns.end(), std::size_t{0});
  }

  auto embeddings = net::embed_contexts(tape, params, cfg, slot.task.contexts, L);
  ConditionTensor<Real> base = aggregate<Real>(slot.merged, {});
  std::vector<Var> state = tc.use_state ? net::state_constants(tape, slot.state) : std::vector<Var>{};

  SegmentVars out;
  for (int j = 0; j < n; ++j) {
    const int t = slot.t_current - j;
    write_query_block(base, slot.merged.mask, slot.ladder.state(t));
    Var cond = net::condition(tape, base.data, embeddings);
    auto d = net::denoise(tape, params, cfg, cond, state, t, DenoiseOptions{tc.use_state, sched.alpha_bar_at(t)});

    const auto& eps = slot.ladder.multi_noise(t);
    Tensor<Real> target = eps;
    if (tc.loss_scope == LossScope::kAllPositions) {
      target = Tensor<Real>(2, L);
      for (std::size_t q = 0; q < slot.queries.size(); ++q) {
        target(0, slot.queries[q]) = eps(0, q);
        target(1, slot.queries[q]) = eps(1, q);
      }
    }
    Var term = ag::masked_mse(tape, d.eps_hat, target, columns);
    out.loss = j == 0 ? term : ag::add(tape, out.loss, term);
    ++out.steps_run;

    if (tc.use_state && j + 1 < n) {
      state = net::propagate(tape, params, cfg, state, d.state, t);
      if (j + 1 == stride) out.carried_state = state;
    }
  }
  return out;
}

template <class Real>
void advance_slot(SampleSlot<Real>& slot, HiddenState<Real> carried, const TrainConfig& tc, const ArchConfig& cfg,
                  const NoiseSchedule& sched, const TaskSource& source) {
  slot.t_current -= tc.effective_stride();
  if (slot.t_current <= 0) {
    Rng& rng = slot.rng;
    RecoveryTask task = source(rng);
    const int t = reload_step(tc.scheme, sched.steps, rng);
    load_slot(slot, std::move(task), t, cfg, sched);
    return;
  }
  if (tc.use_state) slot.state = std::move(carried);
}

AdamState make_adam_state(const ModelParams<float>& params) {
  AdamState s;
  for (std::size_t i = 0; i < params.count(); ++i) {
    s.m.emplace_back(params.value(i).rows(), params.value(i).cols());
    s.v.emplace_back(params.value(i).rows(), params.value(i).cols());
  }
  return s;
}

double adam_update(ModelParams<float>& params, AdamState& state, const AdamConfig& cfg) {
  require(state.m.size() == params.count() && state.v.size() == params.count(), ErrorCategory::kState,
          "optimizer state does not match the parameters");
  double sq = 0.0;
  for (std::size_t i = 0; i < params.count(); ++i) {
    for (float g : params.grad(i).values()) sq += double(g) * double(g);
  }
  const double norm = std::sqrt(sq);
  require(std::isfinite(norm), ErrorCategory::kNumeric, "non-finite gradient norm");
  const double clip = cfg.clip_norm > 0 && norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto w = params.value(i).values();
    auto g = params.grad(i).values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = double(g[k]) * clip;
      m[k] = static_cast<float>(cfg.beta1 * m[k] + (1 - cfg.beta1) * gk);
      v[k] = static_cast<float>(cfg.beta2 * v[k] + (1 - cfg.beta2) * gk * gk);
      const double step = cfg.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg.eps);
      w[k] = static_cast<float>(w[k] - step);
    }
  }
  return norm;
}

Trainer::Trainer(ArchConfig cfg, TrainConfig tc, NoiseSchedule sched, ModelParams<float> params, TaskSource source)
    : cfg_(std::move(cfg)), tc_(tc), sched_(std::move(sched)), params_(std::move(params)), source_(std::move(source)) {
  cfg_.validate();
  tc_.validate(sched_.steps);
  adam_ = make_adam_state(params_);
  const Rng root(tc_.seed);
  Rng init = root.derive("init_batch");
  const auto starts = init_batch(tc_.scheme, tc_.batch_size, sched_.steps, init);
  slots_.resize(tc_.batch_size);
  for (int k = 0; k < tc_.batch_size; ++k) {
    slots_[k].rng = root.derive("slot", static_cast<std::uint64_t>(k));
    load_slot(slots_[k], source_(slots_[k].rng), starts[k], cfg_, sched_);
  }
}

IterationStats Trainer::step() {
  const auto t0 = std::chrono::steady_clock::now();
  IterationStats stats;
  Tape<float> tape(true);
  std::vector<SegmentVars> segs;
  Var total;
  double t_sum = 0.0;
  for (auto& slot : slots_) {
    t_sum += slot.t_current;
    segs.push_back(segment_loss(tape, slot, params_, cfg_, tc_, sched_));
    total = segs.size() == 1 ? segs.back().loss : ag::add(tape, total, segs.back().loss);
  }
  total = ag::scale(tape, total, 1.0f / float(slots_.size()));
  const float loss_value = tape.value(total)[0];
  if (!std::isfinite(loss_value)) {
    fail(ErrorCategory::kNumeric, "non-finite training loss at iteration " + std::to_string(iteration_ + 1) +
                                      " (first slot at t=" + std::to_string(slots_.front().t_current) + ")");
  }
  double per_step = 0.0;
  for (const auto& s : segs) per_step += double(tape.value(s.loss)[0]) / s.steps_run;

  params_.zero_grads();
  tape.backward(total);
  tape.accumulate_param_grads(params_);
  stats.grad_norm = adam_update(params_, adam_, tc_.adam);

  for (std::size_t k = 0; k < slots_.size(); ++k) {
    HiddenState<float> carried;
    if (!segs[k].carried_state.empty()) carried = net::state_values(tape, segs[k].carried_state);
    advance_slot(slots_[k], std::move(carried), tc_, cfg_, sched_, source_);
  }

  ++iteration_;
  elapsed_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  stats.iteration = iteration_;
  stats.mean_loss = per_step / double(slots_.size());
  stats.mean_t = t_sum / double(slots_.size());
  stats.wall_seconds = elapsed_;
  return stats;
}

std::vector<IterationStats> Trainer::run(long iterations, const std::function<bool(const IterationStats&)>& on_step) {
  std::vector<IterationStats> trace;
  while (iteration_ < iterations) {
    trace.push_back(step());
    if (on_step && !on_step(trace.back())) break;
  }
  return trace;
}

double probe_loss(const std::vector<RecoveryTask>& tasks, const ModelParams<float>& params, const ArchConfig& cfg,
                  const NoiseSchedule& sched, const TrainConfig& tc, std::uint64_t seed) {
  require(!tasks.empty(), ErrorCategory::kInvalidArgument, "probe set is empty");
  const Rng root(seed);
  double total = 0.0;
  std::size_t terms = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    Rng rng = root.derive("probe", i);
    const auto ladder = build_ladder<float>(tasks[i], sched, rng);
    const auto merged =
        merge(tasks[i].observed_times, tasks[i].query_times, tasks[i].observed_points, *tasks[i].truth);
    const auto queries = merged.query_positions();
    auto cond = build_condition(merged, tasks[i].contexts, params, cfg);
    auto state = HiddenState<float>::zeros(cfg, merged.length());
    for (int t = sched.steps; t >= 1; --t) {
      write_query_block(cond, merged.mask, ladder.state(t));
      auto res = denoise_forward(cond, state, t, params, cfg, DenoiseOptions{tc.use_state, sched.alpha_bar_at(t)});
      const auto& eps = ladder.multi_noise(t);
      double acc = 0.0;
      for (std::size_t q = 0; q < queries.size(); ++q) {
        for (std::size_t r = 0; r < 2; ++r) {
          const double d = double(res.eps_hat(r, queries[q])) - double(eps(r, q));
          acc += d * d;
        }
      }
      total += acc / double(2 * queries.size());
      ++terms;
      if (tc.use_state && t > 1) state = propagate_state(state, res.state, t, params, cfg);
    }
  }
  return total / double(terms);
}

#define TRACE_INSTANTIATE(Real)                                                                                      \
  template NoiseLadder<Real> build_ladder<Real>(const RecoveryTask&, const NoiseSchedule&, Rng&);                  \
  template void load_slot<Real>(SampleSlot<Real>&, RecoveryTask, int, const ArchConfig&, const NoiseSchedule&);    \
  template SegmentVars segment_loss<Real>(Tape<Real>&, const SampleSlot<Real>&, const ModelParams<Real>&,          \
                                          const ArchConfig&, const TrainConfig&, const NoiseSchedule&);                \
  template void advance_slot<Real>(SampleSlot<Real>&, HiddenState<Real>, const TrainConfig&, const ArchConfig&,    \
                                   const NoiseSchedule&, const TaskSource&);

TRACE_INSTANTIATE(float)
TRACE_INSTANTIATE(double)
#undef TRACE_INSTANTIATE

}  // namespace trace
