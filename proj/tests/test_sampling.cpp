#include <doctest.h>

#include "test_util.hpp"
#include "trace/sampling.hpp"
#include "trace/synthdata.hpp"

using namespace trace;
using namespace trace::testing;

namespace {

RecoveryTask make_task(std::size_t L, std::uint64_t seed, double r = 0.5) {
  Rng rng(seed);
  return sparsify(smooth_dense(L, rng), r, 0.0, rng);
}

}  // namespace

TEST_CASE("step plans") {
  CHECK(make_step_plan(500, 500).size() == 501);
  auto p11 = make_step_plan(500, 11);
  CHECK(p11.size() == 12);
  CHECK(p11.front() == 500);
  CHECK(p11.back() == 0);
  CHECK(p11[0] - p11[1] == 45);
  CHECK(make_step_plan(10, 2) == std::vector<int>{10, 5, 0});
  for (int n : {51, 26, 11}) CHECK(make_step_plan(500, n).size() == std::size_t(n) + 1);
  CHECK_THROWS_AS(make_step_plan(10, 11), Error);
  CHECK_THROWS_AS(validate_step_plan({10, 5, 0}, 10, SamplerMode::kDdpm), Error);
  CHECK_NOTHROW(validate_step_plan({10, 5, 0}, 10, SamplerMode::kDdim));
  CHECK_THROWS_AS(validate_step_plan({9, 5, 0}, 10, SamplerMode::kDdim), Error);
  CHECK_THROWS_AS(validate_step_plan({10, 5, 5, 0}, 10, SamplerMode::kDdim), Error);
}

TEST_CASE("empty query returns the observation without network calls") {
  auto cfg = tiny_arch(16);
  auto p = random_params(cfg, 1);
  RecoveryTask task;
  Rng rng(1);
  auto d = smooth_dense(16, rng);
  task.observed_times = d.times;
  task.observed_points = d.points;
  auto out = recover(task, p, cfg, make_schedule(20), {}, rng);
  CHECK(out.network_calls == 0);
  CHECK(out.query_points.empty());
  CHECK(out.dense.points == d.points);
  CHECK(out.dense.times == d.times.values());
}

TEST_CASE("DDPM with an oracle predictor recovers the clean block") {
  auto sched = make_schedule(500);
  Rng rng(2);
  auto x0 = random_tensor<float>(2, 12, rng);
  auto oracle = [&](const Tensor<float>& x, int t, int) { return derive_multistep_noise(x0, x, t, sched); };
  auto out = reverse_loop(standard_normal<float>(2, 12, rng), sched, make_step_plan(500, 500), SamplerMode::kDdpm,
                          oracle, rng);
  CHECK(max_abs_diff(out, x0) < 1e-3);
  auto ddim = reverse_loop(standard_normal<float>(2, 12, rng), sched, make_step_plan(500, 11), SamplerMode::kDdim,
                           oracle, rng);
  CHECK(max_abs_diff(ddim, x0) < 1e-3);
}

TEST_CASE("network calls follow the plan length") {
  auto cfg = tiny_arch(16);
  auto p = random_params(cfg, 3);
  auto sched = make_schedule(60);
  auto task = make_task(16, 3);
  for (int n : {60, 13, 5}) {
    RecoverOptions o;
    o.plan = make_step_plan(60, n);
    Rng rng(3);
    auto out = recover(task, p, cfg, sched, o, rng);
    CHECK(out.network_calls == n);
    CHECK(out.state_updates == n - 1);
    o.use_state = false;
    CHECK(recover(task, p, cfg, sched, o, rng).state_updates == 0);
  }
  RecoverOptions ddpm;
  ddpm.mode = SamplerMode::kDdpm;
  Rng rng(4);
  CHECK(recover(task, p, cfg, sched, ddpm, rng).network_calls == 60);
  ddpm.plan = make_step_plan(60, 6);
  CHECK_THROWS_AS(recover(task, p, cfg, sched, ddpm, rng), Error);
}

TEST_CASE("observations are preserved bit for bit") {
  auto cfg = tiny_arch(32);
  auto p = random_params(cfg, 5, 2.0);
  auto sched = make_schedule(30);
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto task = make_task(32, 10 + s, 0.3 + 0.1 * double(s));
    Rng rng(s);
    RecoverOptions o;
    o.mode = s % 2 ? SamplerMode::kDdpm : SamplerMode::kDdim;
    auto out = recover(task, p, cfg, sched, o, rng);
    auto obs = out.dense.observed_positions();
    REQUIRE(obs.size() == task.observed_points.size());
    for (std::size_t j = 0; j < obs.size(); ++j) {
      CHECK(out.dense.points[obs[j]] == task.observed_points[j]);
      CHECK(out.dense.times[obs[j]] == task.observed_times[j]);
    }
    auto q = out.dense.query_positions();
    for (std::size_t j = 0; j < q.size(); ++j) CHECK(out.dense.points[q[j]] == out.query_points[j]);
  }
}

TEST_CASE("DDIM recovery is deterministic given the seed") {
  auto cfg = tiny_arch(16);
  auto p = random_params(cfg, 6);
  auto sched = make_schedule(40);
  auto task = make_task(16, 6);
  RecoverOptions o;
  o.plan = make_step_plan(40, 8);
  Rng a(7), b(7), c(8);
  auto ra = recover(task, p, cfg, sched, o, a);
  auto rb = recover(task, p, cfg, sched, o, b);
  auto rc = recover(task, p, cfg, sched, o, c);
  CHECK(ra.query_points == rb.query_points);
  CHECK(ra.query_points != rc.query_points);
}

TEST_CASE("state off equals the plain denoiser with a zero state") {
  auto cfg = tiny_arch(16);
  auto p = random_params(cfg, 9);
  auto sched = make_schedule(20);
  auto task = make_task(16, 9);
  RecoverOptions o;
  o.use_state = false;
  o.plan = make_step_plan(20, 5);
  Rng r1(10);
  auto got = recover(task, p, cfg, sched, o, r1);

  Rng r2(10);
  auto x = standard_normal<float>(2, task.query_times.size(), r2);
  auto merged = merge(task.observed_times, task.query_times, task.observed_points, block_to_points(x));
  auto cond = build_condition(merged, task.contexts, p, cfg);
  const auto zero = HiddenState<float>::zeros(cfg, merged.length());
  const auto q = merged.query_positions();
  auto predict = [&](const Tensor<float>& xq, int t, int) {
    write_query_block(cond, merged.mask, xq);
    auto eps = denoise_forward(cond, zero, t, p, cfg).eps_hat;
    Tensor<float> out(2, q.size());
    for (std::size_t j = 0; j < q.size(); ++j) {
      out(0, j) = eps(0, q[j]);
      out(1, j) = eps(1, q[j]);
    }
    return out;
  };
  auto want = reverse_loop(x, sched, o.plan, SamplerMode::kDdim, predict, r2);
  CHECK(got.query_points == block_to_points(want));

  o.use_state = true;
  Rng r3(10);
  CHECK(recover(task, p, cfg, sched, o, r3).query_points != got.query_points);
}

TEST_CASE("batching and workers do not change results") {
  auto cfg = tiny_arch(16);
  auto p = random_params(cfg, 11);
  auto sched = make_schedule(15);
  std::vector<RecoveryTask> tasks;
  for (std::uint64_t i = 0; i < 7; ++i) tasks.push_back(make_task(16, 20 + i));
  RecoverOptions o;
  auto one = batch_recover(tasks, p, cfg, sched, o, 42, 1, 1);
  auto big = batch_recover(tasks, p, cfg, sched, o, 42, 100, 3);
  CHECK(one.timing.size() == 7);
  CHECK(big.timing.size() == 1);
  for (std::size_t i = 0; i < tasks.size(); ++i) CHECK(one.results[i].query_points == big.results[i].query_points);
  Rng rng = Rng(42).derive("recover", 3);
  CHECK(recover(tasks[3], p, cfg, sched, o, rng).query_points == one.results[3].query_points);
}

TEST_CASE("lerp baseline") {
  RecoveryTask t;
  t.observed_times = TimestampSeq({0.0, 1.0});
  t.observed_points = {{0, 0}, {2, 4}};
  t.query_times = TimestampSeq({0.25, 1.5});
  auto out = lerp_recover(t);
  REQUIRE(out.query_points.size() == 2);
  CHECK(out.query_points[0].lon == doctest::Approx(0.5));
  CHECK(out.query_points[0].lat == doctest::Approx(1.0));
  CHECK(out.query_points[1] == Point{2, 4});
  CHECK(out.network_calls == 0);
}

TEST_CASE("sampler names") {
  CHECK(parse_sampler("ddpm") == SamplerMode::kDdpm);
  CHECK(sampler_name(SamplerMode::kDdim) == "ddim");
  CHECK_THROWS_AS(parse_sampler("euler"), Error);
}

TEST_CASE("untrained model with the interpolation residual reproduces lerp under DDIM") {
  auto cfg = tiny_arch(16);
  cfg.lerp_residual = true;
  Rng rng(12);
  auto p = init_params(cfg, rng);
  auto sched = make_schedule(50);
  auto task = make_task(16, 12);
  RecoverOptions o;
  o.plan = make_step_plan(50, 7);
  auto got = recover(task, p, cfg, sched, o, rng);
  auto lerp = lerp_recover(task);
  for (std::size_t j = 0; j < got.query_points.size(); ++j) {
    CHECK(std::abs(got.query_points[j].lon - lerp.query_points[j].lon) < 1e-4);
    CHECK(std::abs(got.query_points[j].lat - lerp.query_points[j].lat) < 1e-4);
  }
  CHECK_THROWS_AS(prior_noise(Tensor<float>(6, 4), 1.0), Error);
}
