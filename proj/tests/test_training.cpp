#include <doctest.h>

#include <set>

#include "test_util.hpp"
#include "trace/synthdata.hpp"
#include "trace/training.hpp"

using namespace trace;
using namespace trace::testing;

namespace {

std::vector<DenseTrajectory> dense_set(std::size_t n, std::size_t L, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<DenseTrajectory> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(smooth_dense(L, rng));
  return out;
}

SampleSlot<float> make_slot(const ArchConfig& cfg, const NoiseSchedule& sched, int t, std::uint64_t seed,
                            double r = 0.5) {
  Rng rng(seed);
  auto d = smooth_dense(cfg.length, rng);
  SampleSlot<float> slot;
  slot.rng = Rng(seed + 1);
  load_slot(slot, sparsify(d, r, 0.0, rng), t, cfg, sched);
  return slot;
}

float segment_value(const SampleSlot<float>& slot, const ModelParams<float>& p, const ArchConfig& cfg,
                    const TrainConfig& tc, const NoiseSchedule& sched, int* steps = nullptr) {
  Tape<float> tape(false);
  auto seg = segment_loss(tape, slot, p, cfg, tc, sched);
  if (steps) *steps = seg.steps_run;
  return tape.value(seg.loss)[0];
}

}  // namespace

TEST_CASE("init_batch schemes") {
  Rng rng(1);
  CHECK(init_batch(BatchScheme::kOffsetT, 4, 8, rng) == std::vector<int>{8, 6, 4, 2});
  CHECK(init_batch(BatchScheme::kSharedT, 3, 500, rng) == std::vector<int>{500, 500, 500});
  auto off = init_batch(BatchScheme::kOffsetT, 4, 500, rng);
  CHECK(off == std::vector<int>{500, 375, 250, 125});
  auto wrap = init_batch(BatchScheme::kOffsetT, 3, 5, rng);
  for (int t : wrap) CHECK((t >= 1 && t <= 5));
  CHECK(wrap == std::vector<int>{5, 3, 1});
}

TEST_CASE("uniform_t starts are flat (chi-square, 10 bins)") {
  Rng rng(2);
  std::vector<int> counts(10);
  const int draws = 256 * 40;
  for (int rep = 0; rep < 40; ++rep) {
    for (int t : init_batch(BatchScheme::kUniformT, 256, 500, rng)) {
      REQUIRE((t >= 1 && t <= 500));
      ++counts[(t - 1) / 50];
    }
  }
  double chi2 = 0;
  const double expected = draws / 10.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 21.666);  // 0.99 quantile, 9 degrees of freedom
}

TEST_CASE("reload rules") {
  Rng rng(3);
  CHECK(reload_step(BatchScheme::kSharedT, 500, rng) == 500);
  CHECK(reload_step(BatchScheme::kOffsetT, 500, rng) == 500);
  std::set<int> seen;
  for (int i = 0; i < 200; ++i) seen.insert(reload_step(BatchScheme::kUniformT, 500, rng));
  CHECK(seen.size() > 100);
}

TEST_CASE("ladder built from the slot is consistent") {
  auto cfg = tiny_arch(16);
  auto sched = make_schedule(2, 0.1, 0.2);
  auto slot = make_slot(cfg, sched, 2, 4);
  const auto& lad = slot.ladder;
  CHECK(lad.state(0) == points_to_block<float>(*slot.task.truth));
  for (int t = 1; t <= 2; ++t) {
    CHECK(lad.state(t) == forward_step(lad.state(t - 1), t, sched, lad.single_step[t - 1]));
    CHECK(max_abs_diff(forward_jump(lad.state(0), t, sched, lad.multi_noise(t)), lad.state(t)) < 1e-5);
  }
  auto again = make_slot(cfg, sched, 2, 4);
  CHECK(again.ladder.multi_step == slot.ladder.multi_step);
  CHECK(slot.state.all_zero());
}

TEST_CASE("untrained model: loss equals mean squared target noise") {
  auto cfg = tiny_arch(16);
  auto sched = make_schedule(50);
  Rng rng(5);
  auto p = init_params(cfg, rng);
  TrainConfig tc;
  auto slot = make_slot(cfg, sched, 30, 5);
  double want = 0;
  for (int t : {30, 29}) {
    double s = 0;
    for (float v : slot.ladder.multi_noise(t).values()) s += double(v) * v;
    want += s / double(slot.ladder.multi_noise(t).size());
  }
  int steps = 0;
  CHECK(segment_value(slot, p, cfg, tc, sched, &steps) == doctest::Approx(want).epsilon(1e-5));
  CHECK(steps == 2);
}

TEST_CASE("segment at t = 1 runs a single step") {
  auto cfg = tiny_arch(16);
  auto sched = make_schedule(20);
  auto p = random_params(cfg, 6);
  TrainConfig tc;
  auto slot = make_slot(cfg, sched, 1, 6);
  int steps = 0;
  const float v = segment_value(slot, p, cfg, tc, sched, &steps);
  CHECK(steps == 1);

  auto cond = aggregate<float>(slot.merged, {});
  write_query_block(cond, slot.merged.mask, slot.ladder.state(1));
  auto res = denoise_forward(cond, slot.state, 1, p, cfg);
  double mse = 0;
  for (std::size_t q = 0; q < slot.queries.size(); ++q) {
    for (std::size_t r = 0; r < 2; ++r) {
      const double d = res.eps_hat(r, slot.queries[q]) - slot.ladder.multi_noise(1)(r, q);
      mse += d * d;
    }
  }
  mse /= double(2 * slot.queries.size());
  CHECK(v == doctest::Approx(mse).epsilon(1e-5));
}

TEST_CASE("loss scopes agree when every position is a query") {
  auto cfg = tiny_arch(16);
  auto sched = make_schedule(20);
  auto p = random_params(cfg, 7);
  auto slot = make_slot(cfg, sched, 10, 7);
  // Rebuild the slot as if nothing were observed.
  std::fill(slot.merged.mask.begin(), slot.merged.mask.end(), std::uint8_t{1});
  slot.queries = slot.merged.query_positions();
  Rng lr(8);
  slot.ladder = build_noise_ladder(points_to_block<float>(slot.merged.points), sched, lr);
  TrainConfig a, b;
  b.loss_scope = LossScope::kAllPositions;
  CHECK(segment_value(slot, p, cfg, a, sched) == segment_value(slot, p, cfg, b, sched));

  auto sparse = make_slot(cfg, sched, 10, 7);
  CHECK(segment_value(sparse, p, cfg, a, sched) != segment_value(sparse, p, cfg, b, sched));
}

TEST_CASE("advance and reload") {
  auto cfg = tiny_arch(16);
  auto sched = make_schedule(20);
  auto data = dense_set(4, 16, 9);
  auto source = sparsifying_source(data, 0.5, 0.0);
  TrainConfig tc;
  tc.scheme = BatchScheme::kSharedT;
  auto slot = make_slot(cfg, sched, 5, 9);
  Rng rng(10);
  auto carried = HiddenState<float>::zeros(cfg, 16);
  carried.features[0].fill(0.25f);
  advance_slot(slot, carried, tc, cfg, sched, source);
  CHECK(slot.t_current == 4);
  CHECK(slot.state == carried);

  slot.t_current = 1;
  advance_slot(slot, carried, tc, cfg, sched, source);
  CHECK(slot.t_current == 20);
  CHECK(slot.state.all_zero());

  tc.scheme = BatchScheme::kUniformT;
  tc.segment_steps = 4;
  slot.t_current = 2;
  advance_slot(slot, carried, tc, cfg, sched, source);
  CHECK((slot.t_current >= 1 && slot.t_current <= 20));
  CHECK(slot.state.all_zero());
}

TEST_CASE("stride and segment validation") {
  TrainConfig tc;
  CHECK(tc.effective_stride() == 1);
  tc.segment_steps = 4;
  CHECK(tc.effective_stride() == 3);
  CHECK_NOTHROW(tc.validate(500));
  tc.segment_steps = 0;
  CHECK_THROWS_AS(tc.validate(500), Error);
  tc.segment_steps = 2;
  tc.stride = 3;
  CHECK_THROWS_AS(tc.validate(500), Error);
}

TEST_CASE("trainer: zero learning rate leaves parameters unchanged") {
  auto cfg = tiny_arch(16);
  auto sched = make_schedule(20);
  auto data = dense_set(4, 16, 11);
  Rng rng(11);
  auto p0 = init_params(cfg, rng);
  TrainConfig tc;
  tc.batch_size = 3;
  tc.adam.learning_rate = 0;
  Trainer tr(cfg, tc, sched, p0, sparsifying_source(data, 0.5, 0.0));
  tr.step();
  for (std::size_t i = 0; i < p0.count(); ++i) CHECK(tr.params().value(i) == p0.value(i));
}

TEST_CASE("trainer: slot steps strictly decrease until reload") {
  auto cfg = tiny_arch(16);
  auto sched = make_schedule(12);
  auto data = dense_set(6, 16, 12);
  Rng rng(12);
  for (auto scheme : {BatchScheme::kSharedT, BatchScheme::kOffsetT, BatchScheme::kUniformT}) {
    TrainConfig tc;
    tc.batch_size = 4;
    tc.scheme = scheme;
    Trainer tr(cfg, tc, sched, init_params(cfg, rng), sparsifying_source(data, 0.5, 0.0));
    std::vector<int> prev;
    for (const auto& s : tr.slots()) prev.push_back(s.t_current);
    if (scheme == BatchScheme::kSharedT) CHECK(prev == std::vector<int>(4, 12));
    if (scheme == BatchScheme::kOffsetT) CHECK(prev == std::vector<int>{12, 9, 6, 3});
    for (int it = 0; it < 30; ++it) {
      tr.step();
      for (std::size_t k = 0; k < 4; ++k) {
        const int now = tr.slots()[k].t_current;
        if (prev[k] > 1) {
          CHECK(now == prev[k] - 1);
        } else {
          CHECK(tr.slots()[k].state.all_zero());
          if (scheme != BatchScheme::kUniformT) CHECK(now == 12);
        }
        prev[k] = now;
      }
      if (scheme == BatchScheme::kSharedT) {
        for (const auto& s : tr.slots()) CHECK(s.t_current == tr.slots()[0].t_current);
      }
    }
  }
}

TEST_CASE("trainer: carried state matches a manual propagation") {
  auto cfg = tiny_arch(16);
  auto sched = make_schedule(12);
  auto data = dense_set(3, 16, 13);
  Rng rng(13);
  TrainConfig tc;
  tc.batch_size = 1;
  tc.scheme = BatchScheme::kSharedT;
  tc.adam.learning_rate = 0;
  Trainer tr(cfg, tc, sched, random_params(cfg, 13), sparsifying_source(data, 0.5, 0.0));
  const auto before = tr.slots()[0];
  tr.step();
  const auto& after = tr.slots()[0];
  auto cond = aggregate<float>(before.merged, {});
  write_query_block(cond, before.merged.mask, before.ladder.state(12));
  auto res = denoise_forward(cond, before.state, 12, tr.params(), cfg);
  auto want = propagate_state(before.state, res.state, 12, tr.params(), cfg);
  CHECK(after.t_current == 11);
  for (std::size_t i = 0; i < want.features.size(); ++i) CHECK(max_abs_diff(after.state.features[i], want.features[i]) < 1e-5);
  CHECK_FALSE(after.state.all_zero());
}

TEST_CASE("trainer: fixed seeds reproduce the loss trace") {
  auto cfg = tiny_arch(16);
  auto sched = make_schedule(20);
  auto data = dense_set(5, 16, 14);
  auto run = [&] {
    Rng rng(14);
    TrainConfig tc;
    tc.batch_size = 3;
    tc.seed = 99;
    Trainer tr(cfg, tc, sched, init_params(cfg, rng), sparsifying_source(data, 0.5, 0.0));
    std::vector<double> losses;
    for (const auto& s : tr.run(15)) losses.push_back(s.mean_loss);
    return std::make_pair(losses, tr.params().value("unet.out.w"));
  };
  auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("Adam clips the global gradient norm") {
  ModelParams<float> p;
  p.add("w", Tensor<float>(1, 2));
  p.grad(0)[0] = 3;
  p.grad(0)[1] = 4;
  auto st = make_adam_state(p);
  AdamConfig c;
  c.learning_rate = 0.1;
  CHECK(adam_update(p, st, c) == doctest::Approx(5.0));
  // First Adam step moves each weight by about lr against the gradient sign.
  CHECK(p.value(0)[0] == doctest::Approx(-0.1).epsilon(1e-4));
  CHECK(p.value(0)[1] == doctest::Approx(-0.1).epsilon(1e-4));
  CHECK(st.step == 1);
  CHECK(st.m[0][0] == doctest::Approx(0.1 * 0.6));
}

TEST_CASE("tiny overfit: loss drops below 10% of the start") {
  ArchConfig cfg = tiny_arch(64);
  cfg.base_channels = 16;
  auto sched = make_schedule(50, 1e-4, 0.2);
  auto data = dense_set(4, 64, 15);
  Rng rng(15);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.adam.learning_rate = 2e-3;
  tc.seed = 15;
  Trainer tr(cfg, tc, sched, init_params(cfg, rng), sparsifying_source(data, 0.5, 0.0));
  auto trace = tr.run(2000);
  auto window = [&](std::size_t a, std::size_t b) {
    double s = 0;
    for (std::size_t i = a; i < b; ++i) s += trace[i].mean_loss;
    return s / double(b - a);
  };
  const double start = trace.front().mean_loss, end = window(trace.size() - 200, trace.size());
  MESSAGE("start " << start << " end " << end);
  CHECK(end < 0.1 * start);
}
