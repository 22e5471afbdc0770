#include <doctest.h>

#include "oracles.hpp"
#include "test_util.hpp"
#include "trace/spdm_net.hpp"

using namespace trace;
using namespace trace::testing;

namespace {

template <class Real>
ConditionTensor<Real> random_condition(const ArchConfig& cfg, std::size_t L, Rng& rng) {
  ConditionTensor<Real> c;
  c.data = random_tensor<Real>(cfg.condition_depth(), L, rng);
  return c;
}

template <class Real>
HiddenState<Real> random_state(const ArchConfig& cfg, std::size_t L, Rng& rng, double scale = 0.5) {
  auto s = HiddenState<Real>::zeros(cfg, L);
  for (auto& f : s.features) f = random_tensor<Real>(f.rows(), f.cols(), rng, scale);
  return s;
}

}  // namespace

TEST_CASE("zero network predicts zero noise and zero state") {
  auto cfg = tiny_arch(16);
  Rng rng(1);
  auto p = init_params(cfg, rng);
  for (std::size_t i = 0; i < p.count(); ++i) p.value(i).fill(0.0f);
  auto out = denoise_forward(random_condition<float>(cfg, 16, rng), random_state<float>(cfg, 16, rng), 7, p, cfg);
  for (float v : out.eps_hat.values()) CHECK(v == 0.0f);
  CHECK(out.state.all_zero());
}

TEST_CASE("fresh initialization predicts zero noise") {
  auto cfg = tiny_arch(16);
  Rng rng(2);
  auto p = init_params(cfg, rng);
  auto out = denoise_forward(random_condition<float>(cfg, 16, rng), HiddenState<float>::zeros(cfg, 16), 3, p, cfg);
  for (float v : out.eps_hat.values()) CHECK(v == 0.0f);
}

TEST_CASE("denoiser is deterministic") {
  auto cfg = tiny_arch(32);
  auto p = random_params(cfg, 3);
  Rng rng(4);
  auto cond = random_condition<float>(cfg, 32, rng);
  auto st = random_state<float>(cfg, 32, rng);
  auto a = denoise_forward(cond, st, 11, p, cfg);
  auto b = denoise_forward(cond, st, 11, p, cfg);
  CHECK(a.eps_hat == b.eps_hat);
  CHECK(a.state == b.state);
  Rng r1(9), r2(9);
  auto p1 = init_params(cfg, r1);
  auto p2 = init_params(cfg, r2);
  for (std::size_t i = 0; i < p1.count(); ++i) CHECK(p1.value(i) == p2.value(i));
}

TEST_CASE("state shapes follow the hierarchy") {
  ArchConfig cfg;
  cfg.blocks = 4;
  cfg.base_channels = 32;
  cfg.channel_multipliers = {1, 2, 4, 8};
  cfg.length = 64;
  cfg.step_embed_dim = 16;
  Rng rng(5);
  auto p = init_params(cfg, rng);
  auto out = denoise_forward(random_condition<float>(cfg, 64, rng), HiddenState<float>::zeros(cfg, 64), 1, p, cfg);
  // Channel-major: rows are channels.
  const std::vector<std::pair<std::size_t, std::size_t>> want{{32, 64}, {64, 32}, {128, 16}, {256, 8}};
  REQUIRE(out.state.features.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(out.state.features[i].rows() == want[i].first);
    CHECK(out.state.features[i].cols() == want[i].second);
  }
  CHECK(out.eps_hat.rows() == 2);
  CHECK(out.eps_hat.cols() == 64);
  auto next = propagate_state(out.state, out.state, 1, p, cfg);
  CHECK(next.matches(cfg, 64));
}

TEST_CASE("shape errors") {
  auto cfg = tiny_arch(16);
  auto p = random_params(cfg, 6);
  Rng rng(6);
  CHECK_THROWS_AS(denoise_forward(random_condition<float>(cfg, 16, rng), HiddenState<float>::zeros(cfg, 32), 1, p, cfg),
                  Error);
  ConditionTensor<float> bad;
  bad.data = random_tensor<float>(cfg.condition_depth() + 1, 16, rng);
  CHECK_THROWS_AS(denoise_forward(bad, HiddenState<float>::zeros(cfg, 16), 1, p, cfg), Error);
  CHECK_THROWS_AS(
      propagate_state(HiddenState<float>::zeros(cfg, 16), HiddenState<float>::zeros(cfg, 32), 1, p, cfg), Error);
  auto odd = tiny_arch(16);
  odd.length = 15;
  CHECK_THROWS_AS(odd.validate(), Error);
}

TEST_CASE("state input matters only when fused") {
  auto cfg = tiny_arch(16);
  auto p = random_params(cfg, 7);
  Rng rng(7);
  auto cond = random_condition<float>(cfg, 16, rng);
  auto zero = HiddenState<float>::zeros(cfg, 16);
  auto st = random_state<float>(cfg, 16, rng);
  CHECK(max_abs_diff(denoise_forward(cond, zero, 5, p, cfg).eps_hat, denoise_forward(cond, st, 5, p, cfg).eps_hat) >
        0);
  DenoiseOptions off{false};
  CHECK(denoise_forward(cond, zero, 5, p, cfg, off).eps_hat == denoise_forward(cond, st, 5, p, cfg, off).eps_hat);
}

TEST_CASE("GRU gate identities") {
  auto cfg = tiny_arch(16);
  auto p = random_params(cfg, 8);
  Rng rng(8);
  auto h = random_state<float>(cfg, 16, rng);
  auto x = random_state<float>(cfg, 16, rng);
  for (int i = 1; i <= cfg.blocks; ++i) {
    const std::string cell = "gru.cell" + std::to_string(i);
    const std::size_t c = cfg.channels(i - 1);
    p.value(cell + ".zr.w").fill(0.0f);
    for (std::size_t k = 0; k < c; ++k) p.value(cell + ".zr.b")[k] = -1e4f;
  }
  auto closed = propagate_state(h, x, 9, p, cfg);
  CHECK(closed == h);

  for (int i = 1; i <= cfg.blocks; ++i) {
    const std::size_t c = cfg.channels(i - 1);
    for (std::size_t k = 0; k < c; ++k) p.value("gru.cell" + std::to_string(i) + ".zr.b")[k] = 1e4f;
  }
  auto open = propagate_state(h, x, 9, p, cfg);
  // z = 1: the output is the candidate, which still reads h through the reset gate.
  for (const auto& f : open.features) {
    for (float v : f.values()) CHECK(std::abs(v) < 1.0f);
  }
  CHECK(open != h);
}

TEST_CASE("MCGRU matches a scalar-loop reference") {
  auto cfg = tiny_arch(16);
  auto p = random_params(cfg, 10);
  // Non-zero biases so every term is exercised.
  Rng rng(10);
  for (std::size_t i = 0; i < p.count(); ++i) {
    if (p.name(i).rfind("gru.", 0) == 0 && p.name(i).back() == 'b') {
      for (auto& v : p.value(i).values()) v = static_cast<float>(0.2 * rng.normal());
    }
  }
  auto h = random_state<float>(cfg, 16, rng);
  auto x = random_state<float>(cfg, 16, rng);
  const int t = 13;
  auto got = propagate_state(h, x, t, p, cfg);

  const auto want = mcgru_reference(h, x, t, p, cfg);
  for (int i = 0; i < cfg.blocks; ++i) {
    for (std::size_t r = 0; r < want[i].size(); ++r) {
      for (std::size_t l = 0; l < want[i][r].size(); ++l) CHECK(std::abs(got.features[i](r, l) - want[i][r][l]) < 1e-6);
    }
  }
}

TEST_CASE("GRU output stays in (-1, 1) from a bounded start") {
  auto cfg = tiny_arch(16);
  auto p = random_params(cfg, 11);
  Rng rng(11);
  auto h = HiddenState<float>::zeros(cfg, 16);
  for (int t = 30; t >= 1; --t) {
    auto x = random_state<float>(cfg, 16, rng, 20.0);
    h = propagate_state(h, x, t, p, cfg);
    for (const auto& f : h.features) {
      for (float v : f.values()) CHECK(std::abs(v) <= 1.0f);
    }
  }
}

TEST_CASE("step embedding") {
  auto z = step_embedding(0, 8);
  CHECK(z == std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1});
  auto e = step_embedding(1, 4);
  CHECK(e[0] == doctest::Approx(std::sin(1.0)));
  CHECK(e[1] == doctest::Approx(std::cos(1.0)));
  CHECK(e[2] == doctest::Approx(std::sin(0.01)));
  CHECK(e[3] == doctest::Approx(std::cos(0.01)));
  auto a = step_embedding(1, 16), b = step_embedding(250, 16), c = step_embedding(500, 16);
  CHECK(a != b);
  CHECK(b != c);
  CHECK(a != c);
  CHECK_THROWS_AS(step_embedding(1, 3), Error);
}

TEST_CASE("context embedding") {
  auto cfg = tiny_arch(16);
  cfg.contexts = {{ContextKind::kAgentId, 4, 10, 1}, {ContextKind::kDuration, 3, 0, 1}};
  Rng rng(12);
  auto p = init_params(cfg, rng);
  auto agent = embed_context<float>({ContextKind::kAgentId, {3}}, 16, p, cfg);
  REQUIRE(agent.rows() == 4);
  REQUIRE(agent.cols() == 16);
  for (std::size_t d = 0; d < 4; ++d) {
    for (std::size_t l = 0; l < 16; ++l) CHECK(agent(d, l) == p.value("ctx1.table")(3, d));
  }
  auto other = embed_context<float>({ContextKind::kAgentId, {4}}, 16, p, cfg);
  CHECK(max_abs_diff(agent, other) > 0);

  auto dur = embed_context<float>({ContextKind::kDuration, {0.0}}, 16, p, cfg);
  for (float v : dur.values()) CHECK(v == 0.0f);

  CHECK_THROWS_AS(embed_context<float>({ContextKind::kWeekday, {1}}, 16, p, cfg), Error);
  CHECK_THROWS_AS(embed_context<float>({ContextKind::kAgentId, {1.5}}, 16, p, cfg), Error);
  CHECK(cfg.condition_depth() == int(kBaseChannels) + 7);
}

TEST_CASE("state parameter classification") {
  CHECK(is_state_parameter("gru.cell1.zr.w"));
  CHECK(is_state_parameter("unet.enc2.fuse.w"));
  CHECK_FALSE(is_state_parameter("unet.enc2.res.conv1.w"));
  CHECK_FALSE(is_state_parameter("unet.out.w"));
}

TEST_CASE("full network gradients match finite differences in double") {
  // denoise -> propagate -> denoise, as in one training segment.
  auto cfg = tiny_arch(16);
  cfg.contexts = {{ContextKind::kAgentId, 2, 3, 1}, {ContextKind::kDuration, 2, 0, 1}};
  auto p = random_params(cfg, 13).cast<double>();
  Rng rng(13);
  for (std::size_t i = 0; i < p.count(); ++i) {
    if (p.name(i).back() == 'b' && p.name(i).find(".gn") == std::string::npos) {
      for (auto& v : p.value(i).values()) v = 0.1 * rng.normal();
    }
  }
  const std::vector<Context> ctx{{ContextKind::kAgentId, {1}}, {ContextKind::kDuration, {0.7}}};
  auto base = random_tensor<double>(kBaseChannels, 16, rng);
  auto s0 = random_state<double>(cfg, 16, rng);
  auto target1 = random_tensor<double>(2, 5, rng);
  auto target2 = random_tensor<double>(2, 5, rng);
  const std::vector<std::size_t> cols{1, 4, 7, 10, 15};

  auto loss_of = [&](Tape<double>& tape) {
    auto emb = net::embed_contexts(tape, p, cfg, ctx, 16);
    Var cond = net::condition(tape, base, emb);
    auto st = net::state_constants(tape, s0);
    auto d1 = net::denoise(tape, p, cfg, cond, st, 6);
    Var l = ag::masked_mse(tape, d1.eps_hat, target1, cols);
    auto st2 = net::propagate(tape, p, cfg, st, d1.state, 6);
    auto d2 = net::denoise(tape, p, cfg, cond, st2, 5);
    return ag::add(tape, l, ag::masked_mse(tape, d2.eps_hat, target2, cols));
  };
  {
    Tape<double> tape;
    tape.backward(loss_of(tape));
    p.zero_grads();
    tape.accumulate_param_grads(p);
  }
  auto value = [&] {
    Tape<double> tape(false);
    return tape.value(loss_of(tape))[0];
  };

  Rng pick(14);
  const double h = 1e-6;
  std::size_t checked = 0, bad = 0;
  for (std::size_t i = 0; i < p.count(); ++i) {
    auto& w = p.value(i);
    std::vector<std::size_t> idx;
    if (w.size() <= 200) {
      for (std::size_t k = 0; k < w.size(); ++k) idx.push_back(k);
    } else {
      for (int n = 0; n < 200; ++n) idx.push_back(pick.uniform_int(0, w.size() - 1));
    }
    for (std::size_t k : idx) {
      const double orig = w[k];
      w[k] = orig + h;
      const double up = value();
      w[k] = orig - h;
      const double down = value();
      w[k] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = p.grad(i)[k];
      const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      ++checked;
      if (err >= 1e-4) {
        ++bad;
        MESSAGE(p.name(i) << "[" << k << "] fd " << fd << " analytic " << an);
      }
    }
  }
  CHECK(checked > 2000);
  CHECK(bad == 0);
}
