#include <doctest.h>

#include "test_util.hpp"
#include "trace/diffusion_math.hpp"
#include "trace/sampling.hpp"

using namespace trace;
using namespace trace::testing;

TEST_CASE("schedule from two betas") {
  auto s = make_schedule(2, 0.1, 0.2);
  CHECK(s.alpha[0] == doctest::Approx(0.9));
  CHECK(s.alpha[1] == doctest::Approx(0.8));
  CHECK(s.alpha_bar[0] == doctest::Approx(0.9));
  CHECK(s.alpha_bar[1] == doctest::Approx(0.72));
}

TEST_CASE("single-step schedule") {
  auto s = make_schedule(1, 0.05, 0.05);
  CHECK(s.alpha_bar_at(1) == doctest::Approx(1 - 0.05));
  CHECK(s.alpha_bar_at(0) == 1.0);
}

TEST_CASE("default schedule ends below 0.01 and is consistent bit for bit") {
  auto s = make_schedule(kDefaultSteps);
  CHECK(s.alpha_bar_at(500) < 0.01);
  for (int t = 1; t <= 500; ++t) {
    CHECK(s.beta_at(t) > 0);
    CHECK(s.beta_at(t) < 1);
    CHECK(s.alpha_bar_at(t) == s.alpha_bar_at(t - 1) * s.alpha_at(t));
    if (t > 1) CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
  }
}

TEST_CASE("schedule range checks") {
  CHECK_THROWS_AS(make_schedule(0), Error);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), Error);
  CHECK_THROWS_AS(make_schedule(10, 0.03, 0.02), Error);
  CHECK_THROWS_AS(make_schedule(10, 0.01, 1.0), Error);
}

TEST_CASE("forward_step examples") {
  auto s = make_schedule(3, 0.1, 0.19);
  Rng rng(1);
  auto x = random_tensor<double>(2, 5, rng);
  auto zero = Tensor<double>(2, 5);
  auto a = forward_step(x, 2, s, zero);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(a[i] == doctest::Approx(std::sqrt(s.alpha_at(2)) * x[i]));
  auto e = random_tensor<double>(2, 5, rng);
  auto b = forward_step(zero, 2, s, e);
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(b[i] == doctest::Approx(std::sqrt(s.beta_at(2)) * e[i]));

  auto one = Tensor<double>(1, 1, 1.0);
  CHECK(forward_step(one, 3, s, one)[0] == doctest::Approx(0.9 + std::sqrt(0.19)).epsilon(1e-5));
  CHECK(forward_step(one, 3, s, one)[0] == doctest::Approx(1.33589).epsilon(1e-5));
  CHECK_THROWS_AS(forward_step(one, 1, s, Tensor<double>(1, 2)), Error);
}

TEST_CASE("forward_jump limits") {
  auto s = make_schedule(10, 1e-8, 1e-4);
  Rng rng(2);
  auto x = random_tensor<double>(2, 4, rng);
  auto e = random_tensor<double>(2, 4, rng);
  auto y = forward_jump(x, 1, s, e);
  CHECK(max_abs_diff(x, y) < 1e-3);
  auto z = forward_jump(Tensor<double>(2, 4), 5, s, e);
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(z[i] == doctest::Approx(std::sqrt(1 - s.alpha_bar_at(5)) * e[i]));
}

TEST_CASE("iterated single steps equal the jump with the derived noise") {
  auto s = make_schedule(500);
  Rng rng(3);
  auto x0 = random_tensor<double>(2, 32, rng);
  auto ladder = build_noise_ladder(x0, s, rng);
  double worst = 0;
  for (int t = 1; t <= 500; ++t) {
    CHECK(ladder.state(t) == forward_step(ladder.state(t - 1), t, s, ladder.single_step[t - 1]));
    worst = std::max(worst, max_abs_diff(forward_jump(x0, t, s, ladder.multi_noise(t)), ladder.state(t)));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("derive_multistep_noise") {
  auto s = make_schedule(50);
  Rng rng(4);
  auto xt = random_tensor<double>(2, 8, rng);
  auto e = derive_multistep_noise(Tensor<double>(2, 8), xt, 7, s);
  for (std::size_t i = 0; i < xt.size(); ++i) CHECK(e[i] == doctest::Approx(xt[i] / std::sqrt(1 - s.alpha_bar_at(7))));
  auto x0 = random_tensor<double>(2, 8, rng);
  for (int t = 1; t <= 50; ++t) {
    CHECK(max_abs_diff(forward_jump(x0, t, s, derive_multistep_noise(x0, xt, t, s)), xt) < 1e-10);
  }
  CHECK_THROWS_AS(derive_multistep_noise(x0, xt, 0, s), Error);
}

TEST_CASE("derived multi-step noise is marginally standard normal") {
  auto s = make_schedule(100);
  Rng rng(5);
  auto x0 = random_tensor<double>(2, 6000, rng);
  auto ladder = build_noise_ladder(x0, s, rng);
  for (int t : {1, 10, 50, 100}) {
    const auto& e = ladder.multi_noise(t);
    double mean = 0, var = 0;
    for (double v : e.values()) mean += v;
    mean /= double(e.size());
    for (double v : e.values()) var += (v - mean) * (v - mean);
    var /= double(e.size());
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1) < 0.05);
  }
}

TEST_CASE("ladder determinism") {
  auto s = make_schedule(20);
  Rng r1(9), r2(9);
  Tensor<float> x0(2, 5, 0.5f);
  auto a = build_noise_ladder(x0, s, r1);
  auto b = build_noise_ladder(x0, s, r2);
  CHECK(a.states == b.states);
  CHECK(a.multi_step == b.multi_step);
}

TEST_CASE("ddpm_reverse_step examples") {
  auto s = make_schedule(100);
  Rng rng(6);
  auto x0 = random_tensor<double>(2, 10, rng);
  auto eps = random_tensor<double>(2, 10, rng);
  auto zero = Tensor<double>(2, 10);
  auto x1 = forward_jump(x0, 1, s, eps);
  CHECK(max_abs_diff(ddpm_reverse_step(x1, eps, 1, s, zero), x0) < 1e-6);

  auto xt = random_tensor<double>(2, 10, rng);
  auto r = ddpm_reverse_step(xt, zero, 40, s, zero);
  for (std::size_t i = 0; i < xt.size(); ++i) CHECK(r[i] == doctest::Approx(xt[i] / std::sqrt(s.alpha_at(40))));

  // One forward step from x_0 then back with its own noise.
  auto y = forward_step(x0, 1, s, eps);
  CHECK(max_abs_diff(ddpm_reverse_step(y, eps, 1, s, zero), x0) < 1e-6);
}

TEST_CASE("ddim with the true noise inverts exactly") {
  auto s = make_schedule(500);
  Rng rng(7);
  auto x0 = random_tensor<double>(2, 10, rng);
  auto eps = random_tensor<double>(2, 10, rng);
  for (int t : {1, 37, 250, 500}) {
    CHECK(max_abs_diff(ddim_reverse_step(forward_jump(x0, t, s, eps), eps, t, 0, s), x0) < 1e-12);
  }
  // Chain of single steps with the (constant) true multi-step noise.
  auto x = forward_jump(x0, 500, s, eps);
  for (int t = 500; t >= 1; --t) x = ddim_reverse_step(x, eps, t, t - 1, s);
  CHECK(max_abs_diff(x, x0) < 1e-6);
  // Any stride.
  for (int n : {11, 26, 51}) {
    auto plan = make_step_plan(500, n);
    auto y = forward_jump(x0, 500, s, eps);
    for (std::size_t k = 0; k + 1 < plan.size(); ++k) y = ddim_reverse_step(y, eps, plan[k], plan[k + 1], s);
    CHECK(max_abs_diff(y, x0) < 1e-9);
  }
  CHECK_THROWS_AS(ddim_reverse_step(x0, eps, 5, 5, s), Error);
  CHECK_THROWS_AS(ddim_reverse_step(x0, eps, 5, 7, s), Error);
}

TEST_CASE("terminal states are close to standard normal") {
  auto s = make_schedule(500);
  Rng rng(8);
  Tensor<double> x0(2, 6000);
  for (auto& v : x0.values()) v = rng.uniform(-3, 3);
  auto ladder = build_noise_ladder(x0, s, rng);
  const auto& xT = ladder.state(500);
  double mean = 0, var = 0;
  for (double v : xT.values()) mean += v;
  mean /= double(xT.size());
  for (double v : xT.values()) var += (v - mean) * (v - mean);
  var /= double(xT.size());
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1) < 0.1);
}
