#include <doctest.h>

#include <cmath>

#include "difflab/losses.hpp"

using namespace difflab;

namespace {

GaussianMixtureSpec standard_normal_spec() {
  GaussianMixtureSpec s;
  s.dim = 1;
  s.weights = {1.0};
  s.means = {Vec{0.0}};
  s.stddevs = {1.0};
  return s;
}

MlpDenoiser small_model(std::uint64_t seed, int data_dim = 1) {
  MlpConfig cfg;
  cfg.data_dim = data_dim;
  cfg.hidden = {12, 12};
  cfg.embed_dim = 8;
  cfg.conditioning = Conditioning::kLogSnr;
  Rng rng(seed);
  return MlpDenoiser::init(cfg, uniform_logsnr_schedule(16, 15, -10), rng);
}

}  // namespace

TEST_CASE("softplus covers both overflow regimes") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(softplus(-20.0) == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-13));
  CHECK(softplus(40.0) == doctest::Approx(40.0).epsilon(1e-15));
  CHECK(softplus(-800.0) == 0.0);
  CHECK(softplus(800.0) == 800.0);
}

TEST_CASE("uniform grid and trapezoid weights") {
  Vec g = uniform_grid(-1.0, 3.0, 5);
  CHECK(g.front() == -1.0);
  CHECK(g.back() == 3.0);
  CHECK(g[2] == doctest::Approx(1.0).epsilon(1e-15));
  Vec w = trapezoid_weights(g);
  double sum = 0.0;
  for (double v : w) sum += v;
  CHECK(sum == doctest::Approx(4.0).epsilon(1e-14));

  Vec w2 = trapezoid_weights(Vec{0.0, 1.0, 3.0});
  CHECK(w2[0] == 0.5);
  CHECK(w2[1] == 1.5);
  CHECK(w2[2] == 1.0);

  CHECK_THROWS_AS(uniform_grid(1.0, 1.0, 4), ContractViolation);
  CHECK_THROWS_AS(uniform_grid(0.0, 1.0, 1), ContractViolation);
}

TEST_CASE("llr config validation") {
  LlrConfig cfg;
  cfg.validate();
  cfg.n_mc = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg = LlrConfig{};
  cfg.alpha_grid = {0.0, 0.0};
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg.alpha_grid = {-50.0, 0.0};
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
}

TEST_CASE("llr vanishes identically when the gap sits at the clamp top") {
  LlrConfig cfg;
  cfg.alpha_grid = uniform_grid(-8.0, 12.0, 24);
  cfg.n_mc = 3;
  MlpDenoiser model = small_model(21);
  Rng rng(5);
  CHECK(estimate_llr(model, Vec{0.4}, log_snr(kAlphaClampMax), cfg, rng) == 0.0);
  OracleDenoiser oracle(two_mode_spec());
  CHECK(estimate_llr(oracle, Vec{-3.0}, log_snr(kAlphaClampMax), cfg, rng) == 0.0);
}

TEST_CASE("llr draws are keyed by node position, not grid construction") {
  OracleDenoiser oracle(two_mode_spec());
  LlrConfig a;
  a.alpha_grid = uniform_grid(-10.0, 15.0, 51);
  a.n_mc = 2;
  LlrConfig b = a;
  // rebuild the same node locations by a different arithmetic route
  for (std::size_t i = 0; i < b.alpha_grid.size(); ++i)
    b.alpha_grid[i] = -10.0 + 0.5 * static_cast<double>(i);
  Rng rng(9);
  double va = estimate_llr(oracle, Vec{0.7}, log_snr(7.0), a, rng);
  double vb = estimate_llr(oracle, Vec{0.7}, log_snr(7.0), b, rng);
  CHECK(va == vb);
}

TEST_CASE("llr of the oracle approaches the closed-form density gap") {
  GaussianMixtureSpec spec = two_mode_spec();
  OracleDenoiser oracle(spec);
  LlrConfig cfg = eval_llr_config();
  Rng rng(31);
  for (double zeta : {6.0, 8.0}) {
    for (double x : {0.5, -1.25, 4.0}) {
      double target = noisy_log_density(spec, Vec{x}, log_snr(zeta)) -
                      noisy_log_density(spec, Vec{x}, log_snr(kAlphaClampMax));
      double got = estimate_llr(oracle, Vec{x}, log_snr(zeta), cfg, rng.stream(size_t(x * 8)));
      CHECK(std::fabs(got - target) < 0.02);
    }
  }
}

TEST_CASE("nll differences recover the standard-normal log density") {
  GaussianMixtureSpec spec = standard_normal_spec();
  OracleDenoiser oracle(spec);
  LlrConfig cfg = eval_llr_config();
  Rng rng(17);
  NllResult a = nll_estimate(oracle, Vec{0.3}, cfg, rng.stream("a"));
  NllResult b = nll_estimate(oracle, Vec{1.7}, cfg, rng.stream("b"));
  CHECK(a.truncation_dependent);
  CHECK(a.window_lo == cfg.alpha_grid.front());
  CHECK(a.window_hi == cfg.alpha_grid.back());
  double target = 0.5 * (0.3 * 0.3 - 1.7 * 1.7);
  CHECK(std::fabs((a.nll - b.nll) - target) < 0.05);
  // absolute value on a wide window matches x^2/2 + log(2 pi)/2
  double expect = 0.5 * 0.3 * 0.3 + 0.5 * std::log(2.0 * 3.14159265358979323846);
  CHECK(std::fabs(a.nll - expect) < 0.05);
}

TEST_CASE("zeta sampler respects bounds and laws") {
  Rng rng(3);
  ZetaSampler u;
  double sum = 0.0;
  for (int i = 0; i < 4000; ++i) {
    LogSnr z = u.sample(rng);
    CHECK(z.v >= 6.0);
    CHECK(z.v <= 15.0);
    sum += z.v;
  }
  CHECK(sum / 4000 == doctest::Approx(10.5).epsilon(0.01));

  ZetaSampler l;
  l.law = ZetaLaw::kLogisticTruncated;
  double lsum = 0.0;
  for (int i = 0; i < 4000; ++i) {
    LogSnr z = l.sample(rng);
    CHECK(z.v >= 6.0);
    CHECK(z.v <= 15.0);
    lsum += z.v;
  }
  CHECK(lsum / 4000 == doctest::Approx(10.5).epsilon(0.02));

  ZetaSampler bad;
  bad.lo = 5.0;
  bad.hi = 5.0;
  Rng r2(1);
  CHECK_THROWS_AS(bad.sample(r2), ContractViolation);
}

TEST_CASE("zeta law string round trip") {
  CHECK(zeta_law_from_string(to_string(ZetaLaw::kUniform)) == ZetaLaw::kUniform);
  CHECK(zeta_law_from_string(to_string(ZetaLaw::kLogisticTruncated)) ==
        ZetaLaw::kLogisticTruncated);
  CHECK_THROWS_AS(zeta_law_from_string("cauchy"), ConfigError);
}

TEST_CASE("cdl batches follow the injected coin") {
  std::vector<Vec> data{{0.5}, {-2.0}, {3.5}};
  ZetaSampler zs;
  Rng rng(8);
  auto heads = [](Rng&) { return true; };
  auto items = make_cdl_batch(data, zs, rng, heads);
  REQUIRE(items.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(items[i].y == 1.0);
    CHECK(items[i].x == data[i]);
    CHECK(items[i].zeta.v >= 6.0);
    CHECK(items[i].zeta.v <= 15.0);
  }
  auto tails = [](Rng&) { return false; };
  auto noisy = make_cdl_batch(data, zs, rng, tails);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(noisy[i].y == -1.0);
    CHECK(noisy[i].x != data[i]);
    // zeta draw precedes the coin, so labels share the same zeta stream
    CHECK(noisy[i].zeta.v == items[i].zeta.v);
  }
}

TEST_CASE("fair coin balances labels") {
  std::vector<Vec> data(2000, Vec{1.0});
  ZetaSampler zs;
  auto items = make_cdl_batch(data, zs, Rng(99));
  int pos = 0;
  for (const auto& it : items) pos += it.y > 0.0;
  CHECK(pos > 880);
  CHECK(pos < 1120);
}

TEST_CASE("cdl loss is exactly log 2 for a zero model") {
  FunctionDenoiser zero(1, [](const Vec&, LogSnr) { return Vec{0.0}; });
  std::vector<Vec> data{{0.5}, {-2.0}, {3.5}, {0.1}, {1.0}};
  ZetaSampler zs;
  auto items = make_cdl_batch(data, zs, Rng(4));
  LlrConfig cfg;
  cfg.alpha_grid = uniform_grid(-8.0, 12.0, 16);
  cfg.n_mc = 2;
  double loss = cdl_loss_value(zero, items, cfg, Rng(5));
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("cdl loss value is threads-invariant bitwise") {
  OracleDenoiser oracle(two_mode_spec());
  std::vector<Vec> data{{0.5}, {-5.2}, {4.8}, {0.0}, {2.2}, {-1.0}, {6.0}};
  ZetaSampler zs;
  auto items = make_cdl_batch(data, zs, Rng(12));
  LlrConfig cfg;
  cfg.alpha_grid = uniform_grid(-8.0, 12.0, 16);
  cfg.n_mc = 2;
  double v1 = cdl_loss_value(oracle, items, cfg, Rng(6), 1);
  double v4 = cdl_loss_value(oracle, items, cfg, Rng(6), 4);
  CHECK(v1 == v4);
}

TEST_CASE("alpha samplers cover the schedule and fixed levels") {
  NoiseSchedule sched = ddpm_schedule(10, 1e-3, 0.2);
  AlphaSampler s = schedule_timestep_sampler(sched);
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    double a = s(rng).v;
    bool found = false;
    for (int t = 1; t <= 10; ++t) found = found || a == sched.alpha(t);
    CHECK(found);
  }
  AlphaSampler f = fixed_alpha_sampler(2.5);
  CHECK(f(rng).v == 2.5);
}

TEST_CASE("mse of the analytic denoiser at a fixed level is sigmoid") {
  GaussianMixtureSpec spec = standard_normal_spec();
  OracleDenoiser oracle(spec);
  Rng data_rng(40);
  std::vector<Vec> batch(6000);
  for (auto& p : batch) p = sample_from_spec(spec, data_rng);
  for (double a : {-2.0, 1.0}) {
    double loss = mse_loss_value(oracle, batch, fixed_alpha_sampler(a), Rng(41));
    CHECK(loss == doctest::Approx(sigmoid(a)).epsilon(0.06));
  }
}

TEST_CASE("zero model mse concentrates at the dimension") {
  FunctionDenoiser zero(2, [](const Vec&, LogSnr) { return Vec{0.0, 0.0}; });
  std::vector<Vec> batch(4000, Vec{0.3, -0.8});
  double loss = mse_loss_value(zero, batch, fixed_alpha_sampler(1.0), Rng(42));
  CHECK(loss == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("mse gradient matches finite differences") {
  MlpDenoiser model = small_model(50, 2);
  std::vector<Vec> batch{{0.5, -0.2}, {1.5, 0.8}, {-0.7, 0.1}, {0.0, -1.2}};
  AlphaSampler alphas = schedule_timestep_sampler(model.schedule);
  Rng rng(51);
  LossGrad g = mse_loss_grad(model, batch, alphas, rng);
  CHECK(g.loss == doctest::Approx(mse_loss_value(model, batch, alphas, rng)).epsilon(1e-12));

  Vec params = model.flatten_params();
  MlpDenoiser probe = model;
  const double h = 1e-5;
  std::size_t stride = std::max<std::size_t>(1, params.size() / 60);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); i += stride) {
    Vec p = params;
    p[i] = params[i] + h;
    probe.load_params(p);
    double up = mse_loss_value(probe, batch, alphas, rng);
    p[i] = params[i] - h;
    probe.load_params(p);
    double dn = mse_loss_value(probe, batch, alphas, rng);
    double fd = (up - dn) / (2.0 * h);
    worst = std::max(worst, std::fabs(g.grad[i] - fd) / std::max(1e-5, std::fabs(fd)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("cdl gradient matches finite differences") {
  MlpDenoiser model = small_model(60, 1);
  std::vector<Vec> data{{0.5}, {-4.8}, {5.2}, {1.1}};
  ZetaSampler zs;
  auto items = make_cdl_batch(data, zs, Rng(61));
  LlrConfig cfg;
  cfg.alpha_grid = uniform_grid(-6.0, 12.0, 10);
  cfg.n_mc = 2;
  Rng rng(62);
  LossGrad g = cdl_loss_grad(model, items, cfg, rng);
  CHECK(g.loss == doctest::Approx(cdl_loss_value(model, items, cfg, rng)).epsilon(1e-10));

  Vec params = model.flatten_params();
  MlpDenoiser probe = model;
  const double h = 1e-5;
  std::size_t stride = std::max<std::size_t>(1, params.size() / 50);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); i += stride) {
    Vec p = params;
    p[i] = params[i] + h;
    probe.load_params(p);
    double up = cdl_loss_value(probe, items, cfg, rng);
    p[i] = params[i] - h;
    probe.load_params(p);
    double dn = cdl_loss_value(probe, items, cfg, rng);
    double fd = (up - dn) / (2.0 * h);
    worst = std::max(worst, std::fabs(g.grad[i] - fd) / std::max(1e-5, std::fabs(fd)));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("cdl gradient is threads-invariant bitwise") {
  MlpDenoiser model = small_model(70, 1);
  std::vector<Vec> data{{0.5}, {-4.8}, {5.2}, {1.1}, {0.0}};
  auto items = make_cdl_batch(data, ZetaSampler{}, Rng(71));
  LlrConfig cfg;
  cfg.alpha_grid = uniform_grid(-6.0, 12.0, 8);
  cfg.n_mc = 2;
  LossGrad g1 = cdl_loss_grad(model, items, cfg, Rng(72), 1);
  LossGrad g4 = cdl_loss_grad(model, items, cfg, Rng(72), 4);
  CHECK(g1.loss == g4.loss);
  CHECK(g1.grad == g4.grad);
}

TEST_CASE("joint training with zero weight equals the mse-only step bitwise") {
  MlpDenoiser m1 = small_model(80, 1);
  MlpDenoiser m2 = m1;
  std::vector<Vec> batch{{0.4}, {-5.0}, {5.1}, {2.0}};

  TrainConfig mse_cfg;
  mse_cfg.mode = TrainMode::kMseOnly;
  TrainConfig joint_cfg;
  joint_cfg.mode = TrainMode::kJoint;
  joint_cfg.lambda = 0.0;
  joint_cfg.llr.alpha_grid = uniform_grid(-6.0, 12.0, 8);
  joint_cfg.llr.n_mc = 2;

  Vec p1 = m1.flatten_params(), p2 = m2.flatten_params();
  AdamState a1 = AdamState::zeros(p1.size()), a2 = AdamState::zeros(p2.size());
  EmaState e1 = EmaState::from_params(0.99, p1), e2 = EmaState::from_params(0.99, p2);

  StepStats s1 = combined_training_step(m1, p1, a1, e1, batch, mse_cfg, Rng(81));
  StepStats s2 = combined_training_step(m2, p2, a2, e2, batch, joint_cfg, Rng(81));
  CHECK(s1.mse == s2.mse);
  CHECK(s2.cdl == 0.0);
  CHECK(s1.total == s2.total);
  CHECK(p1 == p2);
  CHECK(e1.shadow == e2.shadow);
}

TEST_CASE("cdl-only training reports the contrastive loss alone") {
  MlpDenoiser model = small_model(90, 1);
  std::vector<Vec> batch{{0.4}, {-5.0}, {5.1}};
  TrainConfig cfg;
  cfg.mode = TrainMode::kCdlOnly;
  cfg.llr.alpha_grid = uniform_grid(-6.0, 12.0, 8);
  cfg.llr.n_mc = 2;
  Vec p = model.flatten_params();
  AdamState a = AdamState::zeros(p.size());
  EmaState e = EmaState::from_params(0.99, p);
  StepStats s = combined_training_step(model, p, a, e, batch, cfg, Rng(91));
  CHECK(s.mse == 0.0);
  CHECK(s.cdl > 0.0);
  CHECK(s.total == s.cdl);
  CHECK(a.t == 1);
}

TEST_CASE("train mode strings round trip") {
  for (TrainMode m : {TrainMode::kMseOnly, TrainMode::kCdlOnly, TrainMode::kJoint})
    CHECK(train_mode_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(train_mode_from_string("both"), ConfigError);
}
