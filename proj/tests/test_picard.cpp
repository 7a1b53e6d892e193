#include <doctest.h>

#include <cmath>

#include "difflab/picard.hpp"

#include "difflab/nn.hpp"
#include "difflab/oracle.hpp"

using namespace difflab;

TEST_CASE("constant drift is exact after one sweep and static after two") {
  FunctionDrift drift(2, 4, [](const Vec&, int) { return Vec{1.0, -2.0}; });
  Trajectory traj = make_constant_trajectory(Vec{0.0, 0.0}, 4);
  Vec n1 = picard_iterate(traj, drift, 0.25);
  REQUIRE(n1.size() == 4);
  for (int t = 1; t <= 4; ++t) {
    double s = 0.25 * t;
    CHECK(traj.states[static_cast<std::size_t>(t)][0] == s);
    CHECK(traj.states[static_cast<std::size_t>(t)][1] == -2.0 * s);
    CHECK(n1[static_cast<std::size_t>(t - 1)] == doctest::Approx(s * s * 2.5).epsilon(1e-15));
  }
  Vec n2 = picard_iterate(traj, drift, 0.25);
  for (double v : n2) CHECK(v == 0.0);
  CHECK(traj.iteration == 2);
  CHECK_THROWS_AS(make_constant_trajectory(Vec{0.0}, 0), ContractViolation);
}

TEST_CASE("linear drift converges to the euler recurrence") {
  FunctionDrift drift(1, 4, [](const Vec& x, int) { return Vec{x[0]}; });
  Trajectory traj = make_constant_trajectory(Vec{1.0}, 4);
  picard_iterate(traj, drift, 0.25);
  // first sweep sees the constant init, so targets grow linearly
  for (int t = 1; t <= 4; ++t)
    CHECK(traj.states[static_cast<std::size_t>(t)][0] == 1.0 + 0.25 * t);
  for (int k = 0; k < 3; ++k) picard_iterate(traj, drift, 0.25);
  for (int t = 1; t <= 4; ++t)
    CHECK(traj.states[static_cast<std::size_t>(t)][0] ==
          doctest::Approx(std::pow(1.25, t)).epsilon(1e-15));
  Vec end = euler_rollout(drift, Vec{1.0}, 0.25);
  CHECK(traj.states[4][0] == end[0]);
}

TEST_CASE("k sweeps pin the first k steps to the sequential rollout bitwise") {
  const int T = 48;
  auto fn = [T](const Vec& x, int j) {
    return Vec{std::sin(x[0]) + static_cast<double>(j) / T};
  };
  FunctionDrift drift(1, T, fn);
  Trajectory traj = make_constant_trajectory(Vec{0.8}, T);
  double h = 1.0 / T;
  double x = 0.8;
  for (int k = 1; k <= 32; ++k) {
    picard_iterate(traj, drift, h);
    x += h * fn(Vec{x}, k - 1)[0];
    CHECK(traj.states[static_cast<std::size_t>(k)][0] == x);
  }
}

TEST_CASE("non-finite drift names the offending step") {
  FunctionDrift drift(1, 5, [](const Vec&, int j) {
    return Vec{j == 3 ? std::numeric_limits<double>::quiet_NaN() : 1.0};
  });
  Trajectory traj = make_constant_trajectory(Vec{0.0}, 5);
  CHECK_THROWS_WITH_AS(picard_iterate(traj, drift, 0.2), "picard: non-finite drift at step 3",
                       NumericError);
}

TEST_CASE("loose tolerance converges in one sweep") {
  OracleDenoiser oracle(two_mode_spec());
  NoiseSchedule sched = ddpm_schedule(16, 1e-3, 0.1);
  PicardConfig cfg;
  cfg.tol = 1e9;
  SampleResult res = parallel_sample(oracle, sched, cfg, 4, Rng(3));
  CHECK(res.report.converged);
  CHECK(res.report.iterations == 1);
  CHECK(res.report.nfe == 16);
  CHECK(res.report.peak_parallel == 16);
  CHECK(res.report.trace.size() == 1);
}

TEST_CASE("iteration cap reports non-convergence") {
  OracleDenoiser oracle(two_mode_spec());
  NoiseSchedule sched = ddpm_schedule(20, 1e-3, 0.1);
  PicardConfig cfg;
  cfg.tol = 1e-300;
  cfg.max_iters = 3;
  SampleResult res = parallel_sample(oracle, sched, cfg, 4, Rng(4));
  CHECK(!res.report.converged);
  CHECK(res.report.iterations == 3);
  CHECK(res.report.nfe == 60);
}

TEST_CASE("full refinement equals the sequential rollout at the sweep cap") {
  FunctionDenoiser zero(1, [](const Vec&, LogSnr) { return Vec{0.0}; });
  OracleDenoiser oracle(two_mode_spec());
  NoiseSchedule sched = ddpm_schedule(6, 1e-3, 0.1);
  PicardConfig cfg;
  cfg.tol = 1e-300;
  std::uint64_t seed = 5;
  SampleResult res = parallel_sample(oracle, sched, cfg, 1, Rng(seed), DriftKind::kDdpm);
  CHECK(res.report.iterations == 6);
  CHECK(res.report.converged);

  // rebuild the same noises and initial draw, then roll out sequentially
  DdpmDrift drift(oracle, sched, 1, Rng(seed).stream("ddpm-noise"));
  Vec x0{Rng(seed).stream("init").stream(std::uint64_t(0)).normal()};
  Vec end = euler_rollout(drift, x0, 1.0 / 6.0);
  CHECK(res.samples[0][0] == end[0]);
}

TEST_CASE("window equal to the horizon reproduces the full sweep") {
  OracleDenoiser oracle(two_mode_spec());
  NoiseSchedule sched = ddpm_schedule(24, 1e-3, 0.05);
  PicardConfig full;
  full.tol = 1e-10;
  PicardConfig win = full;
  win.window = 24;
  SampleResult a = parallel_sample(oracle, sched, full, 5, Rng(6));
  SampleResult b = sliding_window_sample(oracle, sched, win, 5, Rng(6));
  CHECK(a.report.iterations == b.report.iterations);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i] == b.samples[i]);
  CHECK(b.report.peak_parallel == 24);
}

TEST_CASE("unit window is the sequential integrator") {
  OracleDenoiser oracle(two_mode_spec());
  NoiseSchedule sched = ddpm_schedule(12, 1e-3, 0.1);
  PicardConfig cfg;
  cfg.window = 1;
  cfg.tol = 1e-12;
  std::uint64_t seed = 7;
  SampleResult res = sliding_window_sample(oracle, sched, cfg, 3, Rng(seed));
  CHECK(res.report.iterations == 12);
  CHECK(res.report.nfe == 12);
  CHECK(res.report.converged);
  CHECK(res.report.peak_parallel == 1);

  PfDrift drift(oracle, sched);
  double s_hi = sqrt_sigmoid(sched.alpha(12)), s_lo = sqrt_sigmoid(sched.alpha(0));
  for (std::size_t i = 0; i < 3; ++i) {
    Vec u0{Rng(seed).stream("init").stream(i).normal() / s_hi};
    Vec end = euler_rollout(drift, u0, 1.0 / 12.0);
    CHECK(res.samples[i][0] == s_lo * end[0]);
  }
}

TEST_CASE("init policies agree at the fixed point") {
  OracleDenoiser oracle(two_mode_spec());
  NoiseSchedule sched = ddpm_schedule(30, 1e-3, 0.05);
  PicardConfig c1;
  c1.tol = 1e-12;
  PicardConfig c2 = c1;
  c2.init = InitPolicy::kGaussianPerStep;
  SampleResult a = parallel_sample(oracle, sched, c1, 4, Rng(8));
  SampleResult b = parallel_sample(oracle, sched, c2, 4, Rng(8));
  CHECK(a.report.converged);
  CHECK(b.report.converged);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(a.samples[i][0] == doctest::Approx(b.samples[i][0]).epsilon(0.0).scale(0.0).epsilon(1e-4));
}

TEST_CASE("picard sweeps are threads-invariant bitwise") {
  MlpConfig mc;
  mc.data_dim = 1;
  mc.hidden = {16, 16};
  mc.embed_dim = 8;
  mc.conditioning = Conditioning::kLogSnr;
  Rng ir(9);
  MlpDenoiser model = MlpDenoiser::init(mc, uniform_logsnr_schedule(16, 15, -10), ir);
  PicardConfig c1;
  PicardConfig c4;
  c4.threads = 4;
  SampleResult a = parallel_sample(model, model.schedule, c1, 6, Rng(10));
  SampleResult b = parallel_sample(model, model.schedule, c4, 6, Rng(10));
  CHECK(a.report.iterations == b.report.iterations);
  CHECK(a.report.trace == b.report.trace);
  for (std::size_t i = 0; i < 6; ++i) CHECK(a.samples[i] == b.samples[i]);
}

TEST_CASE("per-sweep hook feeds the trace and the threshold scan") {
  OracleDenoiser oracle(two_mode_spec());
  NoiseSchedule sched = ddpm_schedule(10, 1e-3, 0.1);
  PicardConfig cfg;
  cfg.max_iters = 4;
  cfg.tol = 1e-300;
  std::vector<int> widths;
  auto hook = [&](int iter, const Eigen::MatrixXd& data_end) {
    widths.push_back(static_cast<int>(data_end.cols()));
    return 10.0 - iter;
  };
  SampleResult res = parallel_sample(oracle, sched, cfg, 3, Rng(11), DriftKind::kProbabilityFlow,
                                     hook);
  REQUIRE(res.report.mmd_trace.size() == 4);
  CHECK(res.report.mmd_trace[0] == 9.0);
  for (int w : widths) CHECK(w == 3);
  CHECK(iterations_to_threshold(res.report.mmd_trace, 7.5) == 3);
  CHECK(iterations_to_threshold(res.report.mmd_trace, 0.5) == -1);
  CHECK(iterations_to_threshold(Vec{5.0, 3.0, 1.0}, 3.0) == 2);
  CHECK(iterations_to_threshold(Vec{}, 1.0) == -1);
}

TEST_CASE("config guards reject bad windows") {
  OracleDenoiser oracle(two_mode_spec());
  NoiseSchedule sched = ddpm_schedule(8, 1e-3, 0.1);
  PicardConfig cfg;
  cfg.window = 9;
  CHECK_THROWS_AS(parallel_sample(oracle, sched, cfg, 2, Rng(1)), ContractViolation);
  PicardConfig w0;
  CHECK_THROWS_AS(sliding_window_sample(oracle, sched, w0, 2, Rng(1)), ContractViolation);
}
