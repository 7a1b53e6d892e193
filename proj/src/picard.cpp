#include "difflab/picard.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>

namespace difflab {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

[[noreturn]] void throw_nonfinite_step(int j) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "picard: non-finite drift at step %d", j);
  throw NumericError(buf);
}

// Batched trajectory: states[t] holds one column per sample.
struct BatchTrajectory {
  int T = 0;
  std::vector<Eigen::MatrixXd> states;
};

// One Jacobi-style sweep over targets (lo, te]: drift at every source point
// of the current iterate first (concurrent, per-step slots), then left-fold
// prefix sums from the frozen states[lo]. Returns per-target max-over-samples
// norms ||new - old||^2 / dim, index t - lo - 1 for target t.
Vec window_sweep(BatchTrajectory& traj, const DriftField& drift, double step_size, int lo, int te,
                 int threads) {
  int d = static_cast<int>(traj.states[0].rows());
  std::vector<Eigen::MatrixXd> S(static_cast<std::size_t>(te - lo));
  parallel_for(te - lo, threads, [&](std::int64_t a, std::int64_t b) {
    for (std::int64_t k = a; k < b; ++k) {
      int j = lo + static_cast<int>(k);
      drift.evaluate_batch(traj.states[static_cast<std::size_t>(j)], j, S[static_cast<std::size_t>(k)]);
    }
  });
  for (int k = 0; k < te - lo; ++k)
    if (!S[static_cast<std::size_t>(k)].allFinite()) throw_nonfinite_step(lo + k);

  Vec norms(static_cast<std::size_t>(te - lo), 0.0);
  Eigen::MatrixXd P = traj.states[static_cast<std::size_t>(lo)];
  for (int t = lo + 1; t <= te; ++t) {
    P += step_size * S[static_cast<std::size_t>(t - lo - 1)];
    auto& cur = traj.states[static_cast<std::size_t>(t)];
    norms[static_cast<std::size_t>(t - lo - 1)] =
        (P - cur).colwise().squaredNorm().maxCoeff() / d;
    cur = P;
  }
  return norms;
}

struct Problem {
  std::unique_ptr<DriftField> drift;
  BatchTrajectory traj;
  bool u_space = false;  // probability-flow states live in u coordinates
  const NoiseSchedule* schedule = nullptr;
};

Problem setup(const DenoiserModel& model, const NoiseSchedule& schedule, const PicardConfig& cfg,
              int n, Rng& rng, DriftKind kind) {
  int d = model.dim();
  int T = schedule.steps();
  Problem p;
  p.schedule = &schedule;
  if (kind == DriftKind::kProbabilityFlow) {
    p.drift = std::make_unique<PfDrift>(model, schedule);
    p.u_space = true;
  } else {
    p.drift = std::make_unique<DdpmDrift>(model, schedule, n, rng.stream("ddpm-noise"));
  }
  Eigen::MatrixXd x0(d, n);
  Rng init = rng.stream("init");
  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    streams.push_back(init.stream(static_cast<std::uint64_t>(i)));
    for (int c = 0; c < d; ++c) x0(c, i) = streams.back().normal();
  }
  if (p.u_space) x0 /= sqrt_sigmoid(schedule.alpha(T));
  p.traj.T = T;
  p.traj.states.assign(static_cast<std::size_t>(T + 1), x0);
  if (cfg.init == InitPolicy::kGaussianPerStep) {
    // Draw order per sample: noise-end point first, then steps 1..T.
    for (int t = 1; t <= T; ++t) {
      auto& st = p.traj.states[static_cast<std::size_t>(t)];
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) st(c, i) = streams[static_cast<std::size_t>(i)].normal();
    }
  }
  return p;
}

Eigen::MatrixXd data_end(const Problem& p) {
  const auto& last = p.traj.states[static_cast<std::size_t>(p.traj.T)];
  if (!p.u_space) return last;
  return sqrt_sigmoid(p.schedule->alpha(0)) * last;
}

SampleResult finish(const Problem& p, SamplerReport report) {
  Eigen::MatrixXd X = data_end(p);
  SampleResult res;
  res.samples.resize(static_cast<std::size_t>(X.cols()));
  for (int i = 0; i < X.cols(); ++i) {
    res.samples[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(X.rows()));
    Eigen::VectorXd::Map(res.samples[static_cast<std::size_t>(i)].data(), X.rows()) = X.col(i);
  }
  res.report = std::move(report);
  return res;
}

double run_hook(const IterHook& hook, int iter, const Problem& p, SamplerReport& report) {
  if (!hook) return 0.0;
  double v = hook(iter, data_end(p));
  report.mmd_trace.push_back(v);
  return v;
}

}  // namespace

Trajectory make_constant_trajectory(const Vec& x0, int T) {
  require(T >= 1, "make_constant_trajectory: need at least one step");
  Trajectory traj;
  traj.T = T;
  traj.states.assign(static_cast<std::size_t>(T + 1), x0);
  return traj;
}

void PicardConfig::validate(int T) const {
  require(T >= 1, "PicardConfig: schedule must have at least one step");
  require(window >= 0 && window <= T, "PicardConfig: window must lie in [0, T]");
  require(threads >= 0, "PicardConfig: negative thread count");
}

Vec picard_iterate(Trajectory& traj, const DriftField& drift, double step_size) {
  require(traj.T >= 1 && traj.states.size() == static_cast<std::size_t>(traj.T + 1),
          "picard_iterate: malformed trajectory");
  int d = drift.dim();
  int T = traj.T;
  std::vector<Vec> S(static_cast<std::size_t>(T));
  for (int j = 0; j < T; ++j) {
    S[static_cast<std::size_t>(j)] = drift.evaluate(traj.states[static_cast<std::size_t>(j)], j);
    for (double v : S[static_cast<std::size_t>(j)])
      if (!std::isfinite(v)) throw_nonfinite_step(j);
  }
  Vec norms(static_cast<std::size_t>(T), 0.0);
  Vec P = traj.states[0];
  for (int t = 1; t <= T; ++t) {
    double diff2 = 0.0;
    auto& cur = traj.states[static_cast<std::size_t>(t)];
    for (int c = 0; c < d; ++c) {
      P[static_cast<std::size_t>(c)] +=
          step_size * S[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(c)];
      double delta = P[static_cast<std::size_t>(c)] - cur[static_cast<std::size_t>(c)];
      diff2 += delta * delta;
    }
    norms[static_cast<std::size_t>(t - 1)] = diff2 / d;
    cur = P;
  }
  traj.iteration += 1;
  return norms;
}

SampleResult parallel_sample(const DenoiserModel& model, const NoiseSchedule& schedule,
                             const PicardConfig& cfg, int n, Rng rng, DriftKind kind,
                             const IterHook& hook) {
  schedule.validate();
  int T = schedule.steps();
  cfg.validate(T);
  require(n >= 0, "parallel_sample: negative count");
  auto t0 = Clock::now();
  SamplerReport report;
  report.peak_parallel = T;
  if (n == 0) {
    SampleResult res;
    res.report = report;
    return res;
  }
  Problem p = setup(model, schedule, cfg, n, rng, kind);
  double tol = cfg.resolved_tol(model.dim());
  int max_iters = cfg.resolved_max_iters(T);
  double h = 1.0 / T;
  report.converged = false;
  while (report.iterations < max_iters) {
    Vec norms = window_sweep(p.traj, *p.drift, h, 0, T, cfg.threads);
    report.iterations += 1;
    double worst = 0.0;
    for (double v : norms) worst = std::max(worst, v);
    report.trace.push_back(worst);
    run_hook(hook, report.iterations, p, report);
    // Prefix exactness: after T sweeps the iterate is the sequential rollout.
    if (worst < tol || report.iterations >= T) {
      report.converged = true;
      break;
    }
  }
  report.nfe = p.drift->nfe() / n;
  report.wall_ms = elapsed_ms(t0);
  return finish(p, std::move(report));
}

SampleResult sliding_window_sample(const DenoiserModel& model, const NoiseSchedule& schedule,
                                   const PicardConfig& cfg, int n, Rng rng, DriftKind kind,
                                   const IterHook& hook) {
  schedule.validate();
  int T = schedule.steps();
  cfg.validate(T);
  require(cfg.window >= 1, "sliding_window_sample: window must be at least 1");
  require(n >= 0, "sliding_window_sample: negative count");
  auto t0 = Clock::now();
  SamplerReport report;
  report.peak_parallel = cfg.window;
  if (n == 0) {
    SampleResult res;
    res.report = report;
    return res;
  }
  Problem p = setup(model, schedule, cfg, n, rng, kind);
  double tol = cfg.resolved_tol(model.dim());
  int max_iters = cfg.max_iters > 0 ? cfg.max_iters : T;
  double h = 1.0 / T;
  report.converged = false;
  int lo = 0;
  while (report.iterations < max_iters) {
    int te = std::min(lo + cfg.window, T);
    Vec norms = window_sweep(p.traj, *p.drift, h, lo, te, cfg.threads);
    report.iterations += 1;
    double worst = 0.0;
    for (double v : norms) worst = std::max(worst, v);
    report.trace.push_back(worst);
    run_hook(hook, report.iterations, p, report);
    if (te == T && worst < tol) {
      report.converged = true;
      break;
    }
    lo += 1;  // leading step is exact: its prefix was frozen
    if (lo == T) {
      report.converged = true;
      break;
    }
  }
  report.nfe = p.drift->nfe() / n;
  report.wall_ms = elapsed_ms(t0);
  return finish(p, std::move(report));
}

int iterations_to_threshold(const Vec& mmd_trace, double threshold) {
  for (std::size_t i = 0; i < mmd_trace.size(); ++i)
    if (mmd_trace[i] <= threshold) return static_cast<int>(i) + 1;
  return -1;
}

}  // namespace difflab
