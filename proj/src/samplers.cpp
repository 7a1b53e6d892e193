#include "difflab/samplers.hpp"

#include <chrono>
#include <cmath>

namespace difflab {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Coefficients of the ancestral posterior step t -> t-1, computed in the
// log-sigmoid domain so both ends of the schedule stay stable.
struct DdpmStep {
  double inv_sqrt_a;  // 1 / sqrt(abar_t / abar_{t-1})
  double coef_eps;    // beta_t / sqrt(1 - abar_t)
  double noise_std;   // sqrt(beta_t * (1 - abar_{t-1}) / (1 - abar_t)); 0 at t=1
};

DdpmStep ddpm_step_coeffs(const NoiseSchedule& schedule, int t) {
  double ls_t = log_sigmoid(schedule.alpha(t));
  double ls_p = log_sigmoid(schedule.alpha(t - 1));
  double log_a = ls_t - ls_p;
  double beta = -std::expm1(log_a);
  double ls_nt = log_sigmoid(-schedule.alpha(t));
  double ls_np = log_sigmoid(-schedule.alpha(t - 1));
  DdpmStep s;
  s.inv_sqrt_a = std::exp(-0.5 * log_a);
  s.coef_eps = beta * std::exp(-0.5 * ls_nt);
  s.noise_std = t == 1 ? 0.0 : std::sqrt(beta * std::exp(ls_np - ls_nt));
  return s;
}

Eigen::MatrixXd init_noise(int d, int n, Rng& rng, std::vector<Rng>& streams) {
  streams.clear();
  streams.reserve(static_cast<std::size_t>(n));
  Eigen::MatrixXd X(d, n);
  for (int i = 0; i < n; ++i) {
    streams.push_back(rng.stream(static_cast<std::uint64_t>(i)));
    for (int c = 0; c < d; ++c) X(c, i) = streams.back().normal();
  }
  return X;
}

void capture(std::vector<std::vector<Vec>>* traj, const Eigen::MatrixXd& X) {
  if (!traj) return;
  for (int i = 0; i < X.cols(); ++i) {
    Vec v(static_cast<std::size_t>(X.rows()));
    Eigen::VectorXd::Map(v.data(), X.rows()) = X.col(i);
    (*traj)[static_cast<std::size_t>(i)].push_back(std::move(v));
  }
}

std::vector<Vec> to_samples(const Eigen::MatrixXd& X) {
  std::vector<Vec> out(static_cast<std::size_t>(X.cols()));
  for (int i = 0; i < X.cols(); ++i) {
    out[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(X.rows()));
    Eigen::VectorXd::Map(out[static_cast<std::size_t>(i)].data(), X.rows()) = X.col(i);
  }
  return out;
}

void eval_model(const DenoiserModel& model, const Eigen::MatrixXd& X, LogSnr alpha,
                Eigen::MatrixXd& out) {
  out.resize(X.rows(), X.cols());
  model.eval_batch(X.data(), static_cast<int>(X.cols()), alpha, out.data());
}

}  // namespace

Vec score_from_model(const DenoiserModel& model, const Vec& x, LogSnr alpha) {
  Vec eps = model.eval(x, alpha);
  double inv = std::exp(-0.5 * log_sigmoid(-alpha.v));
  for (double& v : eps) v *= -inv;
  return eps;
}

SampleResult ddpm_ancestral_sample(const DenoiserModel& model, const NoiseSchedule& schedule,
                                   int n, Rng rng, bool keep_trajectories) {
  schedule.validate();
  require(n >= 0, "ddpm_ancestral_sample: negative count");
  auto t0 = Clock::now();
  int d = model.dim();
  int T = schedule.steps();
  SampleResult res;
  if (keep_trajectories) res.trajectories.resize(static_cast<std::size_t>(n));
  std::vector<Rng> streams;
  Eigen::MatrixXd X = init_noise(d, n, rng, streams);
  auto* traj = keep_trajectories ? &res.trajectories : nullptr;
  capture(traj, X);
  Eigen::MatrixXd eps_hat;
  for (int t = T; t >= 1; --t) {
    DdpmStep s = ddpm_step_coeffs(schedule, t);
    eval_model(model, X, log_snr(schedule.alpha(t)), eps_hat);
    X = s.inv_sqrt_a * (X - s.coef_eps * eps_hat);
    if (s.noise_std != 0.0)
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) X(c, i) += s.noise_std * streams[static_cast<std::size_t>(i)].normal();
    capture(traj, X);
  }
  res.samples = to_samples(X);
  res.report.iterations = T;
  res.report.nfe = T;
  res.report.converged = true;
  res.report.wall_ms = elapsed_ms(t0);
  return res;
}

namespace {

SampleResult pf_integrate(const DenoiserModel& model, const NoiseSchedule& schedule,
                          Eigen::MatrixXd X, Stepper stepper, bool keep_trajectories) {
  auto t0 = Clock::now();
  int d = model.dim();
  require(static_cast<int>(X.rows()) == d, "pf_integrate: start points mismatch the model");
  int n = static_cast<int>(X.cols());
  int T = schedule.steps();
  SampleResult res;
  if (keep_trajectories) res.trajectories.resize(static_cast<std::size_t>(n));
  auto* traj = keep_trajectories ? &res.trajectories : nullptr;
  capture(traj, X);

  auto scale = [&](int t) { return sqrt_sigmoid(schedule.alpha(t)); };
  auto sig = [&](int t) { return sigma_from_alpha(log_snr(schedule.alpha(t))); };

  // u = x / sqrt(sigmoid(alpha)); integrate du/ds = eps_hat downward in s.
  Eigen::MatrixXd U = X / scale(T);
  Eigen::MatrixXd d1, d2, Up;
  std::int64_t nfe = 0;
  for (int t = T; t >= 1; --t) {
    double h = sig(t - 1) - sig(t);
    eval_model(model, (scale(t) * U).eval(), log_snr(schedule.alpha(t)), d1);
    nfe += 1;
    if (stepper == Stepper::kHeun && t > 1) {
      Up = U + h * d1;
      eval_model(model, (scale(t - 1) * Up).eval(), log_snr(schedule.alpha(t - 1)), d2);
      nfe += 1;
      U += (0.5 * h) * (d1 + d2);
    } else {
      U += h * d1;
    }
    if (traj) capture(traj, (scale(t - 1) * U).eval());
  }
  res.samples = to_samples((scale(0) * U).eval());
  res.report.iterations = T;
  res.report.nfe = nfe;
  res.report.converged = true;
  res.report.wall_ms = elapsed_ms(t0);
  return res;
}

}  // namespace

SampleResult probability_flow_sample(const DenoiserModel& model, const NoiseSchedule& schedule,
                                     int n, Stepper stepper, Rng rng, bool keep_trajectories) {
  schedule.validate();
  require(n >= 0, "probability_flow_sample: negative count");
  std::vector<Rng> streams;
  Eigen::MatrixXd X = init_noise(model.dim(), n, rng, streams);
  return pf_integrate(model, schedule, std::move(X), stepper, keep_trajectories);
}

SampleResult probability_flow_from(const DenoiserModel& model, const NoiseSchedule& schedule,
                                   const std::vector<Vec>& x_init, Stepper stepper,
                                   bool keep_trajectories) {
  schedule.validate();
  int d = model.dim();
  Eigen::MatrixXd X(d, static_cast<int>(x_init.size()));
  for (std::size_t i = 0; i < x_init.size(); ++i) {
    require(static_cast<int>(x_init[i].size()) == d, "probability_flow_from: dimension mismatch");
    X.col(static_cast<int>(i)) = Eigen::VectorXd::Map(x_init[i].data(), d);
  }
  return pf_integrate(model, schedule, std::move(X), stepper, keep_trajectories);
}

void StochasticSamplerConfig::validate() const {
  require(s_churn >= 0.0, "StochasticSamplerConfig: s_churn must be nonnegative");
  if (s_noise < 0.9 || s_noise > 1.1)
    throw ConfigError("StochasticSamplerConfig: s_noise outside guard range [0.9, 1.1]");
  require(t_min >= 1 && t_min <= t_max, "StochasticSamplerConfig: bad churn window");
}

SampleResult stochastic_churn_sample(const DenoiserModel& model, const NoiseSchedule& schedule,
                                     const StochasticSamplerConfig& cfg, int n, Rng rng) {
  schedule.validate();
  cfg.validate();
  require(n >= 0, "stochastic_churn_sample: negative count");
  auto t0 = Clock::now();
  int d = model.dim();
  int T = schedule.steps();
  std::vector<Rng> streams;
  Eigen::MatrixXd X = init_noise(d, n, rng, streams);

  double gamma = std::min(cfg.s_churn / T, std::sqrt(2.0) - 1.0);
  auto scale = [&](double a) { return sqrt_sigmoid(a); };

  Eigen::MatrixXd U = X / scale(schedule.alpha(T));
  Eigen::MatrixXd d1;
  for (int t = T; t >= 1; --t) {
    double alpha = schedule.alpha(t);
    double s_cur = sigma_from_alpha(log_snr(alpha));
    if (gamma > 0.0 && t >= cfg.t_min && t <= std::min(cfg.t_max, T)) {
      double alpha_hat = alpha - 2.0 * std::log1p(gamma);
      double s_hat = sigma_from_alpha(log_snr(alpha_hat));
      double add = cfg.s_noise * std::sqrt(s_hat * s_hat - s_cur * s_cur);
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) U(c, i) += add * streams[static_cast<std::size_t>(i)].normal();
      alpha = alpha_hat;
      s_cur = s_hat;
    }
    double h = sigma_from_alpha(log_snr(schedule.alpha(t - 1))) - s_cur;
    eval_model(model, (scale(alpha) * U).eval(), log_snr(alpha), d1);
    U += h * d1;
  }
  SampleResult res;
  res.samples = to_samples((scale(schedule.alpha(0)) * U).eval());
  res.report.iterations = T;
  res.report.nfe = T;
  res.report.converged = true;
  res.report.wall_ms = elapsed_ms(t0);
  return res;
}

Vec DriftField::evaluate(const Vec& x, int j) const {
  require(static_cast<int>(x.size()) == dim(), "DriftField::evaluate: dimension mismatch");
  Eigen::MatrixXd X = Eigen::VectorXd::Map(x.data(), static_cast<int>(x.size()));
  Eigen::MatrixXd out;
  evaluate_batch(X, j, out);
  Vec v(x.size());
  Eigen::VectorXd::Map(v.data(), out.rows()) = out.col(0);
  return v;
}

PfDrift::PfDrift(const DenoiserModel& m, NoiseSchedule sched)
    : model(&m), schedule(std::move(sched)) {
  schedule.validate();
}

double PfDrift::sigma_at(int j) const {
  return sigma_from_alpha(log_snr(schedule.alpha(schedule.steps() - j)));
}

double PfDrift::scale_at(int j) const {
  return sqrt_sigmoid(schedule.alpha(schedule.steps() - j));
}

void PfDrift::evaluate_batch(const Eigen::MatrixXd& X, int j, Eigen::MatrixXd& out) const {
  int T = schedule.steps();
  require(j >= 0 && j < T, "PfDrift: solver index out of range");
  LogSnr alpha = log_snr(schedule.alpha(T - j));
  Eigen::MatrixXd Z = scale_at(j) * X;
  out.resize(X.rows(), X.cols());
  model->eval_batch(Z.data(), static_cast<int>(X.cols()), alpha, out.data());
  out *= T * (sigma_at(j + 1) - sigma_at(j));
  count(static_cast<int>(X.cols()));
}

DdpmDrift::DdpmDrift(const DenoiserModel& m, NoiseSchedule sched, int n, Rng rng)
    : model(&m), schedule(std::move(sched)) {
  schedule.validate();
  require(n >= 1, "DdpmDrift: need at least one sample");
  int T = schedule.steps();
  int d = model->dim();
  noise.assign(static_cast<std::size_t>(T), Eigen::MatrixXd());
  for (int j = 0; j + 1 < T; ++j) noise[static_cast<std::size_t>(j)].resize(d, n);
  // Per-sample streams; draw order is (step, coordinate) within each sample.
  for (int i = 0; i < n; ++i) {
    Rng s = rng.stream(static_cast<std::uint64_t>(i));
    for (int j = 0; j + 1 < T; ++j)
      for (int c = 0; c < d; ++c) noise[static_cast<std::size_t>(j)](c, i) = s.normal();
  }
}

void DdpmDrift::evaluate_batch(const Eigen::MatrixXd& X, int j, Eigen::MatrixXd& out) const {
  int T = schedule.steps();
  require(j >= 0 && j < T, "DdpmDrift: solver index out of range");
  int t = T - j;
  DdpmStep s = ddpm_step_coeffs(schedule, t);
  LogSnr alpha = log_snr(schedule.alpha(t));
  out.resize(X.rows(), X.cols());
  model->eval_batch(X.data(), static_cast<int>(X.cols()), alpha, out.data());
  out = s.inv_sqrt_a * (X - s.coef_eps * out);
  if (s.noise_std != 0.0) {
    require(noise[static_cast<std::size_t>(j)].cols() == X.cols(),
            "DdpmDrift: batch width does not match the pre-drawn noise");
    out += s.noise_std * noise[static_cast<std::size_t>(j)];
  }
  out = T * (out - X);
  count(static_cast<int>(X.cols()));
}

void FunctionDrift::evaluate_batch(const Eigen::MatrixXd& X, int j, Eigen::MatrixXd& out) const {
  require(j >= 0 && j < T, "FunctionDrift: solver index out of range");
  out.resize(X.rows(), X.cols());
  Vec x(static_cast<std::size_t>(d));
  for (int i = 0; i < X.cols(); ++i) {
    Eigen::VectorXd::Map(x.data(), d) = X.col(i);
    Vec v = fn(x, j);
    require(static_cast<int>(v.size()) == d, "FunctionDrift: callable changed dimension");
    out.col(i) = Eigen::VectorXd::Map(v.data(), d);
  }
  count(static_cast<int>(X.cols()));
}

Vec euler_rollout(const DriftField& drift, const Vec& x0, double step_size) {
  Vec x = x0;
  Eigen::MatrixXd X = Eigen::VectorXd::Map(x0.data(), static_cast<int>(x0.size()));
  Eigen::MatrixXd S;
  for (int j = 0; j < drift.steps(); ++j) {
    drift.evaluate_batch(X, j, S);
    X += step_size * S;
  }
  Eigen::VectorXd::Map(x.data(), X.rows()) = X.col(0);
  return x;
}

}  // namespace difflab
