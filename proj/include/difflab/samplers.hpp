#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>

#include "difflab/denoiser.hpp"
#include "difflab/rng.hpp"

namespace difflab {

// Score identity: grad_x log p_alpha(x) = -eps_hat(x, alpha) / sqrt(sigmoid(-alpha)).
Vec score_from_model(const DenoiserModel& model, const Vec& x, LogSnr alpha);

struct SamplerReport {
  int iterations = 0;        // sweeps (Picard) or schedule steps (sequential)
  std::int64_t nfe = 0;      // model evaluations per sample
  double wall_ms = 0.0;
  bool converged = true;
  int peak_parallel = 1;     // max concurrent model evaluations per sample in one sweep
  Vec trace;                 // per-iteration convergence norm (Picard only)
  Vec mmd_trace;             // per-iteration hook values when a hook is installed
};

struct SampleResult {
  std::vector<Vec> samples;
  // Optional per-sample paths, states[0] = noise end, states[T] = data end.
  std::vector<std::vector<Vec>> trajectories;
  SamplerReport report;
};

// Ancestral DDPM: x_T ~ N(0,I); for t = T..1 the posterior-mean step with
// fresh noise, none at the final step. Exactly T evaluations per sample.
SampleResult ddpm_ancestral_sample(const DenoiserModel& model, const NoiseSchedule& schedule,
                                   int n, Rng rng, bool keep_trajectories = false);

enum class Stepper { kEuler, kHeun };

// Deterministic probability-flow integration in u = x / sqrt(sigmoid(alpha))
// coordinates, where u = x0 + exp(-alpha/2) * eps and du/ds = eps_hat (s the
// EDM noise scale). Heun adds one corrector evaluation per step except the
// last: 2T - 1 evaluations per sample; Euler uses T.
SampleResult probability_flow_sample(const DenoiserModel& model, const NoiseSchedule& schedule,
                                     int n, Stepper stepper, Rng rng,
                                     bool keep_trajectories = false);

// Same integration from caller-provided data-space start points x_T.
SampleResult probability_flow_from(const DenoiserModel& model, const NoiseSchedule& schedule,
                                   const std::vector<Vec>& x_init, Stepper stepper,
                                   bool keep_trajectories = false);

struct StochasticSamplerConfig {
  double s_churn = 0.0;
  double s_noise = 1.0;  // guard range [0.9, 1.1]
  int t_min = 1;         // churn window in schedule step indices
  int t_max = 1 << 30;   // clamped to T

  void validate() const;
};

// Euler probability flow with churn: inside [t_min, t_max] the noise level is
// raised by alpha_hat = alpha - 2*log(1 + gamma), gamma = min(s_churn/T,
// sqrt(2)-1), with fresh noise scaled by s_noise, then one deterministic step
// from the raised level. s_churn = 0 draws no churn noise and matches the
// Euler sampler bitwise.
SampleResult stochastic_churn_sample(const DenoiserModel& model, const NoiseSchedule& schedule,
                                     const StochasticSamplerConfig& cfg, int n, Rng rng);

// Per-step update direction s(x, j) of the discretized reverse dynamics in
// solver time: j = 0 is the noise end, j = T the data end, and one refinement
// target obeys states[j+1] = states[j] + step_size * s(states[j], j) at the
// fixed point. Evaluations are deterministic given (X, j); the counter
// increments once per evaluated point.
struct DriftField {
  virtual ~DriftField() = default;
  virtual int dim() const = 0;
  virtual int steps() const = 0;
  // X is dim x n (one column per sample), out has the same shape.
  virtual void evaluate_batch(const Eigen::MatrixXd& X, int j, Eigen::MatrixXd& out) const = 0;

  Vec evaluate(const Vec& x, int j) const;

  std::int64_t nfe() const { return nfe_.load(); }
  void reset_nfe() const { nfe_.store(0); }

 protected:
  void count(int n) const { nfe_.fetch_add(n); }

 private:
  mutable std::atomic<std::int64_t> nfe_{0};
};

// Probability-flow drift in u coordinates: s(u, j) = T * (s_edm(j+1) -
// s_edm(j)) * eps_hat(x(u), alpha_j); step_size 1/T recovers the Euler step.
struct PfDrift final : DriftField {
  const DenoiserModel* model;
  NoiseSchedule schedule;

  PfDrift(const DenoiserModel& m, NoiseSchedule sched);

  int dim() const override { return model->dim(); }
  int steps() const override { return schedule.steps(); }
  void evaluate_batch(const Eigen::MatrixXd& X, int j, Eigen::MatrixXd& out) const override;

  double sigma_at(int j) const;  // EDM scale at solver index j
  double scale_at(int j) const;  // sqrt(sigmoid(alpha)) at solver index j
};

// Ancestral DDPM recast as a deterministic drift: per-step noises are drawn
// once per (sample, step) at construction and folded in as fixed offsets, so
// s(x, j) = T * (posterior_step(x, j) - x) and the fixed point is the
// sequential ancestral rollout under the same noises.
struct DdpmDrift final : DriftField {
  const DenoiserModel* model;
  NoiseSchedule schedule;
  std::vector<Eigen::MatrixXd> noise;  // per solver index, dim x n; empty at the final step

  DdpmDrift(const DenoiserModel& m, NoiseSchedule sched, int n, Rng rng);

  int dim() const override { return model->dim(); }
  int steps() const override { return schedule.steps(); }
  int samples() const { return static_cast<int>(noise.empty() ? 0 : noise.front().cols()); }
  void evaluate_batch(const Eigen::MatrixXd& X, int j, Eigen::MatrixXd& out) const override;
};

// Plain callable drift for tests.
struct FunctionDrift final : DriftField {
  int d;
  int T;
  std::function<Vec(const Vec&, int)> fn;

  FunctionDrift(int d_, int T_, std::function<Vec(const Vec&, int)> fn_)
      : d(d_), T(T_), fn(std::move(fn_)) {}

  int dim() const override { return d; }
  int steps() const override { return T; }
  void evaluate_batch(const Eigen::MatrixXd& X, int j, Eigen::MatrixXd& out) const override;
};

// Sequential reference: left-fold Euler rollout x_{j+1} = x_j + h * s(x_j, j).
Vec euler_rollout(const DriftField& drift, const Vec& x0, double step_size);

}  // namespace difflab
