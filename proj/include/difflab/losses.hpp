#pragma once

#include "difflab/nn.hpp"
#include "difflab/oracle.hpp"

namespace difflab {

// Overflow-safe log(1 + exp(v)).
double softplus(double v);

// Evenly spaced grid from lo to hi inclusive, n >= 2 points.
Vec uniform_grid(double lo, double hi, int n);

// Trapezoid weights for a strictly increasing grid.
Vec trapezoid_weights(const Vec& grid);

// Quadrature + Monte-Carlo settings of the log-likelihood-ratio estimator.
// Noise draws are keyed by node position, not node index, so two grids share
// draws exactly where their node locations coincide (common random numbers
// under window changes).
struct LlrConfig {
  Vec alpha_grid = uniform_grid(-10.0, 15.0, 64);
  int n_mc = 4;
  bool shared_noise = true;  // reuse one (eps, z_alpha) draw for both integrand terms

  void validate() const;
};

// Evaluation-grade settings: 256 nodes, 256 draws per node.
LlrConfig eval_llr_config();

// log p_zeta(x) - log p(x) through the denoiser gap at composed noise levels:
// 1/2 integral over alpha of E||eps - eps_hat(z_a, alpha)||^2
//                          - E||eps - b * eps_hat(z_a, beta)||^2
// with (beta, b) = compose_noise_levels(alpha, zeta), z_a = mix(x, eps, alpha).
// The density constant cancels between the terms. Throws NumericError naming
// the node if any integrand value is non-finite.
double estimate_llr(const DenoiserModel& model, const Vec& x, LogSnr zeta,
                    const LlrConfig& cfg, Rng rng);

// Truncated-window negative log likelihood: the alpha-term quadrature plus
// the Gaussian-baseline constant restricted to the same window. Absolute
// values depend on the window; only differences under one cfg are comparable.
struct NllResult {
  double nll = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  bool truncation_dependent = true;
};
NllResult nll_estimate(const DenoiserModel& model, const Vec& x, const LlrConfig& cfg, Rng rng);

enum class ZetaLaw { kUniform, kLogisticTruncated };

// Noise-level law for contrastive pairs. The logistic variant is centered at
// (lo+hi)/2 with scale (hi-lo)/8 and truncated to [lo, hi] by inverse CDF.
struct ZetaSampler {
  ZetaLaw law = ZetaLaw::kUniform;
  double lo = 6.0;
  double hi = 15.0;

  void validate() const;
  LogSnr sample(Rng& rng) const;
};

ZetaLaw zeta_law_from_string(const std::string& s);
std::string to_string(ZetaLaw law);

struct CdlItem {
  Vec x;
  double y = 1.0;  // +1: clean data, -1: drawn from p_zeta
  LogSnr zeta;
};

// Labeled contrastive batch: item i draws zeta, flips a fair coin, and on
// tails replaces data[i] with mix(data[i], eps, zeta). coin is injectable for
// tests; per-item draw order is fixed (zeta, coin, eps).
std::vector<CdlItem> make_cdl_batch(const std::vector<Vec>& data, const ZetaSampler& zetas,
                                    Rng rng, const std::function<bool(Rng&)>& coin = nullptr);

struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

// Per-item noise-level law for the MSE loss.
using AlphaSampler = std::function<LogSnr(Rng&)>;
AlphaSampler schedule_timestep_sampler(const NoiseSchedule& schedule);  // t uniform in 1..T
AlphaSampler fixed_alpha_sampler(double alpha);

// Denoising MSE: mean over the batch of ||eps - model(mix(x, eps, alpha))||^2
// with fresh (alpha, eps) per example.
double mse_loss_value(const DenoiserModel& model, const std::vector<Vec>& batch,
                      const AlphaSampler& alphas, Rng rng);
LossGrad mse_loss_grad(const MlpDenoiser& model, const std::vector<Vec>& batch,
                       const AlphaSampler& alphas, Rng rng);

// Contrastive diffusion loss: mean over items of softplus(y * LLR). The
// gradient is pathwise: the (eps, alpha) draws are frozen per item and the
// estimator graph is differentiated exactly.
double cdl_loss_value(const DenoiserModel& model, const std::vector<CdlItem>& items,
                      const LlrConfig& cfg, Rng rng, int threads = 1);
LossGrad cdl_loss_grad(const MlpDenoiser& model, const std::vector<CdlItem>& items,
                       const LlrConfig& cfg, Rng rng, int threads = 1);

enum class TrainMode { kMseOnly, kCdlOnly, kJoint };

TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::kMseOnly;
  double lambda = 1.0;  // joint loss = mse + lambda * cdl
  AdamConfig adam;
  LlrConfig llr;
  ZetaSampler zeta;
  int cdl_batch = 8;  // contrastive items per step, taken from the batch head
  int threads = 1;

  void validate() const;
};

struct StepStats {
  double mse = 0.0;
  double cdl = 0.0;
  double total = 0.0;
};

// One optimizer step on `batch`: assembles the selected gradient (lambda == 0
// skips the contrastive path entirely, so joint(0) matches mse-only step for
// step), then adam_step + ema_update + model reload. params must hold the
// model's current flat parameters. Throws NumericError on non-finite loss.
StepStats combined_training_step(MlpDenoiser& model, Vec& params, AdamState& adam,
                                 EmaState& ema, const std::vector<Vec>& batch,
                                 const TrainConfig& cfg, Rng step_rng);

}  // namespace difflab
