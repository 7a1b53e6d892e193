#pragma once

#include "difflab/denoiser.hpp"
#include "difflab/rng.hpp"

namespace difflab {

// Isotropic Gaussian mixture with known parameters. Everything downstream of
// it (noisy density, score, optimal denoiser) is closed-form, which makes it
// the reference implementation the learned models are tested against.
struct GaussianMixtureSpec {
  int dim = 1;
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<double> stddevs;  // one isotropic stddev per component

  std::size_t components() const { return weights.size(); }
  void validate() const;
};

// Two modes at +-5 with unit variance, equal weight; the 1D study spec.
GaussianMixtureSpec two_mode_spec();

// Mixture of the channel output at level alpha: component means scale by
// sqrt(sigmoid(alpha)), variances become sigmoid(alpha)*sd^2 + sigmoid(-alpha).
GaussianMixtureSpec noised_spec(const GaussianMixtureSpec& spec, LogSnr alpha);

double noisy_log_density(const GaussianMixtureSpec& spec, const Vec& x, LogSnr alpha);

// grad_x log p_alpha(x), via component responsibilities (log-sum-exp).
Vec analytic_score(const GaussianMixtureSpec& spec, const Vec& x, LogSnr alpha);

// Optimal denoiser eps_hat(x, alpha) = -sqrt(sigmoid(-alpha)) * score.
Vec analytic_denoiser(const GaussianMixtureSpec& spec, const Vec& x, LogSnr alpha);

// Evaluates the denoiser of p_alpha-as-data at level alpha_bar two ways:
// directly through noised_spec, and as b * eps_hat(x, beta) with (beta, b)
// from compose_noise_levels(alpha_bar, alpha). Asserts both sides agree to
// tol and returns the common value.
Vec denoiser_composition(const GaussianMixtureSpec& spec, const Vec& x, LogSnr alpha_bar,
                         LogSnr alpha, double tol = 1e-9);

Vec sample_from_spec(const GaussianMixtureSpec& spec, Rng& rng);

// DenoiserModel adapter over the closed-form optimal denoiser.
struct OracleDenoiser final : DenoiserModel {
  GaussianMixtureSpec spec;

  explicit OracleDenoiser(GaussianMixtureSpec s) : spec(std::move(s)) { spec.validate(); }

  int dim() const override { return spec.dim; }
  void eval_batch(const double* X, int n, LogSnr alpha, double* out) const override;
};

// |model - oracle| denoiser error over a (time x space) grid.
// t_grid holds fractional schedule indices; alpha_grid the matching levels.
struct ErrorField {
  std::vector<double> t_grid;
  std::vector<double> alpha_grid;
  std::vector<Vec> x_grid;
  std::vector<std::vector<double>> values;  // [t][x], L2 norm of the residual
};

std::vector<double> make_t_grid(const NoiseSchedule& schedule, int max_rows);
std::vector<Vec> make_x_grid_1d(double lo, double hi, int n);

ErrorField compute_error_field(const DenoiserModel& model, const GaussianMixtureSpec& spec,
                               const NoiseSchedule& schedule, const std::vector<Vec>& x_grid,
                               const std::vector<double>& t_grid, int threads = 1);

}  // namespace difflab
