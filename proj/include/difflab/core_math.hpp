#pragma once

#include <cmath>
#include <vector>

#include "difflab/common.hpp"

namespace difflab {

// Log signal-to-noise ratio of the variance-preserving channel
//   x_alpha = sqrt(sigmoid(alpha)) * x + sqrt(sigmoid(-alpha)) * eps.
// Values are clamped to [-36, 36] before any sigmoid/sqrt so both channel
// coefficients stay strictly positive in double precision.
inline constexpr double kAlphaClampMin = -36.0;
inline constexpr double kAlphaClampMax = 36.0;

struct LogSnr {
  double v = 0.0;
};

inline double clamp_alpha(double a) {
  if (a < kAlphaClampMin) return kAlphaClampMin;
  if (a > kAlphaClampMax) return kAlphaClampMax;
  return a;
}

inline LogSnr log_snr(double a) { return LogSnr{clamp_alpha(a)}; }

double sigmoid(double a);
double log_sigmoid(double a);
// log(1 - exp(x)) for x < 0.
double log1mexp(double x);
// logit(p) for p in (0,1); result clamped into the LogSnr range.
LogSnr logit_clamped(double p);

double sqrt_sigmoid(double a);  // sqrt(sigmoid(a)), stable at both clamp ends

// Forward noise channel; x and eps must have equal dimension.
Vec mix(const Vec& x, const Vec& eps, LogSnr alpha);

// Coefficients that re-express a denoiser of noisier data through the base
// denoiser: beta = sigmoid^-1(sigmoid(alpha) * sigmoid(zeta)) composed in the
// log domain, b = sqrt(sigmoid(-alpha) / sigmoid(-beta)) <= 1.
struct MixtureCoeffs {
  LogSnr beta;
  double b = 1.0;
};

MixtureCoeffs compose_noise_levels(LogSnr alpha, LogSnr zeta);

// EDM-style noise scale sigma = exp(-alpha/2); alpha = -2 ln(sigma).
double sigma_from_alpha(LogSnr alpha);
LogSnr alpha_from_sigma(double sigma);

// Discretization of the channel: alphas[t] for t = 0..T, strictly decreasing,
// index 0 = data end, index T = noise end, every entry inside the clamp range.
struct NoiseSchedule {
  std::vector<double> alphas;

  int steps() const { return static_cast<int>(alphas.size()) - 1; }
  double alpha(int t) const { return alphas[static_cast<std::size_t>(t)]; }

  // Fractional step index with schedule.alpha(time_from_alpha(a)) == a under
  // linear interpolation; clamped to [0, T] outside the schedule range.
  double time_from_alpha(double a) const;

  void validate() const;
};

// DDPM discrete schedule with linear beta ramp: abar_t = prod(1 - beta_s),
// alphas[t] = logit(abar_t); abar_0 = 1 clamps to the LogSnr max.
NoiseSchedule ddpm_schedule(int T, double beta_start, double beta_end);

// Uniform grid in log-SNR from alpha_hi (data end) down to alpha_lo.
NoiseSchedule uniform_logsnr_schedule(int T, double alpha_hi, double alpha_lo);

}  // namespace difflab
