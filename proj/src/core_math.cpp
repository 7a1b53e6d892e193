#include "difflab/core_math.hpp"

#include <algorithm>
#include <cstdio>

namespace difflab {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  double e = std::exp(a);
  return e / (1.0 + e);
}

double log_sigmoid(double a) {
  if (a >= 0.0) return -std::log1p(std::exp(-a));
  return a - std::log1p(std::exp(a));
}

double log1mexp(double x) {
  require(x < 0.0, "log1mexp: argument must be negative");
  static const double kLn2 = 0.6931471805599453;
  if (x > -kLn2) return std::log(-std::expm1(x));
  return std::log1p(-std::exp(x));
}

LogSnr logit_clamped(double p) {
  require(p > 0.0 && p < 1.0, "logit: p must lie in (0,1)");
  return log_snr(std::log(p) - std::log1p(-p));
}

double sqrt_sigmoid(double a) { return std::exp(0.5 * log_sigmoid(a)); }

Vec mix(const Vec& x, const Vec& eps, LogSnr alpha) {
  require(x.size() == eps.size(), "mix: x and eps dimension mismatch");
  double cs = sqrt_sigmoid(alpha.v);
  double cn = sqrt_sigmoid(-alpha.v);
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = cs * x[i] + cn * eps[i];
  return out;
}

MixtureCoeffs compose_noise_levels(LogSnr alpha, LogSnr zeta) {
  // zeta at the clamp top is noiseless composition: identity, exactly.
  if (zeta.v >= kAlphaClampMax) return MixtureCoeffs{alpha, 1.0};
  // log sigmoid(beta) = log sigmoid(alpha) + log sigmoid(zeta); with both
  // arguments clamped the sum stays strictly negative, so log1mexp is safe.
  double lsb = log_sigmoid(alpha.v) + log_sigmoid(zeta.v);
  double log_sig_neg_beta = log1mexp(lsb);
  double beta = lsb - log_sig_neg_beta;
  double b = std::exp(0.5 * (log_sigmoid(-alpha.v) - log_sig_neg_beta));
  return MixtureCoeffs{log_snr(beta), std::min(b, 1.0)};
}

double sigma_from_alpha(LogSnr alpha) { return std::exp(-0.5 * alpha.v); }

LogSnr alpha_from_sigma(double sigma) {
  require(sigma > 0.0, "alpha_from_sigma: sigma must be positive");
  return log_snr(-2.0 * std::log(sigma));
}

double NoiseSchedule::time_from_alpha(double a) const {
  const auto& al = alphas;
  if (a >= al.front()) return 0.0;
  if (a <= al.back()) return static_cast<double>(steps());
  // alphas is strictly decreasing: binary search for the bracketing segment.
  std::size_t lo = 0, hi = al.size() - 1;
  while (hi - lo > 1) {
    std::size_t mid = (lo + hi) / 2;
    if (al[mid] > a)
      lo = mid;
    else
      hi = mid;
  }
  double u = (al[lo] - a) / (al[lo] - al[hi]);
  return static_cast<double>(lo) + u;
}

void NoiseSchedule::validate() const {
  if (alphas.size() < 2) throw ConfigError("schedule needs at least one step");
  for (std::size_t t = 0; t + 1 < alphas.size(); ++t) {
    if (!(alphas[t] > alphas[t + 1]))
      throw ConfigError("schedule alphas must be strictly decreasing");
  }
  if (alphas.front() > kAlphaClampMax || alphas.back() < kAlphaClampMin)
    throw ConfigError("schedule alphas exceed the LogSnr clamp range");
}

NoiseSchedule ddpm_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw ConfigError("ddpm schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start < 1.0 && beta_end > 0.0 && beta_end < 1.0))
    throw ConfigError("ddpm schedule: betas must lie in (0,1)");
  NoiseSchedule s;
  s.alphas.resize(static_cast<std::size_t>(T) + 1);
  s.alphas[0] = kAlphaClampMax;  // abar_0 = 1
  double log_abar = 0.0;
  for (int t = 1; t <= T; ++t) {
    double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
    double beta = beta_start + (beta_end - beta_start) * frac;
    log_abar += std::log1p(-beta);
    s.alphas[static_cast<std::size_t>(t)] = clamp_alpha(log_abar - log1mexp(log_abar));
  }
  s.validate();
  return s;
}

NoiseSchedule uniform_logsnr_schedule(int T, double alpha_hi, double alpha_lo) {
  if (T < 1) throw ConfigError("uniform schedule: T must be >= 1");
  if (!(alpha_hi > alpha_lo)) throw ConfigError("uniform schedule: alpha_hi must exceed alpha_lo");
  NoiseSchedule s;
  s.alphas.resize(static_cast<std::size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) {
    double u = static_cast<double>(t) / T;
    s.alphas[static_cast<std::size_t>(t)] = clamp_alpha(alpha_hi + (alpha_lo - alpha_hi) * u);
  }
  s.validate();
  return s;
}

}  // namespace difflab
