#include <doctest.h>

#include <cmath>

#include "difflab/oracle.hpp"

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

}  // namespace

TEST_CASE("two-mode spec shape") {
  GaussianMixtureSpec s = two_mode_spec();
  s.validate();
  CHECK(s.dim == 1);
  CHECK(s.components() == 2);
  CHECK(s.weights[0] == 0.5);
  CHECK(s.means[0][0] == -s.means[1][0]);
  CHECK(std::fabs(s.means[0][0]) == 5.0);
  CHECK(s.stddevs[0] == 1.0);
}

TEST_CASE("spec validation rejects malformed mixtures") {
  GaussianMixtureSpec s = two_mode_spec();
  s.weights = {0.7, 0.7};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = two_mode_spec();
  s.stddevs[0] = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = two_mode_spec();
  s.means[0] = Vec{1.0, 2.0};
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("noised spec scales means and variances") {
  GaussianMixtureSpec s = two_mode_spec();
  GaussianMixtureSpec n = noised_spec(s, log_snr(0.0));
  CHECK(n.means[1][0] == doctest::Approx(5.0 * std::sqrt(0.5)).epsilon(1e-15));
  // var = sigmoid(a) * sd^2 + sigmoid(-a) = 1 for unit-variance components
  CHECK(n.stddevs[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("noisy log density at the clamp ends") {
  GaussianMixtureSpec s = two_mode_spec();
  CHECK(noisy_log_density(s, Vec{0.0}, log_snr(kAlphaClampMax)) ==
        doctest::Approx(-13.418938533204670).epsilon(1e-13));
  CHECK(noisy_log_density(s, Vec{0.0}, log_snr(kAlphaClampMin)) ==
        doctest::Approx(-0.91893853320467564).epsilon(1e-13));
}

TEST_CASE("analytic score matches finite differences of the log density") {
  GaussianMixtureSpec s = two_mode_spec();
  const double h = 1e-5;
  for (double a : {-6.0, 0.0, 4.0, 12.0}) {
    for (double x : {-6.5, -2.0, 0.3, 4.9, 7.0}) {
      double fd = (noisy_log_density(s, Vec{x + h}, log_snr(a)) -
                   noisy_log_density(s, Vec{x - h}, log_snr(a))) /
                  (2.0 * h);
      CHECK(analytic_score(s, Vec{x}, log_snr(a))[0] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("denoiser equals minus score scaled by the noise coefficient") {
  GaussianMixtureSpec s = two_mode_spec();
  for (double a : {-3.0, 1.0, 8.0}) {
    for (double x : {-4.0, 0.7}) {
      double sc = analytic_score(s, Vec{x}, log_snr(a))[0];
      double eh = analytic_denoiser(s, Vec{x}, log_snr(a))[0];
      CHECK(eh == doctest::Approx(-std::sqrt(sigmoid(-a)) * sc).epsilon(1e-13));
    }
  }
}

TEST_CASE("denoiser posterior mean agrees with direct Monte Carlo") {
  // z fixed; eps ~ N(0,1) proposal, weight p_data(x(eps)) on the channel slice.
  GaussianMixtureSpec s = two_mode_spec();
  Rng rng(2024);
  for (double a : {-1.0, 2.0}) {
    double ca = std::sqrt(sigmoid(a)), cb = std::sqrt(sigmoid(-a));
    for (double z : {-1.5, 3.0}) {
      double w1 = 0.0, we = 0.0, w2 = 0.0, w2e = 0.0, w2e2 = 0.0;
      const int n = 400000;
      for (int i = 0; i < n; ++i) {
        double eps = rng.normal();
        double x = (z - cb * eps) / ca;
        double w = std::exp(noisy_log_density(s, Vec{x}, log_snr(kAlphaClampMax)));
        w1 += w;
        we += w * eps;
        w2 += w * w;
        w2e += w * w * eps;
        w2e2 += w * w * eps * eps;
      }
      double mean = we / w1;
      // delta method for the self-normalized estimator
      double se = std::sqrt((w2e2 - 2.0 * mean * w2e + mean * mean * w2) / (w1 * w1));
      double tol = 3.0 * std::max(se, 1e-3);
      CHECK(std::fabs(analytic_denoiser(s, Vec{z}, log_snr(a))[0] - mean) < tol);
    }
  }
}

TEST_CASE("composition identity on hand-computed single-gaussian case") {
  GaussianMixtureSpec s = standard_normal_spec();
  // noised N(0,1) stays N(0,1); its denoiser at level 2 is sqrt(sigmoid(-2)) x
  Vec v = denoiser_composition(s, Vec{0.7}, log_snr(2.0), log_snr(3.0));
  CHECK(v[0] == doctest::Approx(0.24168043319813378).epsilon(1e-13));
}

TEST_CASE("composition identity sweep on the two-mode spec") {
  GaussianMixtureSpec s = two_mode_spec();
  for (double ab : {-4.0, 0.0, 3.0, 9.0}) {
    for (double gap : {1.0, 6.0, 14.0}) {
      for (double x : {-5.2, 0.4, 6.0}) {
        // throws if the two evaluations disagree beyond tol
        CHECK_NOTHROW(denoiser_composition(s, Vec{x}, log_snr(ab), log_snr(ab + gap), 1e-8));
      }
    }
  }
}

TEST_CASE("oracle denoiser adapter matches the free function") {
  GaussianMixtureSpec s = two_mode_spec();
  OracleDenoiser model(s);
  CHECK(model.dim() == 1);
  double xs[3] = {-2.0, 0.5, 4.0};
  double out[3];
  model.eval_batch(xs, 3, log_snr(1.5), out);
  for (int i = 0; i < 3; ++i)
    CHECK(out[i] == analytic_denoiser(s, Vec{xs[i]}, log_snr(1.5))[0]);
}

TEST_CASE("samples from the spec have the mixture moments") {
  GaussianMixtureSpec s = two_mode_spec();
  Rng rng(55);
  const int n = 20000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec p = sample_from_spec(s, rng);
    sum += p[0];
    sum2 += p[0] * p[0];
  }
  CHECK(std::fabs(sum / n) < 0.15);               // E x = 0
  CHECK(sum2 / n == doctest::Approx(26.0).epsilon(0.03));  // E x^2 = 25 + 1
}

TEST_CASE("error field of the oracle against itself is zero") {
  GaussianMixtureSpec s = two_mode_spec();
  OracleDenoiser model(s);
  NoiseSchedule sched = ddpm_schedule(50, 1e-4, 0.02);
  std::vector<Vec> xg = make_x_grid_1d(-8.0, 8.0, 17);
  std::vector<double> tg = make_t_grid(sched, 12);
  ErrorField f = compute_error_field(model, s, sched, xg, tg);
  CHECK(f.values.size() == tg.size());
  CHECK(f.x_grid.size() == 17);
  CHECK(f.alpha_grid.size() == tg.size());
  for (const auto& row : f.values)
    for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("error field is threads-invariant") {
  GaussianMixtureSpec s = two_mode_spec();
  // a deliberately wrong model so values are nonzero
  FunctionDenoiser model(1, [](const Vec& x, LogSnr) { return Vec{0.25 * x[0]}; });
  NoiseSchedule sched = ddpm_schedule(40, 1e-4, 0.02);
  std::vector<Vec> xg = make_x_grid_1d(-6.0, 6.0, 9);
  std::vector<double> tg = make_t_grid(sched, 8);
  ErrorField f1 = compute_error_field(model, s, sched, xg, tg, 1);
  ErrorField f4 = compute_error_field(model, s, sched, xg, tg, 4);
  for (std::size_t r = 0; r < f1.values.size(); ++r)
    for (std::size_t c = 0; c < f1.values[r].size(); ++c)
      CHECK(f1.values[r][c] == f4.values[r][c]);
}
