#include "difflab/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace difflab {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

// Per-component log densities of the noised mixture at x; returns their
// log-sum-exp and fills logs[] with the unnormalized terms.
double component_logs(const GaussianMixtureSpec& spec, const Vec& x, LogSnr alpha,
                      std::vector<double>& logs) {
  require(static_cast<int>(x.size()) == spec.dim, "oracle: x dimension mismatch");
  double sa = sigmoid(alpha.v);
  double sn = sigmoid(-alpha.v);
  double cs = sqrt_sigmoid(alpha.v);
  logs.resize(spec.components());
  for (std::size_t k = 0; k < spec.components(); ++k) {
    double var = sa * spec.stddevs[k] * spec.stddevs[k] + sn;
    double q = 0.0;
    for (int i = 0; i < spec.dim; ++i) {
      double d = x[static_cast<std::size_t>(i)] - cs * spec.means[k][static_cast<std::size_t>(i)];
      q += d * d;
    }
    logs[k] = std::log(spec.weights[k]) - 0.5 * q / var -
              0.5 * spec.dim * (kLog2Pi + std::log(var));
  }
  double m = *std::max_element(logs.begin(), logs.end());
  double s = 0.0;
  for (double l : logs) s += std::exp(l - m);
  return m + std::log(s);
}
}  // namespace

void GaussianMixtureSpec::validate() const {
  if (dim < 1) throw ConfigError("mixture: dim must be >= 1");
  if (weights.empty() || means.size() != weights.size() || stddevs.size() != weights.size())
    throw ConfigError("mixture: weights/means/stddevs must have equal, nonzero size");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw ConfigError("mixture: weights must be positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("mixture: weights must sum to 1");
  for (const auto& m : means)
    if (static_cast<int>(m.size()) != dim) throw ConfigError("mixture: mean dimension mismatch");
  for (double s : stddevs)
    if (!(s > 0.0)) throw ConfigError("mixture: stddevs must be positive");
}

GaussianMixtureSpec two_mode_spec() {
  GaussianMixtureSpec s;
  s.dim = 1;
  s.weights = {0.5, 0.5};
  s.means = {Vec{-5.0}, Vec{5.0}};
  s.stddevs = {1.0, 1.0};
  return s;
}

GaussianMixtureSpec noised_spec(const GaussianMixtureSpec& spec, LogSnr alpha) {
  spec.validate();
  double sa = sigmoid(alpha.v);
  double sn = sigmoid(-alpha.v);
  double cs = sqrt_sigmoid(alpha.v);
  GaussianMixtureSpec out = spec;
  for (std::size_t k = 0; k < spec.components(); ++k) {
    for (auto& m : out.means[k]) m *= cs;
    out.stddevs[k] = std::sqrt(sa * spec.stddevs[k] * spec.stddevs[k] + sn);
  }
  return out;
}

double noisy_log_density(const GaussianMixtureSpec& spec, const Vec& x, LogSnr alpha) {
  spec.validate();
  std::vector<double> logs;
  return component_logs(spec, x, alpha, logs);
}

Vec analytic_score(const GaussianMixtureSpec& spec, const Vec& x, LogSnr alpha) {
  spec.validate();
  std::vector<double> logs;
  double lse = component_logs(spec, x, alpha, logs);
  double sa = sigmoid(alpha.v);
  double sn = sigmoid(-alpha.v);
  double cs = sqrt_sigmoid(alpha.v);
  Vec score(x.size(), 0.0);
  for (std::size_t k = 0; k < spec.components(); ++k) {
    double resp = std::exp(logs[k] - lse);
    double var = sa * spec.stddevs[k] * spec.stddevs[k] + sn;
    for (std::size_t i = 0; i < x.size(); ++i) {
      score[i] += resp * (cs * spec.means[k][i] - x[i]) / var;
    }
  }
  return score;
}

Vec analytic_denoiser(const GaussianMixtureSpec& spec, const Vec& x, LogSnr alpha) {
  Vec score = analytic_score(spec, x, alpha);
  double cn = sqrt_sigmoid(-alpha.v);
  for (auto& s : score) s *= -cn;
  return score;
}

Vec denoiser_composition(const GaussianMixtureSpec& spec, const Vec& x, LogSnr alpha_bar,
                         LogSnr alpha, double tol) {
  Vec lhs = analytic_denoiser(noised_spec(spec, alpha), x, alpha_bar);
  MixtureCoeffs mc = compose_noise_levels(alpha_bar, alpha);
  Vec rhs = analytic_denoiser(spec, x, mc.beta);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    rhs[i] *= mc.b;
    max_abs = std::max(max_abs, std::abs(lhs[i] - rhs[i]));
  }
  if (!(max_abs <= tol))
    throw NumericError("denoiser_composition: identity violated beyond tolerance");
  return lhs;
}

Vec sample_from_spec(const GaussianMixtureSpec& spec, Rng& rng) {
  double u = rng.uniform();
  std::size_t k = 0;
  double acc = 0.0;
  for (; k < spec.components(); ++k) {
    acc += spec.weights[k];
    if (u < acc) break;
  }
  k = std::min(k, spec.components() - 1);
  Vec x(static_cast<std::size_t>(spec.dim));
  for (int i = 0; i < spec.dim; ++i)
    x[static_cast<std::size_t>(i)] =
        spec.means[k][static_cast<std::size_t>(i)] + spec.stddevs[k] * rng.normal();
  return x;
}

void OracleDenoiser::eval_batch(const double* X, int n, LogSnr alpha, double* out) const {
  Vec x(static_cast<std::size_t>(spec.dim));
  for (int i = 0; i < n; ++i) {
    std::copy(X + i * spec.dim, X + (i + 1) * spec.dim, x.begin());
    Vec e = analytic_denoiser(spec, x, alpha);
    std::copy(e.begin(), e.end(), out + i * spec.dim);
  }
}

std::vector<double> make_t_grid(const NoiseSchedule& schedule, int max_rows) {
  require(max_rows >= 2, "make_t_grid: need at least two rows");
  int T = schedule.steps();
  int rows = std::min(max_rows, T + 1);
  std::vector<double> t(static_cast<std::size_t>(rows));
  for (int i = 0; i < rows; ++i)
    t[static_cast<std::size_t>(i)] = static_cast<double>(i) * T / (rows - 1);
  return t;
}

std::vector<Vec> make_x_grid_1d(double lo, double hi, int n) {
  require(n >= 2 && hi > lo, "make_x_grid_1d: bad grid");
  std::vector<Vec> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    g[static_cast<std::size_t>(i)] = Vec{lo + (hi - lo) * i / (n - 1)};
  return g;
}

ErrorField compute_error_field(const DenoiserModel& model, const GaussianMixtureSpec& spec,
                               const NoiseSchedule& schedule, const std::vector<Vec>& x_grid,
                               const std::vector<double>& t_grid, int threads) {
  spec.validate();
  require(model.dim() == spec.dim, "error_field: model/spec dimension mismatch");
  require(!x_grid.empty() && !t_grid.empty(), "error_field: empty grid");
  ErrorField field;
  field.t_grid = t_grid;
  field.x_grid = x_grid;
  field.alpha_grid.resize(t_grid.size());
  field.values.assign(t_grid.size(), std::vector<double>(x_grid.size(), 0.0));

  int d = spec.dim;
  int nx = static_cast<int>(x_grid.size());
  std::vector<double> xbuf(static_cast<std::size_t>(nx) * d);
  for (int j = 0; j < nx; ++j) {
    require(static_cast<int>(x_grid[static_cast<std::size_t>(j)].size()) == d,
            "error_field: x grid dimension mismatch");
    std::copy(x_grid[static_cast<std::size_t>(j)].begin(),
              x_grid[static_cast<std::size_t>(j)].end(), xbuf.begin() + j * d);
  }

  // Rows are independent; each writes only its own slot.
  parallel_for(static_cast<std::int64_t>(t_grid.size()), threads,
               [&](std::int64_t lo, std::int64_t hi) {
                 std::vector<double> pred(static_cast<std::size_t>(nx) * d);
                 Vec x(static_cast<std::size_t>(d));
                 for (std::int64_t r = lo; r < hi; ++r) {
                   double t = t_grid[static_cast<std::size_t>(r)];
                   int t0 = static_cast<int>(std::floor(t));
                   t0 = std::min(t0, schedule.steps() - 1);
                   double u = t - t0;
                   double a = schedule.alpha(t0) * (1.0 - u) + schedule.alpha(t0 + 1) * u;
                   LogSnr alpha = log_snr(a);
                   model.eval_batch(xbuf.data(), nx, alpha, pred.data());
                   for (int j = 0; j < nx; ++j) {
                     std::copy(xbuf.begin() + j * d, xbuf.begin() + (j + 1) * d, x.begin());
                     Vec ref = analytic_denoiser(spec, x, alpha);
                     double q = 0.0;
                     for (int i = 0; i < d; ++i) {
                       double diff = pred[static_cast<std::size_t>(j * d + i)] -
                                     ref[static_cast<std::size_t>(i)];
                       q += diff * diff;
                     }
                     field.values[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] =
                         std::sqrt(q);
                   }
                   field.alpha_grid[static_cast<std::size_t>(r)] = alpha.v;
                 }
               });
  return field;
}

}  // namespace difflab
