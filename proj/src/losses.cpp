#include "difflab/losses.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>

namespace difflab {
namespace {

constexpr double kLog2PiE = 2.8378770664093453;  // log(2*pi*e)

// Stream keyed by the node position quantized at 2^-20, so grids sharing a
// node location share its draws regardless of node index or grid extent.
Rng node_stream(const Rng& item_rng, double alpha_node) {
  return item_rng.stream(static_cast<std::uint64_t>(std::llround(alpha_node * 1048576.0)));
}

[[noreturn]] void throw_nonfinite_node(const char* op, int node, double alpha) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s: non-finite integrand at node %d (alpha=%.6g)", op, node,
                alpha);
  throw NumericError(buf);
}

// integral of sigmoid = softplus, stable for large |v|.
double sigmoid_antideriv(double v) { return softplus(v); }

}  // namespace

double softplus(double v) {
  if (v > 0.0) return v + std::log1p(std::exp(-v));
  return std::log1p(std::exp(v));
}

Vec uniform_grid(double lo, double hi, int n) {
  require(n >= 2, "uniform_grid: need at least 2 points");
  require(lo < hi, "uniform_grid: lo must be below hi");
  Vec g(static_cast<std::size_t>(n));
  double h = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo + i * h;
  g.back() = hi;
  return g;
}

Vec trapezoid_weights(const Vec& grid) {
  std::size_t n = grid.size();
  require(n >= 2, "trapezoid_weights: need at least 2 nodes");
  Vec w(n, 0.0);
  w[0] = 0.5 * (grid[1] - grid[0]);
  for (std::size_t i = 1; i + 1 < n; ++i) w[i] = 0.5 * (grid[i + 1] - grid[i - 1]);
  w[n - 1] = 0.5 * (grid[n - 1] - grid[n - 2]);
  return w;
}

void LlrConfig::validate() const {
  require(alpha_grid.size() >= 2, "LlrConfig: alpha_grid needs at least 2 nodes");
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    require(alpha_grid[i] >= kAlphaClampMin && alpha_grid[i] <= kAlphaClampMax,
            "LlrConfig: alpha_grid node outside the log-SNR clamp range");
    if (i > 0)
      require(alpha_grid[i] > alpha_grid[i - 1], "LlrConfig: alpha_grid must strictly increase");
  }
  require(n_mc >= 1, "LlrConfig: n_mc must be positive");
}

LlrConfig eval_llr_config() {
  LlrConfig cfg;
  cfg.alpha_grid = uniform_grid(-10.0, 15.0, 256);
  cfg.n_mc = 256;
  return cfg;
}

namespace {

struct NodeTerms {
  double mse_alpha = 0.0;  // mean_j ||eps - eps_hat(z, alpha)||^2
  double mse_beta = 0.0;   // mean_j ||eps - b * eps_hat(z', beta)||^2
};

// Monte-Carlo estimates of both integrand terms at one node. Draw order per
// node stream: the alpha-term noise first, then the independent beta-term
// noise when shared_noise is off.
NodeTerms node_terms(const DenoiserModel& model, const Vec& x, MixtureCoeffs mc, LogSnr alpha,
                     int n_mc, bool shared_noise, Rng node_rng) {
  int d = model.dim();
  std::size_t nd = static_cast<std::size_t>(d) * static_cast<std::size_t>(n_mc);
  Vec eps = node_rng.normal_vec(nd);
  Vec z(nd);
  double ra = sqrt_sigmoid(alpha.v), rna = sqrt_sigmoid(-alpha.v);
  for (int j = 0; j < n_mc; ++j)
    for (int i = 0; i < d; ++i) {
      std::size_t k = static_cast<std::size_t>(j) * d + i;
      z[k] = ra * x[static_cast<std::size_t>(i)] + rna * eps[k];
    }
  Vec eps2, z2;
  const Vec* eps_b = &eps;
  const Vec* z_b = &z;
  if (!shared_noise) {
    eps2 = node_rng.normal_vec(nd);
    z2.resize(nd);
    for (int j = 0; j < n_mc; ++j)
      for (int i = 0; i < d; ++i) {
        std::size_t k = static_cast<std::size_t>(j) * d + i;
        z2[k] = ra * x[static_cast<std::size_t>(i)] + rna * eps2[k];
      }
    eps_b = &eps2;
    z_b = &z2;
  }

  Vec f1(nd), f2(nd);
  model.eval_batch(z.data(), n_mc, alpha, f1.data());
  model.eval_batch(z_b->data(), n_mc, mc.beta, f2.data());

  NodeTerms out;
  for (std::size_t k = 0; k < nd; ++k) {
    double r1 = eps[k] - f1[k];
    double r2 = (*eps_b)[k] - mc.b * f2[k];
    out.mse_alpha += r1 * r1;
    out.mse_beta += r2 * r2;
  }
  out.mse_alpha /= n_mc;
  out.mse_beta /= n_mc;
  return out;
}

}  // namespace

double estimate_llr(const DenoiserModel& model, const Vec& x, LogSnr zeta, const LlrConfig& cfg,
                    Rng rng) {
  cfg.validate();
  require(static_cast<int>(x.size()) == model.dim(), "estimate_llr: dimension mismatch");
  Vec w = trapezoid_weights(cfg.alpha_grid);
  double llr = 0.0;
  for (std::size_t k = 0; k < cfg.alpha_grid.size(); ++k) {
    LogSnr alpha = log_snr(cfg.alpha_grid[k]);
    MixtureCoeffs mc = compose_noise_levels(alpha, zeta);
    NodeTerms t = node_terms(model, x, mc, alpha, cfg.n_mc, cfg.shared_noise,
                             node_stream(rng, cfg.alpha_grid[k]));
    double term = t.mse_alpha - t.mse_beta;
    if (!std::isfinite(term))
      throw_nonfinite_node("estimate_llr", static_cast<int>(k), cfg.alpha_grid[k]);
    llr += 0.5 * w[k] * term;
  }
  return llr;
}

NllResult nll_estimate(const DenoiserModel& model, const Vec& x, const LlrConfig& cfg, Rng rng) {
  cfg.validate();
  require(static_cast<int>(x.size()) == model.dim(), "nll_estimate: dimension mismatch");
  Vec w = trapezoid_weights(cfg.alpha_grid);
  MixtureCoeffs ident{LogSnr{0.0}, 1.0};
  double quad = 0.0;
  for (std::size_t k = 0; k < cfg.alpha_grid.size(); ++k) {
    LogSnr alpha = log_snr(cfg.alpha_grid[k]);
    ident.beta = alpha;
    NodeTerms t =
        node_terms(model, x, ident, alpha, cfg.n_mc, true, node_stream(rng, cfg.alpha_grid[k]));
    if (!std::isfinite(t.mse_alpha))
      throw_nonfinite_node("nll_estimate", static_cast<int>(k), cfg.alpha_grid[k]);
    quad += 0.5 * w[k] * t.mse_alpha;
  }
  NllResult res;
  res.window_lo = cfg.alpha_grid.front();
  res.window_hi = cfg.alpha_grid.back();
  double d = static_cast<double>(model.dim());
  // Gaussian baseline on the window: d/2 * (log(2*pi*e) - int_W sigmoid).
  double window_mass = sigmoid_antideriv(res.window_hi) - sigmoid_antideriv(res.window_lo);
  res.nll = quad + 0.5 * d * (kLog2PiE - window_mass);
  res.truncation_dependent = true;
  return res;
}

void ZetaSampler::validate() const { require(lo < hi, "ZetaSampler: lo must be below hi"); }

LogSnr ZetaSampler::sample(Rng& rng) const {
  validate();
  double u = rng.uniform();
  if (law == ZetaLaw::kUniform) return log_snr(lo + u * (hi - lo));
  double loc = 0.5 * (lo + hi);
  double s = (hi - lo) / 8.0;
  double flo = sigmoid((lo - loc) / s);
  double fhi = sigmoid((hi - loc) / s);
  double p = flo + u * (fhi - flo);
  return log_snr(loc + s * std::log(p / (1.0 - p)));
}

ZetaLaw zeta_law_from_string(const std::string& s) {
  if (s == "uniform") return ZetaLaw::kUniform;
  if (s == "logistic") return ZetaLaw::kLogisticTruncated;
  throw ConfigError("zeta law must be 'uniform' or 'logistic', got '" + s + "'");
}

std::string to_string(ZetaLaw law) {
  return law == ZetaLaw::kUniform ? "uniform" : "logistic";
}

std::vector<CdlItem> make_cdl_batch(const std::vector<Vec>& data, const ZetaSampler& zetas,
                                    Rng rng, const std::function<bool(Rng&)>& coin) {
  require(!data.empty(), "make_cdl_batch: empty data batch");
  auto fair = [](Rng& r) { return r.uniform() < 0.5; };
  const auto& flip = coin ? coin : static_cast<std::function<bool(Rng&)>>(fair);
  std::vector<CdlItem> items(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng item_rng = rng.stream(static_cast<std::uint64_t>(i));
    CdlItem& it = items[i];
    it.zeta = zetas.sample(item_rng);
    if (flip(item_rng)) {
      it.y = 1.0;
      it.x = data[i];
    } else {
      it.y = -1.0;
      Vec eps = item_rng.normal_vec(data[i].size());
      it.x = mix(data[i], eps, it.zeta);
    }
  }
  return items;
}

AlphaSampler schedule_timestep_sampler(const NoiseSchedule& schedule) {
  schedule.validate();
  return [schedule](Rng& rng) {
    int T = schedule.steps();
    int t = 1 + static_cast<int>(rng.uniform() * T);
    if (t > T) t = T;
    return log_snr(schedule.alpha(t));
  };
}

AlphaSampler fixed_alpha_sampler(double alpha) {
  LogSnr a = log_snr(alpha);
  return [a](Rng&) { return a; };
}

double mse_loss_value(const DenoiserModel& model, const std::vector<Vec>& batch,
                      const AlphaSampler& alphas, Rng rng) {
  require(!batch.empty(), "mse_loss_value: empty batch");
  int d = model.dim();
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    require(static_cast<int>(batch[i].size()) == d, "mse_loss_value: dimension mismatch");
    Rng item_rng = rng.stream(static_cast<std::uint64_t>(i));
    LogSnr alpha = alphas(item_rng);
    Vec eps = item_rng.normal_vec(static_cast<std::size_t>(d));
    Vec z = mix(batch[i], eps, alpha);
    Vec f = model.eval(z, alpha);
    for (int c = 0; c < d; ++c) {
      double r = eps[static_cast<std::size_t>(c)] - f[static_cast<std::size_t>(c)];
      total += r * r;
    }
  }
  return total / static_cast<double>(batch.size());
}

LossGrad mse_loss_grad(const MlpDenoiser& model, const std::vector<Vec>& batch,
                       const AlphaSampler& alphas, Rng rng) {
  require(!batch.empty(), "mse_loss_grad: empty batch");
  int d = model.dim();
  int n = static_cast<int>(batch.size());
  Eigen::MatrixXd Z(d, n), E(d, n);
  Eigen::VectorXd cond(n);
  for (int i = 0; i < n; ++i) {
    const Vec& x = batch[static_cast<std::size_t>(i)];
    require(static_cast<int>(x.size()) == d, "mse_loss_grad: dimension mismatch");
    Rng item_rng = rng.stream(static_cast<std::uint64_t>(i));
    LogSnr alpha = alphas(item_rng);
    cond(i) = model.cond_from_alpha(alpha);
    double ra = sqrt_sigmoid(alpha.v), rna = sqrt_sigmoid(-alpha.v);
    for (int c = 0; c < d; ++c) {
      double e = item_rng.normal();
      E(c, i) = e;
      Z(c, i) = ra * x[static_cast<std::size_t>(c)] + rna * e;
    }
  }
  ForwardCache cache;
  Eigen::MatrixXd F = model.forward(Z, cond, &cache);
  LossGrad out;
  out.loss = (E - F).squaredNorm() / n;
  out.grad.assign(static_cast<std::size_t>(model.param_count()), 0.0);
  Eigen::MatrixXd upstream = (2.0 / n) * (F - E);
  model.backward(cache, upstream, out.grad);
  return out;
}

double cdl_loss_value(const DenoiserModel& model, const std::vector<CdlItem>& items,
                      const LlrConfig& cfg, Rng rng, int threads) {
  require(!items.empty(), "cdl_loss_value: empty item batch");
  cfg.validate();
  std::vector<double> losses(items.size(), 0.0);
  parallel_for(static_cast<std::int64_t>(items.size()), threads,
               [&](std::int64_t lo, std::int64_t hi) {
                 for (std::int64_t i = lo; i < hi; ++i) {
                   const CdlItem& it = items[static_cast<std::size_t>(i)];
                   double llr = estimate_llr(model, it.x, it.zeta, cfg,
                                             rng.stream(static_cast<std::uint64_t>(i)));
                   losses[static_cast<std::size_t>(i)] = softplus(it.y * llr);
                 }
               });
  double total = 0.0;
  for (double v : losses) total += v;
  return total / static_cast<double>(items.size());
}

namespace {

// Pathwise per-item CDL gradient. All (node, draw) pairs of one integrand
// term form one batched forward/backward pass; the upstream is scaled by
// d softplus(y*llr)/d llr after the value is known, which is exact because
// the (eps, alpha) draws are frozen.
double cdl_item_grad(const MlpDenoiser& model, const CdlItem& it, const LlrConfig& cfg,
                     const Vec& w, Rng item_rng, double inv_n_items, Vec& grad) {
  int d = model.dim();
  int nodes = static_cast<int>(cfg.alpha_grid.size());
  int m = nodes * cfg.n_mc;
  Eigen::MatrixXd Z1(d, m), E1(d, m), Z2(d, m), E2(d, m);
  Eigen::VectorXd cond1(m), cond2(m), cw(m), cb(m);
  for (int k = 0; k < nodes; ++k) {
    double node_alpha = cfg.alpha_grid[static_cast<std::size_t>(k)];
    LogSnr alpha = log_snr(node_alpha);
    MixtureCoeffs mc = compose_noise_levels(alpha, it.zeta);
    Rng node_rng = node_stream(item_rng, node_alpha);
    double ra = sqrt_sigmoid(alpha.v), rna = sqrt_sigmoid(-alpha.v);
    double c1 = model.cond_from_alpha(alpha), c2 = model.cond_from_alpha(mc.beta);
    double weight = 0.5 * w[static_cast<std::size_t>(k)] / cfg.n_mc;
    for (int j = 0; j < cfg.n_mc; ++j) {
      int col = k * cfg.n_mc + j;
      cond1(col) = c1;
      cond2(col) = c2;
      cw(col) = weight;
      cb(col) = mc.b;
      for (int c = 0; c < d; ++c) {
        double e = node_rng.normal();
        E1(c, col) = e;
        Z1(c, col) = ra * it.x[static_cast<std::size_t>(c)] + rna * e;
      }
    }
    if (cfg.shared_noise) {
      E2.middleCols(k * cfg.n_mc, cfg.n_mc) = E1.middleCols(k * cfg.n_mc, cfg.n_mc);
      Z2.middleCols(k * cfg.n_mc, cfg.n_mc) = Z1.middleCols(k * cfg.n_mc, cfg.n_mc);
    } else {
      for (int j = 0; j < cfg.n_mc; ++j) {
        int col = k * cfg.n_mc + j;
        for (int c = 0; c < d; ++c) {
          double e = node_rng.normal();
          E2(c, col) = e;
          Z2(c, col) = ra * it.x[static_cast<std::size_t>(c)] + rna * e;
        }
      }
    }
  }

  ForwardCache cache1, cache2;
  Eigen::MatrixXd F1 = model.forward(Z1, cond1, &cache1);
  Eigen::MatrixXd F2 = model.forward(Z2, cond2, &cache2);

  double llr = 0.0;
  for (int k = 0; k < nodes; ++k) {
    double node_sum = 0.0;
    for (int j = 0; j < cfg.n_mc; ++j) {
      int col = k * cfg.n_mc + j;
      double t1 = (E1.col(col) - F1.col(col)).squaredNorm();
      double t2 = (E2.col(col) - cb(col) * F2.col(col)).squaredNorm();
      node_sum += cw(col) * (t1 - t2);
    }
    if (!std::isfinite(node_sum))
      throw_nonfinite_node("cdl_loss", k, cfg.alpha_grid[static_cast<std::size_t>(k)]);
    llr += node_sum;
  }

  double u = it.y * sigmoid(it.y * llr) * inv_n_items;
  Eigen::MatrixXd up1 = F1 - E1;
  Eigen::MatrixXd up2 = E2 - F2 * cb.asDiagonal();
  for (int col = 0; col < m; ++col) {
    up1.col(col) *= 2.0 * u * cw(col);
    up2.col(col) *= 2.0 * u * cw(col) * cb(col);
  }
  model.backward(cache1, up1, grad);
  model.backward(cache2, up2, grad);
  return softplus(it.y * llr);
}

}  // namespace

LossGrad cdl_loss_grad(const MlpDenoiser& model, const std::vector<CdlItem>& items,
                       const LlrConfig& cfg, Rng rng, int threads) {
  require(!items.empty(), "cdl_loss_grad: empty item batch");
  cfg.validate();
  Vec w = trapezoid_weights(cfg.alpha_grid);
  std::size_t np = static_cast<std::size_t>(model.param_count());
  std::size_t n = items.size();
  std::vector<Vec> item_grads(n);
  std::vector<double> losses(n, 0.0);
  double inv_n = 1.0 / static_cast<double>(n);
  parallel_for(static_cast<std::int64_t>(n), threads, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      std::size_t s = static_cast<std::size_t>(i);
      item_grads[s].assign(np, 0.0);
      losses[s] = cdl_item_grad(model, items[s], cfg, w,
                                rng.stream(static_cast<std::uint64_t>(i)), inv_n, item_grads[s]);
    }
  });
  LossGrad out;
  out.grad.assign(np, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const Vec& g = item_grads[s];
    for (std::size_t p = 0; p < np; ++p) out.grad[p] += g[p];
    out.loss += losses[s];
  }
  out.loss *= inv_n;
  return out;
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "mse-only") return TrainMode::kMseOnly;
  if (s == "cdl-only") return TrainMode::kCdlOnly;
  if (s == "joint") return TrainMode::kJoint;
  throw ConfigError("train mode must be 'mse-only', 'cdl-only' or 'joint', got '" + s + "'");
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kMseOnly: return "mse-only";
    case TrainMode::kCdlOnly: return "cdl-only";
    case TrainMode::kJoint: return "joint";
  }
  return "mse-only";
}

void TrainConfig::validate() const {
  llr.validate();
  zeta.validate();
  require(lambda >= 0.0, "TrainConfig: lambda must be nonnegative");
  require(cdl_batch >= 1, "TrainConfig: cdl_batch must be positive");
}

StepStats combined_training_step(MlpDenoiser& model, Vec& params, AdamState& adam, EmaState& ema,
                                 const std::vector<Vec>& batch, const TrainConfig& cfg,
                                 Rng step_rng) {
  cfg.validate();
  require(!batch.empty(), "combined_training_step: empty batch");
  require(params.size() == static_cast<std::size_t>(model.param_count()),
          "combined_training_step: params size mismatch");
  StepStats stats;
  Vec grad(params.size(), 0.0);

  if (cfg.mode != TrainMode::kCdlOnly) {
    LossGrad g = mse_loss_grad(model, batch, schedule_timestep_sampler(model.schedule),
                               step_rng.stream("mse"));
    stats.mse = g.loss;
    for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += g.grad[p];
  }

  double cdl_scale = cfg.mode == TrainMode::kCdlOnly ? 1.0 : cfg.lambda;
  if (cfg.mode != TrainMode::kMseOnly && cdl_scale != 0.0) {
    std::size_t n_items = std::min<std::size_t>(batch.size(), static_cast<std::size_t>(cfg.cdl_batch));
    std::vector<Vec> head(batch.begin(), batch.begin() + static_cast<std::ptrdiff_t>(n_items));
    std::vector<CdlItem> items = make_cdl_batch(head, cfg.zeta, step_rng.stream("pairs"));
    LossGrad g = cdl_loss_grad(model, items, cfg.llr, step_rng.stream("cdl"), cfg.threads);
    stats.cdl = g.loss;
    for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += cdl_scale * g.grad[p];
  }

  stats.total = stats.mse + cdl_scale * stats.cdl;
  if (cfg.mode == TrainMode::kCdlOnly) stats.total = stats.cdl;
  if (!std::isfinite(stats.total)) throw NumericError("combined_training_step: non-finite loss");

  adam_step(params, grad, adam, cfg.adam);
  model.load_params(params);
  ema_update(ema, params);
  return stats;
}

}  // namespace difflab
