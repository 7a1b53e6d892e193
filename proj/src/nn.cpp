#include "difflab/nn.hpp"

#include <cmath>

namespace difflab {

namespace {

void apply_activation(Activation act, const Eigen::MatrixXd& z, Eigen::MatrixXd& out) {
  if (act == Activation::kRelu) {
    out = z.array().max(0.0);
  } else {
    out = z.array() / (1.0 + (-z.array()).exp());
  }
}

Eigen::MatrixXd activation_deriv(Activation act, const Eigen::MatrixXd& z) {
  if (act == Activation::kRelu) {
    return (z.array() > 0.0).cast<double>();
  }
  Eigen::ArrayXXd s = 1.0 / (1.0 + (-z.array()).exp());
  return (s * (1.0 + z.array() * (1.0 - s))).matrix();
}

}  // namespace

void TimeEmbedding::validate() const {
  if (embed_dim < 2 || embed_dim % 2 != 0)
    throw ConfigError("embedding: embed_dim must be even and >= 2");
  if (!(freq_base > 0.0)) throw ConfigError("embedding: freq_base must be positive");
}

void TimeEmbedding::embed(double v, double* out) const {
  int half = embed_dim / 2;
  for (int i = 0; i < half; ++i) {
    double w = std::pow(freq_base, -static_cast<double>(i) / half);
    out[2 * i] = std::sin(w * v);
    out[2 * i + 1] = std::cos(w * v);
  }
}

void MlpConfig::validate() const {
  if (data_dim < 1) throw ConfigError("mlp: data_dim must be >= 1");
  if (hidden.empty()) throw ConfigError("mlp: need at least one hidden layer");
  for (int h : hidden)
    if (h < 1) throw ConfigError("mlp: hidden sizes must be >= 1");
  TimeEmbedding{embed_dim, freq_base}.validate();
}

MlpDenoiser MlpDenoiser::init(MlpConfig cfg, NoiseSchedule schedule, Rng& rng) {
  cfg.validate();
  if (cfg.conditioning == Conditioning::kTimestep) schedule.validate();
  MlpDenoiser net;
  net.cfg = cfg;
  net.schedule = std::move(schedule);
  std::vector<int> dims;
  dims.push_back(cfg.input_dim());
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.data_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    int fan_in = dims[l], fan_out = dims[l + 1];
    Eigen::MatrixXd W(fan_out, fan_in);
    double bound = std::sqrt(6.0 / fan_in);
    for (Eigen::Index i = 0; i < W.size(); ++i)
      W.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
    net.weights.push_back(std::move(W));
    net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return net;
}

std::int64_t MlpDenoiser::param_count() const {
  std::int64_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

double MlpDenoiser::cond_from_alpha(LogSnr alpha) const {
  if (cfg.conditioning == Conditioning::kLogSnr) return alpha.v;
  return schedule.time_from_alpha(alpha.v);
}

Eigen::MatrixXd MlpDenoiser::forward(const Eigen::MatrixXd& X, const Eigen::VectorXd& cond,
                                     ForwardCache* cache) const {
  require(X.rows() == cfg.data_dim, "mlp forward: input dimension mismatch");
  require(cond.size() == X.cols(), "mlp forward: one conditioning value per column");
  Eigen::Index n = X.cols();
  Eigen::MatrixXd x0(cfg.input_dim(), n);
  x0.topRows(cfg.data_dim) = X;
  TimeEmbedding emb{cfg.embed_dim, cfg.freq_base};
  for (Eigen::Index j = 0; j < n; ++j)
    emb.embed(cond[j], x0.col(j).data() + cfg.data_dim);

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.x0 = std::move(x0);
  std::size_t L = weights.size();
  c.pre.resize(L - 1);
  c.act.resize(L - 1);
  const Eigen::MatrixXd* in = &c.x0;
  for (std::size_t l = 0; l + 1 < L; ++l) {
    c.pre[l].noalias() = weights[l] * (*in);
    c.pre[l].colwise() += biases[l];
    apply_activation(cfg.activation, c.pre[l], c.act[l]);
    in = &c.act[l];
  }
  Eigen::MatrixXd out = weights[L - 1] * (*in);
  out.colwise() += biases[L - 1];
  return out;
}

void MlpDenoiser::backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                           Vec& grad) const {
  require(grad.size() == static_cast<std::size_t>(param_count()),
          "mlp backward: gradient buffer size mismatch");
  std::size_t L = weights.size();
  require(cache.act.size() == L - 1, "mlp backward: cache does not match network depth");

  // Flat offsets mirror flatten_params: per layer, W storage order then b.
  std::vector<std::size_t> offset(L);
  std::size_t pos = 0;
  for (std::size_t l = 0; l < L; ++l) {
    offset[l] = pos;
    pos += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }

  Eigen::MatrixXd g = upstream;
  for (std::size_t l = L; l-- > 0;) {
    const Eigen::MatrixXd& input = (l == 0) ? cache.x0 : cache.act[l - 1];
    // products land in owned (uniformly aligned) storage; the flat buffer only
    // sees element-wise adds, so results do not depend on its alignment
    Eigen::MatrixXd dW = g * input.transpose();
    Eigen::VectorXd db = g.rowwise().sum();
    double* wdst = grad.data() + offset[l];
    for (Eigen::Index k = 0; k < dW.size(); ++k) wdst[k] += dW.data()[k];
    double* bdst = wdst + weights[l].size();
    for (Eigen::Index k = 0; k < db.size(); ++k) bdst[k] += db[k];
    if (l > 0) {
      Eigen::MatrixXd gin = weights[l].transpose() * g;
      g = gin.cwiseProduct(activation_deriv(cfg.activation, cache.pre[l - 1]));
    }
  }
}

void MlpDenoiser::eval_batch(const double* X, int n, LogSnr alpha, double* out) const {
  Eigen::Map<const Eigen::MatrixXd> Xm(X, cfg.data_dim, n);
  double v = cond_from_alpha(alpha);
  Eigen::VectorXd cond = Eigen::VectorXd::Constant(n, v);
  Eigen::Map<Eigen::MatrixXd> Om(out, cfg.data_dim, n);
  Om = forward(Xm, cond, nullptr);
}

Vec MlpDenoiser::flatten_params() const {
  Vec flat(static_cast<std::size_t>(param_count()));
  std::size_t pos = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    std::copy(weights[l].data(), weights[l].data() + weights[l].size(), flat.begin() + pos);
    pos += static_cast<std::size_t>(weights[l].size());
    std::copy(biases[l].data(), biases[l].data() + biases[l].size(), flat.begin() + pos);
    pos += static_cast<std::size_t>(biases[l].size());
  }
  return flat;
}

void MlpDenoiser::load_params(const Vec& flat) {
  require(flat.size() == static_cast<std::size_t>(param_count()),
          "mlp load_params: size mismatch");
  std::size_t pos = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    std::copy(flat.begin() + pos, flat.begin() + pos + weights[l].size(), weights[l].data());
    pos += static_cast<std::size_t>(weights[l].size());
    std::copy(flat.begin() + pos, flat.begin() + pos + biases[l].size(), biases[l].data());
    pos += static_cast<std::size_t>(biases[l].size());
  }
}

void adam_step(Vec& params, const Vec& grad, AdamState& state, const AdamConfig& cfg) {
  require(params.size() == grad.size() && params.size() == state.m.size() &&
              params.size() == state.v.size(),
          "adam: size mismatch");
  if (!(cfg.lr > 0.0)) throw ConfigError("adam: lr must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw ConfigError("adam: betas must lie in [0,1)");
  state.t += 1;
  double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    double mhat = state.m[i] / c1;
    double vhat = state.v[i] / c2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

EmaState EmaState::from_params(double decay, const Vec& params) {
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("ema: decay must lie in (0,1)");
  return EmaState{decay, params};
}

void ema_update(EmaState& ema, const Vec& params) {
  require(ema.shadow.size() == params.size(), "ema: size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    ema.shadow[i] = ema.decay * ema.shadow[i] + (1.0 - ema.decay) * params[i];
}

}  // namespace difflab
