#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "difflab/denoiser.hpp"
#include "difflab/rng.hpp"

namespace difflab {

enum class Activation { kRelu, kSilu };
enum class Conditioning { kTimestep, kLogSnr };

// Sinusoidal features, interleaved [sin(w_i v), cos(w_i v)] pairs with
// geometric frequencies w_i = freq_base^(-i/(embed_dim/2)).
struct TimeEmbedding {
  int embed_dim = 64;
  double freq_base = 10000.0;

  void validate() const;
  void embed(double v, double* out) const;
  Vec embed(double v) const {
    Vec e(static_cast<std::size_t>(embed_dim));
    embed(v, e.data());
    return e;
  }
};

struct MlpConfig {
  int data_dim = 2;
  std::vector<int> hidden = {128, 128, 128};
  int embed_dim = 64;
  double freq_base = 10000.0;
  Activation activation = Activation::kSilu;
  Conditioning conditioning = Conditioning::kTimestep;

  void validate() const;
  int input_dim() const { return data_dim + embed_dim; }
};

// Intermediate state of one batched forward pass, kept for backprop.
struct ForwardCache {
  Eigen::MatrixXd x0;                 // (data_dim + embed_dim) x n input
  std::vector<Eigen::MatrixXd> pre;   // pre-activations per hidden layer
  std::vector<Eigen::MatrixXd> act;   // activations per hidden layer
};

// MLP denoiser conditioned on the noise level through a sinusoidal embedding
// of either the (fractional) schedule timestep or the raw log-SNR.
struct MlpDenoiser final : DenoiserModel {
  MlpConfig cfg;
  NoiseSchedule schedule;  // consulted only for timestep conditioning
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  // Kaiming-uniform fan-in weights (column-major fill order), zero biases.
  static MlpDenoiser init(MlpConfig cfg, NoiseSchedule schedule, Rng& rng);

  int dim() const override { return cfg.data_dim; }
  std::int64_t param_count() const;

  double cond_from_alpha(LogSnr alpha) const;

  // X is data_dim x n; cond holds the per-column conditioning value.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X, const Eigen::VectorXd& cond,
                          ForwardCache* cache = nullptr) const;

  // Accumulates d(loss)/d(params) into grad (flat layout, see flatten_params).
  // upstream is d(loss)/d(output), data_dim x n, same batch as the cache.
  void backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream, Vec& grad) const;

  void eval_batch(const double* X, int n, LogSnr alpha, double* out) const override;

  // Flat parameter order: per layer, W in column-major storage order, then b.
  Vec flatten_params() const;
  void load_params(const Vec& flat);
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vec m, v;
  std::int64_t t = 0;

  static AdamState zeros(std::size_t n) { return AdamState{Vec(n, 0.0), Vec(n, 0.0), 0}; }
};

// Bias-corrected Adam; updates params in place.
void adam_step(Vec& params, const Vec& grad, AdamState& state, const AdamConfig& cfg);

struct EmaState {
  double decay = 0.999;
  Vec shadow;

  static EmaState from_params(double decay, const Vec& params);
};

// shadow = decay * shadow + (1 - decay) * params
void ema_update(EmaState& ema, const Vec& params);

}  // namespace difflab
