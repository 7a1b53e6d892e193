#pragma once

#include <functional>

#include "difflab/core_math.hpp"

namespace difflab {

// A denoiser predicts the unit noise eps from a corrupted point and its noise
// level. Batched interface: X and out are column-major dim x n buffers and all
// points share one level, which is the shape every sampler consumes.
struct DenoiserModel {
  virtual ~DenoiserModel() = default;
  virtual int dim() const = 0;
  virtual void eval_batch(const double* X, int n, LogSnr alpha, double* out) const = 0;

  Vec eval(const Vec& x, LogSnr alpha) const {
    require(static_cast<int>(x.size()) == dim(), "DenoiserModel::eval: dimension mismatch");
    Vec out(x.size());
    eval_batch(x.data(), 1, alpha, out.data());
    return out;
  }
};

// Wraps a plain callable; used for stubs and adapters in tests.
struct FunctionDenoiser final : DenoiserModel {
  int d;
  std::function<Vec(const Vec&, LogSnr)> fn;

  FunctionDenoiser(int d_, std::function<Vec(const Vec&, LogSnr)> fn_)
      : d(d_), fn(std::move(fn_)) {}

  int dim() const override { return d; }

  void eval_batch(const double* X, int n, LogSnr alpha, double* out) const override {
    Vec x(static_cast<std::size_t>(d));
    for (int i = 0; i < n; ++i) {
      std::copy(X + i * d, X + (i + 1) * d, x.begin());
      Vec y = fn(x, alpha);
      require(y.size() == x.size(), "FunctionDenoiser: callable changed dimension");
      std::copy(y.begin(), y.end(), out + i * d);
    }
  }
};

}  // namespace difflab
