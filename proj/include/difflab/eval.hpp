#pragma once

#include "difflab/oracle.hpp"
#include "difflab/rng.hpp"

namespace difflab {

struct MmdConfig {
  double bandwidth = 1.0;      // Gaussian kernel sigma
  int subsample_cap = 4096;    // larger sets are subsampled
  std::uint64_t subsample_seed = 0;

  void validate() const;
};

// Unbiased U-statistic of squared MMD under k(x,y) = exp(-||x-y||^2 / 2s^2):
// mean over distinct within-set pairs of both sets minus twice the cross
// mean; may be negative. Summation order is canonicalized by content hash so
// mmd(X, Y) == mmd(Y, X) exactly, and subsampling above the cap is keyed by
// the same hash.
double mmd_unbiased(const std::vector<Vec>& X, const std::vector<Vec>& Y, const MmdConfig& cfg,
                    int threads = 1);

// n log-spaced values from lo to hi inclusive.
Vec log_spaced(double lo, double hi, int n);

// Default bandwidth candidates: 25 log-spaced values in [1e-3, 1].
Vec default_bandwidth_candidates();

// (sigma, mmd(data, reference)) per candidate against one standard-normal
// reference set of equal size drawn from rng.
std::vector<std::pair<double, double>> bandwidth_sweep(const std::vector<Vec>& data,
                                                       const Vec& candidates, Rng rng,
                                                       int threads = 1);

// Smallest candidate sigma at which the data is distinguishable (positive MMD
// estimate under the sigma kernel) from its variance-preserving corruption
// z = (x + sigma*xi)/sqrt(1 + sigma^2), xi standard normal drawn once from rng;
// paired points keep the estimate negative until a real gap appears. No
// detectable candidate -> smallest candidate.
double select_bandwidth(const std::vector<Vec>& data, const Vec& candidates, Rng rng,
                        int threads = 1);

struct BandError {
  double in_band_mean = 0.0;
  double out_band_mean = 0.0;
  std::int64_t in_band_cells = 0;
  std::int64_t out_band_cells = 0;
};

// Splits error-field cells by whether x lies within band_sigmas noisy
// standard deviations of some noisy component mean at the row's noise level,
// and averages the field over each class. 1D specs only.
BandError ood_band_error(const ErrorField& field, const GaussianMixtureSpec& spec,
                         double band_sigmas = 3.0);

}  // namespace difflab
