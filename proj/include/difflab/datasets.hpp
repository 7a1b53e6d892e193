#pragma once

#include <string>
#include <utility>

#include "difflab/oracle.hpp"
#include "difflab/rng.hpp"

namespace difflab {

struct Dataset {
  std::vector<Vec> points;  // stored normalized
  int dim = 0;
  Vec center;               // data-space mean removed at normalization
  double scale = 1.0;       // max-abs deviation divided out

  Vec normalize(const Vec& p) const;
  Vec denormalize(const Vec& p) const;
  void validate() const;
};

// Loads the base point cloud (CSV x,y rows; '#' comments and a header row are
// skipped), normalizes it to zero mean and max-abs 1, then resamples to n
// points as base[i mod B] plus jitter * N(0, I) in normalized units. n = B
// with jitter 0 reproduces the base points exactly.
Dataset load_dino(const std::string& path, int n, std::uint64_t seed, double jitter = 0.02);

// n mixture draws: component by weight, then mean + stddev * N(0, I).
// Stored unnormalized (center 0, scale 1).
Dataset sample_mixture(const GaussianMixtureSpec& spec, int n, std::uint64_t seed);

// Deterministic shuffled split; train gets round(train_frac * n) points.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, std::uint64_t seed);

}  // namespace difflab
