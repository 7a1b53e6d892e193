#include "difflab/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace difflab {
namespace {

std::uint64_t content_hash(const std::vector<Vec>& pts) {
  std::uint64_t h = 1469598103934665603ull;
  for (const Vec& p : pts) {
    std::uint64_t row = fnv1a(reinterpret_cast<const char*>(p.data()), p.size() * sizeof(double));
    h = (h ^ row) * 1099511628211ull;
  }
  return h;
}

Eigen::MatrixXd to_matrix(const std::vector<Vec>& pts, int d) {
  Eigen::MatrixXd M(d, static_cast<int>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    require(static_cast<int>(pts[i].size()) == d, "mmd: inconsistent point dimension");
    M.col(static_cast<int>(i)) = Eigen::VectorXd::Map(pts[i].data(), d);
  }
  return M;
}

// Deterministic subsample without replacement, keyed by the set's content.
std::vector<Vec> subsample(const std::vector<Vec>& pts, int cap, std::uint64_t seed,
                           std::uint64_t hash) {
  if (static_cast<int>(pts.size()) <= cap) return pts;
  Rng rng = Rng(seed).stream(hash);
  std::vector<std::size_t> idx(pts.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (int i = 0; i < cap; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (idx.size() - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  std::vector<Vec> out(static_cast<std::size_t>(cap));
  for (int i = 0; i < cap; ++i) out[static_cast<std::size_t>(i)] = pts[idx[static_cast<std::size_t>(i)]];
  return out;
}

// Gaussian kernel matrix between column sets.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double sigma) {
  Eigen::VectorXd a2 = A.colwise().squaredNorm();
  Eigen::VectorXd b2 = B.colwise().squaredNorm();
  Eigen::MatrixXd D = -2.0 * (A.transpose() * B);
  D.colwise() += a2;
  D.rowwise() += b2.transpose();
  return (-D / (2.0 * sigma * sigma)).array().exp().matrix();
}

// Sum of all entries in fixed row-major order; rows may run concurrently.
double ordered_sum(const Eigen::MatrixXd& K, int threads, bool skip_diagonal) {
  int n = static_cast<int>(K.rows());
  Vec rows(static_cast<std::size_t>(n), 0.0);
  parallel_for(n, threads, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      double s = 0.0;
      for (int j = 0; j < K.cols(); ++j) s += K(static_cast<int>(i), j);
      if (skip_diagonal) s -= K(static_cast<int>(i), static_cast<int>(i));
      rows[static_cast<std::size_t>(i)] = s;
    }
  });
  double total = 0.0;
  for (double v : rows) total += v;
  return total;
}

}  // namespace

void MmdConfig::validate() const {
  require(bandwidth > 0.0, "MmdConfig: bandwidth must be positive");
  require(subsample_cap >= 2, "MmdConfig: subsample cap too small");
}

double mmd_unbiased(const std::vector<Vec>& X, const std::vector<Vec>& Y, const MmdConfig& cfg,
                    int threads) {
  cfg.validate();
  require(X.size() >= 2 && Y.size() >= 2, "mmd_unbiased: need at least 2 points per set");
  int d = static_cast<int>(X.front().size());

  std::uint64_t hx = content_hash(X), hy = content_hash(Y);
  const std::vector<Vec>* A = &X;
  const std::vector<Vec>* B = &Y;
  if (hy < hx) {
    std::swap(A, B);
    std::swap(hx, hy);
  }
  std::vector<Vec> a = subsample(*A, cfg.subsample_cap, cfg.subsample_seed, hx);
  std::vector<Vec> b = subsample(*B, cfg.subsample_cap, cfg.subsample_seed, hy);
  Eigen::MatrixXd MA = to_matrix(a, d), MB = to_matrix(b, d);
  double na = static_cast<double>(MA.cols()), nb = static_cast<double>(MB.cols());

  double saa = ordered_sum(kernel_matrix(MA, MA, cfg.bandwidth), threads, true) / (na * (na - 1.0));
  double sbb = ordered_sum(kernel_matrix(MB, MB, cfg.bandwidth), threads, true) / (nb * (nb - 1.0));
  double sab = ordered_sum(kernel_matrix(MA, MB, cfg.bandwidth), threads, false) / (na * nb);
  return saa + sbb - 2.0 * sab;
}

Vec log_spaced(double lo, double hi, int n) {
  require(lo > 0.0 && hi > lo, "log_spaced: need 0 < lo < hi");
  require(n >= 2, "log_spaced: need at least 2 values");
  Vec out(static_cast<std::size_t>(n));
  double llo = std::log(lo), step = (std::log(hi) - llo) / (n - 1);
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = std::exp(llo + i * step);
  out.front() = lo;
  out.back() = hi;
  return out;
}

Vec default_bandwidth_candidates() { return log_spaced(1e-3, 1.0, 25); }

std::vector<std::pair<double, double>> bandwidth_sweep(const std::vector<Vec>& data,
                                                       const Vec& candidates, Rng rng,
                                                       int threads) {
  require(!candidates.empty(), "bandwidth_sweep: no candidates");
  require(data.size() >= 2, "bandwidth_sweep: need at least 2 data points");
  std::size_t d = data.front().size();
  Rng ref_rng = rng.stream("reference");
  std::vector<Vec> reference(data.size());
  for (std::size_t i = 0; i < reference.size(); ++i)
    reference[i] = ref_rng.stream(static_cast<std::uint64_t>(i)).normal_vec(d);

  Vec sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(sorted.size());
  MmdConfig cfg;
  for (double sigma : sorted) {
    cfg.bandwidth = sigma;
    out.emplace_back(sigma, mmd_unbiased(data, reference, cfg, threads));
  }
  return out;
}

double select_bandwidth(const std::vector<Vec>& data, const Vec& candidates, Rng rng,
                        int threads) {
  require(!candidates.empty(), "select_bandwidth: no candidates");
  require(data.size() >= 2, "select_bandwidth: need at least 2 data points");
  std::size_t d = data.front().size();
  Rng ref_rng = rng.stream("reference");
  std::vector<Vec> noise(data.size());
  for (std::size_t i = 0; i < noise.size(); ++i)
    noise[i] = ref_rng.stream(static_cast<std::uint64_t>(i)).normal_vec(d);

  Vec sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  MmdConfig cfg;
  std::vector<Vec> corrupted(data.size());
  for (double sigma : sorted) {
    require(sigma > 0.0, "select_bandwidth: candidates must be positive");
    double scale = 1.0 / std::sqrt(1.0 + sigma * sigma);
    for (std::size_t i = 0; i < data.size(); ++i) {
      corrupted[i] = data[i];
      for (std::size_t k = 0; k < d; ++k)
        corrupted[i][k] = scale * (corrupted[i][k] + sigma * noise[i][k]);
    }
    cfg.bandwidth = sigma;
    if (mmd_unbiased(data, corrupted, cfg, threads) > 0.0) return sigma;
  }
  return sorted.front();
}

BandError ood_band_error(const ErrorField& field, const GaussianMixtureSpec& spec,
                         double band_sigmas) {
  spec.validate();
  require(spec.dim == 1, "ood_band_error: 1D specs only");
  require(band_sigmas > 0.0, "ood_band_error: band width must be positive");
  require(field.values.size() == field.alpha_grid.size(), "ood_band_error: malformed field");
  BandError out;
  double in_sum = 0.0, out_sum = 0.0;
  for (std::size_t r = 0; r < field.values.size(); ++r) {
    GaussianMixtureSpec noisy = noised_spec(spec, log_snr(field.alpha_grid[r]));
    require(field.values[r].size() == field.x_grid.size(), "ood_band_error: malformed row");
    for (std::size_t c = 0; c < field.values[r].size(); ++c) {
      double x = field.x_grid[c][0];
      bool in_band = false;
      for (std::size_t k = 0; k < noisy.means.size() && !in_band; ++k)
        in_band = std::abs(x - noisy.means[k][0]) <= band_sigmas * noisy.stddevs[k];
      if (in_band) {
        in_sum += field.values[r][c];
        out.in_band_cells += 1;
      } else {
        out_sum += field.values[r][c];
        out.out_band_cells += 1;
      }
    }
  }
  if (out.in_band_cells > 0) out.in_band_mean = in_sum / static_cast<double>(out.in_band_cells);
  if (out.out_band_cells > 0) out.out_band_mean = out_sum / static_cast<double>(out.out_band_cells);
  return out;
}

}  // namespace difflab
