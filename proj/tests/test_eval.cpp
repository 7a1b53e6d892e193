#include <doctest.h>

#include <cmath>

#include "difflab/eval.hpp"

using namespace difflab;

namespace {

std::vector<Vec> gaussian_cloud(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = rng.stream(static_cast<std::uint64_t>(i)).normal_vec(
        static_cast<std::size_t>(d));
  return out;
}

// plain double-loop U-statistic for cross-checking the kernel-matrix path
double naive_mmd(const std::vector<Vec>& X, const std::vector<Vec>& Y, double sigma) {
  auto k = [sigma](const Vec& a, const Vec& b) {
    double d2 = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
    return std::exp(-d2 / (2.0 * sigma * sigma));
  };
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i)
    for (std::size_t j = 0; j < X.size(); ++j)
      if (i != j) xx += k(X[i], X[j]);
  for (std::size_t i = 0; i < Y.size(); ++i)
    for (std::size_t j = 0; j < Y.size(); ++j)
      if (i != j) yy += k(Y[i], Y[j]);
  for (const Vec& a : X)
    for (const Vec& b : Y) xy += k(a, b);
  double nx = static_cast<double>(X.size()), ny = static_cast<double>(Y.size());
  return xx / (nx * (nx - 1.0)) + yy / (ny * (ny - 1.0)) - 2.0 * xy / (nx * ny);
}

}  // namespace

TEST_CASE("mmd hand value") {
  std::vector<Vec> X{{0.0, 0.0}, {1.0, 0.0}};
  std::vector<Vec> Y{{3.0, 4.0}, {3.0, 5.0}};
  MmdConfig cfg;
  CHECK(mmd_unbiased(X, Y, cfg) == doctest::Approx(1.2130364832602797).epsilon(1e-15));
}

TEST_CASE("mmd is exactly symmetric") {
  std::vector<Vec> X = gaussian_cloud(7, 2, 1);
  std::vector<Vec> Y = gaussian_cloud(9, 2, 2);
  for (Vec& p : Y) p[0] += 0.5;
  MmdConfig cfg;
  cfg.bandwidth = 0.7;
  CHECK(mmd_unbiased(X, Y, cfg) == mmd_unbiased(Y, X, cfg));
}

TEST_CASE("kernel-matrix path agrees with the naive double loop") {
  std::vector<Vec> X = gaussian_cloud(23, 3, 3);
  std::vector<Vec> Y = gaussian_cloud(17, 3, 4);
  MmdConfig cfg;
  cfg.bandwidth = 1.3;
  double fast = mmd_unbiased(X, Y, cfg);
  double slow = naive_mmd(X, Y, 1.3);
  CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
}

TEST_CASE("same-distribution sets give a small statistic") {
  std::vector<Vec> X = gaussian_cloud(400, 2, 5);
  std::vector<Vec> Y = gaussian_cloud(400, 2, 6);
  MmdConfig cfg;
  CHECK(std::fabs(mmd_unbiased(X, Y, cfg)) < 0.02);
  // identical sets sit below zero: the unbiased statistic drops the diagonal
  CHECK(mmd_unbiased(X, X, cfg) < 0.0);
}

TEST_CASE("mmd is threads-invariant bitwise") {
  std::vector<Vec> X = gaussian_cloud(60, 2, 7);
  std::vector<Vec> Y = gaussian_cloud(50, 2, 8);
  MmdConfig cfg;
  CHECK(mmd_unbiased(X, Y, cfg, 1) == mmd_unbiased(X, Y, cfg, 4));
}

TEST_CASE("subsampling above the cap is deterministic and symmetric") {
  std::vector<Vec> X = gaussian_cloud(90, 2, 9);
  std::vector<Vec> Y = gaussian_cloud(80, 2, 10);
  for (Vec& p : Y) p[1] -= 1.0;
  MmdConfig cfg;
  cfg.subsample_cap = 32;
  double v1 = mmd_unbiased(X, Y, cfg);
  double v2 = mmd_unbiased(X, Y, cfg);
  CHECK(v1 == v2);
  CHECK(mmd_unbiased(Y, X, cfg) == v1);
  MmdConfig full;
  CHECK(mmd_unbiased(X, Y, full) != v1);
}

TEST_CASE("mmd config and input guards") {
  MmdConfig bad;
  bad.bandwidth = 0.0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = MmdConfig{};
  bad.subsample_cap = 1;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  std::vector<Vec> one{{0.0}};
  std::vector<Vec> two{{0.0}, {1.0}};
  CHECK_THROWS_AS(mmd_unbiased(one, two, MmdConfig{}), ContractViolation);
}

TEST_CASE("log spacing hits both endpoints") {
  Vec v = log_spaced(1e-3, 1.0, 25);
  REQUIRE(v.size() == 25);
  CHECK(v.front() == 1e-3);
  CHECK(v.back() == 1.0);
  for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] > v[i - 1]);
  CHECK(v[12] == doctest::Approx(std::sqrt(1e-3)).epsilon(1e-12));
  Vec d = default_bandwidth_candidates();
  CHECK(d.size() == 25);
  CHECK(d.front() == 1e-3);
  CHECK(d.back() == 1.0);
  CHECK_THROWS_AS(log_spaced(0.0, 1.0, 5), ContractViolation);
  CHECK_THROWS_AS(log_spaced(0.1, 1.0, 1), ContractViolation);
}

TEST_CASE("bandwidth sweep walks the candidates in ascending order") {
  std::vector<Vec> data = gaussian_cloud(100, 2, 11);
  Vec cands{0.5, 0.05, 0.2};
  auto sweep = bandwidth_sweep(data, cands, Rng(12));
  REQUIRE(sweep.size() == 3);
  CHECK(sweep[0].first == 0.05);
  CHECK(sweep[1].first == 0.2);
  CHECK(sweep[2].first == 0.5);
  auto again = bandwidth_sweep(data, cands, Rng(12));
  for (std::size_t i = 0; i < 3; ++i) CHECK(sweep[i].second == again[i].second);
}

TEST_CASE("selected bandwidth is the first corruption-detecting candidate") {
  Vec cands = default_bandwidth_candidates();

  // standard-normal data is invariant under the corruption channel: no
  // candidate detects, the smallest comes back
  std::vector<Vec> flat = gaussian_cloud(400, 2, 11);
  CHECK(select_bandwidth(flat, cands, Rng(20)) == cands.front());

  // clustered texture: 40 centers, 10 copies each, jitter 0.01; detection
  // lands at the jitter scale, far below the unit gross scale
  std::vector<Vec> pts;
  Rng c = Rng(3).stream("centers");
  for (int k = 0; k < 40; ++k) {
    Vec ctr = c.stream(static_cast<std::uint64_t>(k)).normal_vec(2);
    Rng j = Rng(4).stream("jit").stream(static_cast<std::uint64_t>(k));
    for (int r = 0; r < 10; ++r) {
      Vec e = j.normal_vec(2);
      pts.push_back({0.5 * ctr[0] + 0.01 * e[0], 0.5 * ctr[1] + 0.01 * e[1]});
    }
  }
  double sel = select_bandwidth(pts, cands, Rng(30), 4);
  CHECK(sel > cands.front());
  CHECK(sel < 0.1);
  bool member = false;
  for (double cand : cands) member = member || cand == sel;
  CHECK(member);
  CHECK(select_bandwidth(pts, cands, Rng(30), 2) == sel);

  // exhaustive rescan is its own oracle
  Rng ref = Rng(30).stream("reference");
  std::vector<Vec> xi(pts.size());
  for (std::size_t i = 0; i < xi.size(); ++i)
    xi[i] = ref.stream(static_cast<std::uint64_t>(i)).normal_vec(2);
  double manual = cands.front();
  for (double sigma : cands) {
    double scale = 1.0 / std::sqrt(1.0 + sigma * sigma);
    std::vector<Vec> z(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
      z[i] = {scale * (pts[i][0] + sigma * xi[i][0]), scale * (pts[i][1] + sigma * xi[i][1])};
    MmdConfig cfg;
    cfg.bandwidth = sigma;
    if (mmd_unbiased(pts, z, cfg) > 0.0) {
      manual = sigma;
      break;
    }
  }
  CHECK(sel == manual);
}

TEST_CASE("band split of a hand-built error field") {
  ErrorField field;
  field.t_grid = {0.0};
  field.alpha_grid = {36.0};
  field.x_grid = {Vec{-5.0}, Vec{0.0}, Vec{5.0}};
  field.values = {{1.0, 7.0, 3.0}};
  BandError be = ood_band_error(field, two_mode_spec());
  CHECK(be.in_band_cells == 2);
  CHECK(be.out_band_cells == 1);
  CHECK(be.in_band_mean == 2.0);
  CHECK(be.out_band_mean == 7.0);
  // a wide band swallows the midpoint cell
  BandError wide = ood_band_error(field, two_mode_spec(), 6.0);
  CHECK(wide.out_band_cells == 0);
  CHECK(wide.in_band_mean == doctest::Approx(11.0 / 3.0).epsilon(1e-15));
  GaussianMixtureSpec spec2 = two_mode_spec();
  spec2.dim = 2;
  spec2.means = {Vec{5.0, 0.0}, Vec{-5.0, 0.0}};
  CHECK_THROWS_AS(ood_band_error(field, spec2), ContractViolation);
}
