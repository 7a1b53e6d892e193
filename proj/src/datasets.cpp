#include "difflab/datasets.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace difflab {
namespace {

[[noreturn]] void parse_error(const std::string& path, int line, const std::string& what) {
  throw ConfigError(path + ":" + std::to_string(line) + ": " + what);
}

std::vector<Vec> read_xy_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  std::vector<Vec> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::stringstream ss(line);
    std::string fx, fy, extra;
    if (!std::getline(ss, fx, ',') || !std::getline(ss, fy, ','))
      parse_error(path, lineno, "expected two comma-separated fields");
    if (std::getline(ss, extra, ',') && !extra.empty())
      parse_error(path, lineno, "expected exactly two fields");
    char* endx = nullptr;
    char* endy = nullptr;
    double x = std::strtod(fx.c_str(), &endx);
    double y = std::strtod(fy.c_str(), &endy);
    bool bad_x = endx == fx.c_str();
    bool bad_y = endy == fy.c_str();
    if (bad_x || bad_y) {
      if (pts.empty()) continue;  // header row
      parse_error(path, lineno, "non-numeric field");
    }
    if (!std::isfinite(x) || !std::isfinite(y)) parse_error(path, lineno, "non-finite value");
    pts.push_back(Vec{x, y});
  }
  if (pts.empty()) throw ConfigError(path + ": no data rows");
  return pts;
}

}  // namespace

Vec Dataset::normalize(const Vec& p) const {
  require(static_cast<int>(p.size()) == dim, "Dataset::normalize: dimension mismatch");
  Vec out(p.size());
  for (std::size_t c = 0; c < p.size(); ++c) out[c] = (p[c] - center[c]) / scale;
  return out;
}

Vec Dataset::denormalize(const Vec& p) const {
  require(static_cast<int>(p.size()) == dim, "Dataset::denormalize: dimension mismatch");
  Vec out(p.size());
  for (std::size_t c = 0; c < p.size(); ++c) out[c] = p[c] * scale + center[c];
  return out;
}

void Dataset::validate() const {
  require(dim >= 1, "Dataset: empty dimension");
  require(static_cast<int>(center.size()) == dim, "Dataset: malformed normalization record");
  require(scale > 0.0 && std::isfinite(scale), "Dataset: bad normalization scale");
  for (const Vec& p : points) {
    require(static_cast<int>(p.size()) == dim, "Dataset: inconsistent point dimension");
    for (double v : p) require(std::isfinite(v), "Dataset: non-finite point");
  }
}

Dataset load_dino(const std::string& path, int n, std::uint64_t seed, double jitter) {
  require(n >= 1, "load_dino: need at least one point");
  require(jitter >= 0.0, "load_dino: negative jitter");
  std::vector<Vec> base = read_xy_csv(path);
  std::size_t B = base.size();

  Dataset ds;
  ds.dim = 2;
  ds.center.assign(2, 0.0);
  for (const Vec& p : base)
    for (int c = 0; c < 2; ++c) ds.center[static_cast<std::size_t>(c)] += p[static_cast<std::size_t>(c)];
  for (double& v : ds.center) v /= static_cast<double>(B);
  double max_abs = 0.0;
  for (const Vec& p : base)
    for (int c = 0; c < 2; ++c)
      max_abs = std::max(max_abs, std::abs(p[static_cast<std::size_t>(c)] - ds.center[static_cast<std::size_t>(c)]));
  require(max_abs > 0.0, "load_dino: degenerate point cloud");
  ds.scale = max_abs;

  Rng rng = Rng(seed).stream("dino");
  ds.points.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vec p = ds.normalize(base[static_cast<std::size_t>(i) % B]);
    if (jitter > 0.0) {
      Rng s = rng.stream(static_cast<std::uint64_t>(i));
      for (double& v : p) v += jitter * s.normal();
    }
    ds.points[static_cast<std::size_t>(i)] = std::move(p);
  }
  ds.validate();
  return ds;
}

Dataset sample_mixture(const GaussianMixtureSpec& spec, int n, std::uint64_t seed) {
  spec.validate();
  require(n >= 1, "sample_mixture: need at least one point");
  Dataset ds;
  ds.dim = spec.dim;
  ds.center.assign(static_cast<std::size_t>(spec.dim), 0.0);
  ds.scale = 1.0;
  Rng rng = Rng(seed).stream("mixture");
  ds.points.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng s = rng.stream(static_cast<std::uint64_t>(i));
    double u = s.uniform();
    std::size_t k = 0;
    double acc = 0.0;
    for (; k + 1 < spec.weights.size(); ++k) {
      acc += spec.weights[k];
      if (u < acc) break;
    }
    Vec p(static_cast<std::size_t>(spec.dim));
    for (int c = 0; c < spec.dim; ++c)
      p[static_cast<std::size_t>(c)] = spec.means[k][static_cast<std::size_t>(c)] + spec.stddevs[k] * s.normal();
    ds.points[static_cast<std::size_t>(i)] = std::move(p);
  }
  ds.validate();
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, std::uint64_t seed) {
  ds.validate();
  require(train_frac > 0.0 && train_frac < 1.0, "split: train_frac must lie in (0, 1)");
  std::size_t n = ds.points.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng = Rng(seed).stream("split");
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  std::size_t n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  n_train = std::min(std::max<std::size_t>(n_train, 1), n - 1);
  Dataset train = ds, val = ds;
  train.points.clear();
  val.points.clear();
  for (std::size_t i = 0; i < n; ++i)
    (i < n_train ? train : val).points.push_back(ds.points[idx[i]]);
  return {std::move(train), std::move(val)};
}

}  // namespace difflab
