#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace difflab {

using Vec = std::vector<double>;

// Bad user input (config file, CLI flags, malformed data files). CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure at runtime (NaN loss, divergence). CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller violated an API precondition (dimension mismatch, bad range).
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractViolation(what);
}

inline int resolve_threads(int threads) {
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (threads == 0) {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
  }
  return threads;
}

// Static block partition of [0, n). Each worker owns a contiguous index range
// and must write only to per-index (or per-block) slots; any reduction happens
// afterwards in index order. Results are then independent of the thread count.
inline void parallel_for(std::int64_t n, int threads,
                         const std::function<void(std::int64_t, std::int64_t)>& body) {
  threads = resolve_threads(threads);
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    body(0, n);
    return;
  }
  int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::int64_t lo = w * chunk;
    std::int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

// FNV-1a, used for config hashes and golden-file hashes of numeric buffers.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

std::string hex64(std::uint64_t v);

}  // namespace difflab
