#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "difflab/common.hpp"

namespace difflab {

// Counter-based stream RNG (splitmix64 core). A generator is identified by an
// immutable key; child streams are derived from (key, index) or (key, name),
// so per-item streams match between serial and parallel execution and
// between runs. Draws do not depend on any global state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ull)), ctr_(0) {}

  // Independent stream for a named phase ("train", "data", "sampler", "eval").
  Rng stream(std::string_view name) const {
    return Rng(key_ ^ mix(fnv1a(name.data(), name.size())), 0);
  }

  // Independent stream for item `index` (batch element, node, sample, ...).
  Rng stream(std::uint64_t index) const {
    return Rng(key_ ^ mix(index * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull), 0);
  }

  std::uint64_t next_u64() {
    std::uint64_t z = key_ + (++ctr_) * 0x9e3779b97f4a7c15ull;
    return mix(z);
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Box-Muller, one value per call so call sites stay stream-stable.
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  Vec normal_vec(std::size_t n) {
    Vec v(n);
    for (auto& x : v) x = normal();
    return v;
  }

  std::uint64_t key() const { return key_; }

 private:
  Rng(std::uint64_t key, std::uint64_t ctr) : key_(key), ctr_(ctr) {}

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t ctr_;
};

}  // namespace difflab
