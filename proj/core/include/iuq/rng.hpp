#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace iuq {

/// Deterministic random number generator with explicit variate generation.
///
/// Standard-library distributions are implementation-defined, so all variates
/// here are produced from raw mt19937_64 output directly. Given the same
/// (seed, stream) pair the sequence is identical on every platform. Distinct
/// stream values yield statistically independent generators, which is how
/// chains, ensemble members, and worker tasks get their own streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : engine_(mix(seed, stream)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1p-53;
  }

  /// Uniform on [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Standard normal via Box-Muller (cached second variate).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * kPi * u2;
    cached_ = r * std::sin(t);
    has_cached_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_int(i)]);
    }
  }

  /// Derive an independent generator for a sub-task of this stream.
  Rng fork(std::uint64_t substream) const {
    return Rng(base_, (stream_ << 20) ^ (substream + 1));
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t splitmix(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    base_ = seed;
    stream_ = stream;
    std::uint64_t s = seed;
    std::uint64_t h = splitmix(s);
    s ^= (stream + 1) * 0xD6E8FEB86659FD93ULL;
    h ^= splitmix(s);
    h ^= splitmix(s);
    return h;
  }

  std::uint64_t base_ = 0;
  std::uint64_t stream_ = 0;
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace iuq
