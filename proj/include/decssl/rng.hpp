#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace decssl {

/// Deterministic random stream with explicit child-stream derivation.
///
/// All stochastic operations in the library take an Rng handle so results are
/// reproducible and independent of execution schedule: a worker's stream is
/// derived from (master seed, stable ids) rather than from call order.
/// The normal/uniform transforms are implemented here instead of using
/// <random> distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : base_seed_(seed), engine_(mix64(seed)) {}

  /// Child stream keyed by the *original* seed of this stream plus tag words.
  /// Independent of how much of this stream has been consumed.
  Rng derive(std::uint64_t a) const { return Rng(combine(combine(base_seed_, 0x9E6B'55A1ull), a)); }
  Rng derive(std::uint64_t a, std::uint64_t b) const {
    return Rng(combine(combine(combine(base_seed_, 0x9E6B'55A2ull), a), b));
  }
  Rng derive(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
    return Rng(combine(combine(combine(combine(base_seed_, 0x9E6B'55A3ull), a), b), c));
  }

  std::uint64_t seed() const { return base_seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1].
  double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t bound = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= bound);
    return static_cast<int>(x % un);
  }

  bool coin() { return (next_u64() & 1ull) != 0; }

  /// Standard normal via the Marsaglia polar method (pairs cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  /// Gamma(alpha, 1) via Marsaglia-Tsang squeeze; alpha > 0.
  double gamma(double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("Rng::gamma: alpha must be positive");
    if (alpha < 1.0) {
      const double g = gamma(alpha + 1.0);
      return g * std::pow(uniform_pos(), 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Dirichlet(alpha * 1_k) on the simplex.
  std::vector<double> dirichlet(double alpha, int k) {
    std::vector<double> p(static_cast<std::size_t>(k));
    double total = 0.0;
    for (auto& pi : p) {
      pi = gamma(alpha);
      total += pi;
    }
    for (auto& pi : p) pi /= total;
    return p;
  }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static std::uint64_t combine(std::uint64_t h, std::uint64_t w) {
    return mix64(h ^ (mix64(w) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2)));
  }

  std::uint64_t base_seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace decssl
