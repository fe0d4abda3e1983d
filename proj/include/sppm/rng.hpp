#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>

namespace sppm {

/// Self-contained xoshiro256++ generator with the variate samplers the
/// Gibbs machinery needs. Keeping the algorithms in-house (instead of
/// <random> distributions) makes draws bit-reproducible across standard
/// libraries, which the determinism contract relies on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal via the Marsaglia polar method (second value cached).
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

  /// Gamma(shape) with unit scale, Marsaglia-Tsang squeeze method.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("Rng::gamma: shape must be positive");
    if (shape < 1.0) {
      // boost the shape and correct with a uniform power
      return gamma(shape + 1.0) * std::pow(uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Gamma(shape, rate), mean shape/rate.
  double gamma_rate(double shape, double rate) { return gamma(shape) / rate; }

  /// Inverse gamma IG(shape, b) with mean b/(shape-1): 1/X for X ~ Gamma(shape, rate=b).
  double inv_gamma(double shape, double scale_b) { return scale_b / gamma(shape); }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  /// Index draw from unnormalized log weights via log-sum-exp.
  int categorical_from_log_weights(std::span<const double> logw) {
    if (logw.empty()) throw std::invalid_argument("categorical: empty weight vector");
    double m = -std::numeric_limits<double>::infinity();
    for (double lw : logw) m = std::max(m, lw);
    if (!std::isfinite(m)) throw std::runtime_error("categorical: all weights are zero");
    double total = 0.0;
    for (double lw : logw) total += std::exp(lw - m);
    double u = uniform() * total;
    for (std::size_t j = 0; j + 1 < logw.size(); ++j) {
      u -= std::exp(logw[j] - m);
      if (u <= 0.0) return static_cast<int>(j);
    }
    return static_cast<int>(logw.size()) - 1;
  }

  /// Deterministic derivation of independent substream seeds.
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (a + 1);
    x = splitmix64(x);
    x += 0x9e3779b97f4a7c15ULL * (b + 1);
    return splitmix64(x);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sppm
