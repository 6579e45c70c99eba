#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ritr {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Deterministic draw stream. All samplers reduce to raw uniforms from a
/// mt19937_64, so a stream's output depends only on its (seed, stream id)
/// derivation and never on platform library details or thread schedule.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Independent substream keyed by (seed, id, sub); used to give every
  /// replicate its own stream so serial and parallel runs agree.
  static RandomStream derive(std::uint64_t seed, std::uint64_t id, std::uint64_t sub = 0) {
    std::uint64_t s = seed;
    std::uint64_t h = detail::splitmix64(s);
    s ^= (id + 0x9e3779b97f4a7c15ULL) * 0xff51afd7ed558ccdULL;
    h ^= detail::splitmix64(s);
    s ^= (sub + 0x2545f4914f6cdd1dULL) * 0xc4ceb9fe1a85ec53ULL;
    h ^= detail::splitmix64(s);
    return RandomStream(h);
  }

  /// Uniform on the open interval (0,1).
  double uniform01() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  /// Standard normal via Box-Muller (two uniforms per draw, no state).
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double log_normal() { return std::exp(normal()); }

  double cauchy() { return std::tan(M_PI * (uniform01() - 0.5)); }

  double exponential() { return -std::log(uniform01()); }

  /// Gamma(1,1) - 1: a centered standard exponential.
  double gamma_centered() { return exponential() - 1.0; }

  int bernoulli(double p) { return uniform01() < p ? 1 : 0; }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ritr
