#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "ganlab/tensor.hpp"

namespace ganlab {

// Deterministic, self-contained PRNG (xoshiro256++ seeded via splitmix64).
// Stateless stream derivation lets the training loop resume from a
// checkpoint mid-run and reproduce the remaining steps exactly: every
// consumer builds its generator from (seed, tag, counter) instead of
// advancing one global stream.
class Rng {
public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (int i = 0; i < 4; ++i) s_[i] = splitmix64(x);
    have_spare_ = false;
    spare_ = 0.0;
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Box-Muller; caches the second variate.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  int64_t next_below(int64_t n) {
    return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  Tensor normal_tensor(Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    double* p = t.mutable_data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = next_normal();
    return t;
  }

  Tensor uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape));
    double* p = t.mutable_data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = next_uniform(lo, hi);
    return t;
  }

private:
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
  bool have_spare_;
  double spare_;
};

// Hash-combines a seed with a stream tag and counters so independent
// consumers never share a stream.
inline uint64_t rng_stream(uint64_t seed, std::string_view tag, uint64_t a = 0,
                           uint64_t b = 0) {
  uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  auto mix = [&h](uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0x100000001b3ULL;
  };
  for (char c : tag) mix(static_cast<uint64_t>(static_cast<unsigned char>(c)));
  mix(a);
  mix(b);
  return h;
}

}  // namespace ganlab
