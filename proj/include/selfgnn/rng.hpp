#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace selfgnn {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256++ with splitmix64 seeding. 4x64-bit state, trivially
// serializable, identical output on every platform. Every stochastic choice
// in the library flows through this generator.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : state_) w = splitmix64(sm);
  }

  std::uint64_t next() {
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

  // [0, 1) with 53-bit resolution
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n); modulo bias is negligible (< 2^-49) for every n used here
  std::uint64_t below(std::uint64_t n) { return next() % n; }

  // Box-Muller, always consumes exactly two uniforms
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  const State& state() const { return state_; }
  void set_state(const State& s) { state_ = s; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  State state_{};
};

// Purpose tags keep RNG streams independent of each other: disabling one
// consumer (e.g. the SSL pair sampler in an ablation) must not shift the
// draws seen by any other consumer.
enum class Stream : std::uint64_t {
  Init = 1,
  Shuffle = 2,
  PosSample = 3,
  NegSample = 4,
  EdgeDropout = 5,
  SslPairs = 6,
  SplitSample = 7,
  Noise = 8,
  Synthetic = 9,
};

// Deterministic stream derivation from (seed, purpose, a, b); typically
// a = epoch and b = batch index.
inline Rng make_stream(std::uint64_t seed, Stream purpose, std::uint64_t a = 0,
                       std::uint64_t b = 0) {
  std::uint64_t acc = seed;
  std::uint64_t h = splitmix64(acc);
  acc ^= static_cast<std::uint64_t>(purpose) * 0x9e3779b97f4a7c15ULL;
  h ^= splitmix64(acc);
  acc ^= (a + 1) * 0xd1342543de82ef95ULL;
  h ^= splitmix64(acc);
  acc ^= (b + 1) * 0xaf251af3b0f025b5ULL;
  h ^= splitmix64(acc);
  return Rng(h);
}

}  // namespace selfgnn
