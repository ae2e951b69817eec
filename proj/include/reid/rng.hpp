#ifndef REID_RNG_HPP_
#define REID_RNG_HPP_

#include <cstdint>
#include <random>

namespace reid {

// Seedable 64-bit generator with a platform-independent stream.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard distributions are not, so every derived draw is
// computed here:
//   uniform()      top 53 bits of one engine output, scaled to [0, 1)
//   uniform_int(n) rejection sampling on the engine output (unbiased)
//   normal()       Box-Muller on two uniform() draws, second value cached
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream; advances this generator by one draw.
  Rng split() { return Rng(next_u64() ^ 0x9E3779B97F4A7C15ULL); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace reid

#endif  // REID_RNG_HPP_
