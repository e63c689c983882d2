#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace bpo {

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream seed from a root seed and a key path, e.g.
// (seed, repetition, trajectory index). Streams depend only on the keys, so
// the order in which they are consumed does not matter.
std::uint64_t stream_seed(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> keys);

// Key tags for the different sampling purposes of one iteration.
enum class StreamPurpose : std::uint64_t {
  kBpo = 1,
  kPg = 2,
  kOnPolicy = 3,
  kInitial = 4,
  kEvaluation = 5,
  kSelection = 6,
  kInitialState = 7,
};

inline std::uint64_t key(StreamPurpose p) {
  return static_cast<std::uint64_t>(p);
}

// 64-bit Mersenne twister with a Box-Muller normal generator. Both pieces are
// fully specified, so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Gamma(1) draw, used for Dirichlet(1) sampling.
  double exponential();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bpo
