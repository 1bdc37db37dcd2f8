#ifndef HIPRSSM_RNG_HPP_
#define HIPRSSM_RNG_HPP_

#include <cstdint>
#include <random>

namespace hiprssm {

// splitmix64 step, used to derive independent stream seeds from a master seed.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  return splitmix64(s);
}

// Thin wrapper around mt19937_64 with the distributions the project needs.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
  }

  double normal(double mean = 0.0, double std = 1.0) {
    std::normal_distribution<double> d(mean, std);
    return d(engine_);
  }

  bool bernoulli(double p) {
    std::bernoulli_distribution d(p);
    return d(engine_);
  }

  // Uniform integer in [0, n).
  uint64_t index(uint64_t n) {
    std::uniform_int_distribution<uint64_t> d(0, n - 1);
    return d(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hiprssm

#endif  // HIPRSSM_RNG_HPP_
