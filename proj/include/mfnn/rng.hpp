#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mfnn/tensor.hpp"

namespace mfnn {

// mt19937-based generator with hand-rolled variate transforms so sampled
// values do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}

  double uniform() {  // [0, 1), 53 random bits
    const std::uint64_t a = eng_() >> 5;  // 27 bits
    const std::uint64_t b = eng_() >> 6;  // 26 bits
    return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b)) *
           (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    const std::uint32_t span = static_cast<std::uint32_t>(hi - lo + 1);
    return lo + static_cast<int>(eng_() % span);
  }

  double normal() {  // Box-Muller
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Tensor normal_tensor(std::vector<int> shape, double mean, double stddev) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(normal(mean, stddev));
    return t;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[static_cast<std::size_t>(uniform_int(0, static_cast<int>(i) - 1))]);
  }

  std::uint32_t raw() { return eng_(); }

 private:
  std::mt19937 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable stream derivation: child = mix(parent_seed, stream_id).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace mfnn
