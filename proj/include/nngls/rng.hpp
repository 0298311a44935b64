#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace nngls {

// splitmix64 mixer, the basis of all seed derivation in this project.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream tags for seed derivation. Every source of randomness draws from a
// stream derived as
//   derive_seed(master, tag, index) = sm64(sm64(sm64(master) ^ sm64(tag)) ^ sm64(index))
// so identical (master seed, tag, index) triplets reproduce the stream on any
// machine, and replicate `index` streams are independent of each other.
enum class Stream : std::uint64_t {
  simulation = 1,
  weights = 2,
  split = 3,
  batches = 4,
  bootstrap = 5,
  replicate = 6,
  knots = 7,
};

inline std::uint64_t derive_seed(std::uint64_t master, Stream tag, std::uint64_t index = 0) {
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ splitmix64(static_cast<std::uint64_t>(tag)));
  return splitmix64(s ^ splitmix64(index));
}

// Seeded generator: mt19937_64 core (sequence fixed by the C++ standard) with
// hand-rolled uniform/normal transforms so draws do not depend on any
// library's distribution implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform on [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Marsaglia's polar method (no trig, spare cached)
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

  // unbiased integer in [0, n) by rejection
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace nngls
