#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace thc {

// mt19937_64 with hand-rolled distributions. std:: distributions are
// implementation-defined, which would break byte-identical reruns across
// toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform on the open interval (0,1)
  double uniform() { return (static_cast<double>(gen_() >> 11) + 0.5) * kInv53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int n) {  // [0, n)
    return static_cast<int>(gen_() % static_cast<uint64_t>(n));
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = uniform(), v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(2.0 * kPi * v);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * v);
  }

  // log(U/(1-U)), U uniform on (0,1); uniform() never hits 0 or 1, the
  // guard covers denormal weirdness only
  double logistic() {
    double u = uniform();
    while (u <= 0.0 || u >= 1.0) u = uniform();
    return std::log(u / (1.0 - u));
  }

  // independent stream for a sub-task
  Rng fork(uint64_t salt) {
    uint64_t s = gen_() ^ (salt * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
    return Rng(s);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
      std::swap(v[i], v[uniform_int(i + 1)]);
  }

 private:
  static constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace thc
