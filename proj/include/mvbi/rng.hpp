#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "mvbi/matrix.hpp"

namespace mvbi {

/// Seeded random stream. Only the raw 64-bit engine output is used; all
/// derived distributions are implemented here so streams are identical on
/// every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  double normal();
  /// Derives an independent child stream.
  Rng split();

  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);
  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mvbi
