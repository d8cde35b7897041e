#pragma once

#include <array>
#include <cstdint>

#include "ldsa/matrix.hpp"

namespace ldsa {

// xoshiro256++ seeded through splitmix64. Identical seeds give identical
// draw sequences on every platform; no libc RNG state is involved.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double next_double();

  double uniform(double lo, double hi);

  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

 private:
  std::array<std::uint64_t, 4> state_;
};

// Entries i.i.d. uniform on [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
Matrix xavier_uniform_init(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace ldsa
