// Shared fixtures for the unit tests.
#pragma once

#include <random>

#include "ncw/core.hpp"

namespace testutil {

inline ncw::Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  ncw::Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = d(rng);
  return m;
}

// Symmetric positive definite matrix with eigenvalues drawn from [lo, hi].
inline ncw::Matrix random_spd(int n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  const ncw::Matrix q = random_matrix(n, n, seed + 1).householderQr().householderQ();
  ncw::Vector d(n);
  for (int i = 0; i < n; ++i) d(i) = u(rng);
  ncw::Matrix m = q * d.asDiagonal() * q.transpose();
  return 0.5 * (m + m.transpose());
}

inline double rel_frob(const ncw::Matrix& a, const ncw::Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace testutil
