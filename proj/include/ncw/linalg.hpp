// Dense kernels: symmetric eigendecomposition, complex LU solves and the
// normalized resolvent traces used by the matrix-valued Pastur solver.
#pragma once

#include "ncw/core.hpp"

namespace ncw {

struct NoConvergence : Error {
  using Error::Error;
};
struct Singular : Error {
  using Error::Error;
};

struct SymmetricEigen {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // orthonormal columns
};

SymmetricEigen sym_eigen(const Matrix& m);

// Solves m x = rhs by LU with partial pivoting. Throws Singular when a pivot
// falls below 1e-14 times the largest row norm of m.
ComplexMatrix solve_complex(const ComplexMatrix& m, const ComplexMatrix& rhs);

// Same factorization, returning the full inverse.
ComplexMatrix inverse_complex(const ComplexMatrix& m);

// All traces are normalized by N. With X = m^{-1}:
//   g = <X>, g_xi = <xi X>,
//   t_xx = <xi X xi X>, t_xz = <xi X zeta X>, t_zx = <zeta X xi X>,
//   t_zz = <zeta X zeta X>, inv_xi_inv = <X xi X>, inv_zeta_inv = <X zeta X>.
struct ResolventTraces {
  Complex g;
  Complex g_xi;
  Complex t_xx;
  Complex t_xz;
  Complex t_zx;
  Complex t_zz;
  Complex inv_xi_inv;
  Complex inv_zeta_inv;
};

// Reference path: dense xi and zeta, explicit products.
ResolventTraces resolvent_traces(const ComplexMatrix& m, const Matrix& xi, const Matrix& zeta);

// Fast path for xi diagonal (i.e. expressed in its own eigenbasis). Needs a
// single real-by-complex product instead of two, and parallelizes the O(N^2)
// trace reductions.
ResolventTraces resolvent_traces_diag(const ComplexMatrix& m, const Vector& xi_diag, const Matrix& zeta);

// Frobenius-norm commutator test ||a b - b a|| < tol * ||a|| ||b||.
bool commute(const Matrix& a, const Matrix& b, double tol = 1e-10);

}  // namespace ncw
