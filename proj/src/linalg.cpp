#include "ncw/linalg.hpp"

#include <cmath>

namespace ncw {

namespace {

constexpr double kPivotTol = 1e-14;

Eigen::PartialPivLU<ComplexMatrix> factorize(const ComplexMatrix& m) {
  if (m.rows() != m.cols()) throw Error("solve_complex: matrix not square");
  if (!m.allFinite()) throw Singular("solve_complex: non-finite matrix entries");
  Eigen::PartialPivLU<ComplexMatrix> lu(m);
  const double scale = m.rows() > 0 ? m.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
  const auto& packed = lu.matrixLU();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    if (std::abs(packed(i, i)) <= kPivotTol * scale) throw Singular("solve_complex: singular matrix");
  }
  return lu;
}

// sum_ij a_ij b_ji
Complex trace_of_product(const ComplexMatrix& a, const ComplexMatrix& b) {
  return a.cwiseProduct(b.transpose()).sum();
}

}  // namespace

SymmetricEigen sym_eigen(const Matrix& m) {
  if (m.rows() != m.cols()) throw Error("sym_eigen: matrix not square");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) throw NoConvergence("sym_eigen: eigensolver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

ComplexMatrix solve_complex(const ComplexMatrix& m, const ComplexMatrix& rhs) {
  if (rhs.rows() != m.rows()) throw Error("solve_complex: rhs does not conform");
  return factorize(m).solve(rhs);
}

ComplexMatrix inverse_complex(const ComplexMatrix& m) { return factorize(m).inverse(); }

ResolventTraces resolvent_traces(const ComplexMatrix& m, const Matrix& xi, const Matrix& zeta) {
  const double n = static_cast<double>(m.rows());
  const ComplexMatrix x = inverse_complex(m);
  const ComplexMatrix p = xi.cast<Complex>() * x;
  const ComplexMatrix q = zeta.cast<Complex>() * x;

  ResolventTraces r;
  r.g = x.trace() / n;
  r.g_xi = p.trace() / n;
  r.t_xx = trace_of_product(p, p) / n;
  r.t_xz = trace_of_product(p, q) / n;
  r.t_zx = trace_of_product(q, p) / n;
  r.t_zz = trace_of_product(q, q) / n;
  r.inv_xi_inv = trace_of_product(x, p) / n;
  r.inv_zeta_inv = trace_of_product(x, q) / n;
  return r;
}

ResolventTraces resolvent_traces_diag(const ComplexMatrix& m, const Vector& xi_diag, const Matrix& zeta) {
  const Eigen::Index dim = m.rows();
  const double n = static_cast<double>(dim);
  const ComplexMatrix x = inverse_complex(m);

  // q = zeta * x as two real products.
  const Matrix q_re = zeta * x.real();
  const Matrix q_im = zeta * x.imag();

  // Accumulate real and imaginary parts separately for the OpenMP reduction.
  double g_re = 0, g_im = 0, gx_re = 0, gx_im = 0;
  double txx_re = 0, txx_im = 0, txz_re = 0, txz_im = 0, tzx_re = 0, tzx_im = 0;
  double tzz_re = 0, tzz_im = 0, ixi_re = 0, ixi_im = 0, iz_re = 0, iz_im = 0;

#pragma omp parallel for schedule(static) reduction(+ : g_re, g_im, gx_re, gx_im, txx_re, txx_im, txz_re, \
                                                        txz_im, tzx_re, tzx_im, tzz_re, tzz_im, ixi_re, ixi_im, \
                                                        iz_re, iz_im)
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double lj = xi_diag(j);
    const Complex xjj = x(j, j);
    g_re += xjj.real();
    g_im += xjj.imag();
    gx_re += lj * xjj.real();
    gx_im += lj * xjj.imag();
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double li = xi_diag(i);
      const Complex xij = x(i, j);
      const Complex xji = x(j, i);
      const Complex qij(q_re(i, j), q_im(i, j));
      const Complex qji(q_re(j, i), q_im(j, i));
      const Complex xx = li * lj * xij * xji;      // (xi X)_ij (xi X)_ji
      const Complex xz = li * xij * qji;           // (xi X)_ij (zeta X)_ji
      const Complex zx = qij * lj * xji;           // (zeta X)_ij (xi X)_ji
      const Complex zz = qij * qji;
      const Complex ixi = xij * lj * xji;          // X_ij (xi X)_ji
      const Complex iz = xij * qji;
      txx_re += xx.real();
      txx_im += xx.imag();
      txz_re += xz.real();
      txz_im += xz.imag();
      tzx_re += zx.real();
      tzx_im += zx.imag();
      tzz_re += zz.real();
      tzz_im += zz.imag();
      ixi_re += ixi.real();
      ixi_im += ixi.imag();
      iz_re += iz.real();
      iz_im += iz.imag();
    }
  }

  ResolventTraces r;
  r.g = Complex(g_re, g_im) / n;
  r.g_xi = Complex(gx_re, gx_im) / n;
  r.t_xx = Complex(txx_re, txx_im) / n;
  r.t_xz = Complex(txz_re, txz_im) / n;
  r.t_zx = Complex(tzx_re, tzx_im) / n;
  r.t_zz = Complex(tzz_re, tzz_im) / n;
  r.inv_xi_inv = Complex(ixi_re, ixi_im) / n;
  r.inv_zeta_inv = Complex(iz_re, iz_im) / n;
  return r;
}

bool commute(const Matrix& a, const Matrix& b, double tol) {
  const double scale = a.norm() * b.norm();
  if (scale == 0.0) return true;
  return (a * b - b * a).norm() < tol * scale;
}

}  // namespace ncw
