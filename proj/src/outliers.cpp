#include "ncw/outliers.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace ncw {

namespace {

constexpr double kGapTol = 1e-10;

void check_index(int k, Eigen::Index n) {
  if (n < 2) throw Error("separated eigenvalue needs dimension >= 2");
  if (k < 1 || k > n) throw Error("eigenvalue index " + std::to_string(k) + " out of range");
}

void check_gap(double gap, double scale) {
  if (std::abs(gap) <= kGapTol * std::max(std::abs(scale), std::numeric_limits<double>::min())) {
    throw DegenerateEigenvalue("eigenvalue not separated from the rest of the spectrum");
  }
}

double infinite_position() { return std::numeric_limits<double>::infinity(); }

}  // namespace

OutlierPrediction outlier_cwe_equal_cross(int n, double mu0_sq, double sigma2, double kappa) {
  if (n < 2) throw Error("outlier_cwe_equal_cross: n >= 2 required");
  if (mu0_sq < 0.0 || mu0_sq >= 1.0) throw Error("outlier_cwe_equal_cross: mu0^2 must lie in [0, 1)");
  OutlierPrediction p;
  p.k = n;
  const double nm = n * mu0_sq;
  p.lambda_bar = nm > 0.0 ? sigma2 * ((n - 1) * mu0_sq + 1.0) * ((n - kappa) * mu0_sq + kappa) / nm
                          : infinite_position();
  p.threshold_lhs = nm;
  p.threshold_rhs = std::sqrt(kappa);
  p.valid = p.threshold_lhs > p.threshold_rhs;
  return p;
}

double outlier_cwe_equal_cross_large_n(int n, double mu0_sq, double sigma2, double kappa) {
  const double nm = n * mu0_sq;
  return sigma2 * (nm + 1.0) * (nm + kappa) / nm;
}

OutlierPrediction outlier_cwe_general(const SymmetricEigen& xi_eigen, int k, double sigma2, double kappa) {
  const Vector& ev = xi_eigen.eigenvalues;
  const Eigen::Index n = ev.size();
  check_index(k, n);
  const double spike = ev(k - 1);
  double phi = 0.0, spread = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == k - 1) continue;
    const double gap = spike - ev(j);
    check_gap(gap, spike);
    phi += 1.0 / gap;
    spread += ev(j) * ev(j) / (gap * gap);
  }
  phi /= static_cast<double>(n - 1);
  spread /= static_cast<double>(n - 1);

  OutlierPrediction p;
  p.k = k;
  p.lambda_bar = sigma2 * spike * (1.0 - kappa + kappa * spike * phi);
  p.threshold_lhs = 1.0 / std::sqrt(spread);
  p.threshold_rhs = std::sqrt(kappa);
  p.valid = p.threshold_lhs > p.threshold_rhs;
  return p;
}

OutlierPrediction outlier_ncwe_rank1(int n, double mu_sq, double sigma2, double kappa) {
  if (n < 1) throw Error("outlier_ncwe_rank1: n >= 1 required");
  OutlierPrediction p;
  p.k = n;
  const double nm = n * mu_sq;
  p.lambda_bar = nm > 0.0 ? (nm + sigma2) * (nm + sigma2 * kappa) / nm : infinite_position();
  p.threshold_lhs = nm;
  p.threshold_rhs = std::sqrt(kappa) * sigma2;
  p.valid = p.threshold_lhs > p.threshold_rhs;
  return p;
}

OutlierPrediction outlier_ncwe(const SymmetricEigen& zeta_eigen, int k, double sigma2, double kappa) {
  const Vector& ev = zeta_eigen.eigenvalues;
  const Eigen::Index n = ev.size();
  check_index(k, n);
  const double spike = ev(k - 1);
  double phi = 0.0, phi2 = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == k - 1) continue;
    const double gap = spike - ev(j);
    check_gap(gap, spike);
    phi += 1.0 / gap;
    phi2 += 1.0 / (gap * gap);
  }
  phi /= static_cast<double>(n - 1);
  phi2 /= static_cast<double>(n - 1);

  const double s = sigma2 * kappa;
  const double u = 1.0 + s * phi;
  OutlierPrediction p;
  p.k = k;
  p.lambda_bar = u * (sigma2 * (1.0 - kappa) + spike * u);
  p.threshold_lhs = u * u;
  p.threshold_rhs = s * phi2 * (sigma2 * (1.0 - kappa) + 2.0 * spike * u);
  p.valid = p.threshold_lhs > p.threshold_rhs;
  return p;
}

OutlierPrediction outlier_nccwe_equal_cross(int n, double mu0_sq, double mu_sq, double sigma2, double kappa) {
  if (n < 2) throw Error("outlier_nccwe_equal_cross: n >= 2 required");
  OutlierPrediction p;
  p.k = n;
  const double nd = n * (mu0_sq * sigma2 + mu_sq);
  p.lambda_bar = nd > 0.0 ? (nd + sigma2) * (nd + sigma2 * kappa) / nd : infinite_position();
  p.threshold_lhs = nd;
  p.threshold_rhs = std::sqrt(kappa) * sigma2;
  p.valid = p.threshold_lhs > p.threshold_rhs;
  return p;
}

OutlierPrediction outlier_nccwe(const SymmetricEigen& xi_eigen, const Matrix& zeta_in_xi_basis, int k,
                                double sigma2, double kappa) {
  const Vector& ev = xi_eigen.eigenvalues;
  const Eigen::Index n = ev.size();
  check_index(k, n);
  if (zeta_in_xi_basis.rows() != n || zeta_in_xi_basis.cols() != n) {
    throw Error("outlier_nccwe: zeta dimension mismatch");
  }
  const Vector zd = zeta_in_xi_basis.diagonal();
  const double total = zeta_in_xi_basis.norm();
  if (total > 0.0 && (zeta_in_xi_basis - Matrix(zd.asDiagonal())).norm() >= kGapTol * total) {
    throw NonCommuting("zeta is not diagonal in the supplied xi eigenbasis");
  }

  const double x_k = ev(k - 1);
  const double z_k = zd(k - 1);
  const double spike = sigma2 * x_k + z_k;
  double psi = 0.0, spread = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == k - 1) continue;
    const double den = sigma2 * (x_k - ev(j)) + z_k;
    check_gap(den, spike);
    psi += ev(j) / den;
    const double r = sigma2 * ev(j) / den;
    spread += r * r;
  }
  psi /= static_cast<double>(n - 1);
  spread /= static_cast<double>(n - 1);

  OutlierPrediction p;
  p.k = k;
  p.lambda_bar = (1.0 + sigma2 * kappa * psi) * spike;
  p.threshold_lhs = 1.0 / std::sqrt(spread);
  p.threshold_rhs = std::sqrt(kappa);
  p.valid = p.threshold_lhs > p.threshold_rhs;
  return p;
}

std::pair<SymmetricEigen, Matrix> common_eigenbasis(const Matrix& xi, const Matrix& zeta) {
  if (!commute(xi, zeta, kGapTol)) throw NonCommuting("xi and zeta do not commute");
  SymmetricEigen eig = sym_eigen(xi);
  const Eigen::Index n = eig.eigenvalues.size();
  const double scale = eig.eigenvalues.cwiseAbs().maxCoeff();
  Eigen::Index start = 0;
  while (start < n) {
    Eigen::Index end = start + 1;
    while (end < n && eig.eigenvalues(end) - eig.eigenvalues(end - 1) <= kGapTol * scale) ++end;
    if (end - start > 1) {
      const Matrix basis = eig.eigenvectors.middleCols(start, end - start);
      const Matrix block = basis.transpose() * zeta * basis;
      const SymmetricEigen inner = sym_eigen(0.5 * (block + block.transpose()));
      eig.eigenvectors.middleCols(start, end - start) = basis * inner.eigenvectors;
    }
    start = end;
  }
  Matrix rotated = eig.eigenvectors.transpose() * zeta * eig.eigenvectors;
  return {std::move(eig), 0.5 * (rotated + rotated.transpose())};
}

}  // namespace ncw
