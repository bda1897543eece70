// Ensemble-averaged positions of eigenvalues separated from the bulk.
//
// Index convention: k is 1-based into the ascending spectrum, so k = n is the
// largest eigenvalue. Projected averages <Q_k X> are taken over the
// (n - 1)-dimensional range of Q_k; with that normalization the general
// formulas reproduce the rank-one closed forms exactly.
#pragma once

#include <optional>
#include <utility>

#include "ncw/core.hpp"
#include "ncw/linalg.hpp"

namespace ncw {

struct DegenerateEigenvalue : Error {
  using Error::Error;
};
struct NonCommuting : Error {
  using Error::Error;
};

struct OutlierPrediction {
  int k = 0;
  double lambda_bar = 0.0;
  bool valid = false;  // threshold_lhs > threshold_rhs
  double threshold_lhs = 0.0;
  double threshold_rhs = 0.0;
};

// Equal cross-correlations xi_jk = delta_jk + (1 - delta_jk) mu0^2, exact form.
// valid iff n mu0^2 > sqrt(kappa).
OutlierPrediction outlier_cwe_equal_cross(int n, double mu0_sq, double sigma2, double kappa);
// Large-n simplification sigma2 (n mu0^2 + 1)(n mu0^2 + kappa) / (n mu0^2).
double outlier_cwe_equal_cross_large_n(int n, double mu0_sq, double sigma2, double kappa);

// General xi: lambda_bar = sigma2 l_k (1 - kappa + kappa l_k Phi_k) with
// Phi_k = <Q_k (l_k - xi)^{-1}>. Valid when the position grows with the spike
// l_k (the separation transition is where that derivative vanishes); reported
// as lhs = <Q_k xi^2 (l_k - xi)^{-2}>^{-1/2} against rhs = sqrt(kappa).
OutlierPrediction outlier_cwe_general(const SymmetricEigen& xi_eigen, int k, double sigma2, double kappa);

// Rank-one mean B_jv = mu: lambda_bar = (n mu^2 + s)(n mu^2 + s kappa)/(n mu^2),
// valid iff n mu^2 > sqrt(kappa) sigma2.
OutlierPrediction outlier_ncwe_rank1(int n, double mu_sq, double sigma2, double kappa);

// General zeta: lambda_bar = (1 + s kappa Phi_k)[s (1 - kappa) + z_k (1 + s kappa Phi_k)],
// Phi_k = <Q_k (z_k - zeta)^{-1}>. Valid when d lambda_bar / d z_k > 0,
// reported as lhs = (1 + s kappa Phi_k)^2 against
// rhs = s kappa <Q_k (z_k - zeta)^{-2}> (s (1 - kappa) + 2 z_k (1 + s kappa Phi_k)).
OutlierPrediction outlier_ncwe(const SymmetricEigen& zeta_eigen, int k, double sigma2, double kappa);

// Equal cross-correlations plus rank-one mean:
// lambda_bar = (n D + s)(n D + s kappa)/(n D) with D = mu0^2 s + mu^2,
// valid iff n D > sqrt(kappa) s.
OutlierPrediction outlier_nccwe_equal_cross(int n, double mu0_sq, double mu_sq, double sigma2, double kappa);

// Commuting xi and zeta given in a common eigenbasis (zeta_in_xi_basis must be
// diagonal): lambda_bar = (1 + s kappa Psi_k)(s x_k + z_k),
// Psi_k = <Q_k xi [s (x_k - xi) + z_k]^{-1}>. Valid when lambda_bar grows with
// the combined spike s x_k + z_k; lhs = <Q_k s^2 xi^2 [s (x_k - xi) + z_k]^{-2}>^{-1/2},
// rhs = sqrt(kappa).
OutlierPrediction outlier_nccwe(const SymmetricEigen& xi_eigen, const Matrix& zeta_in_xi_basis, int k,
                                double sigma2, double kappa);

// Eigenbasis of xi in which zeta is also diagonal (degenerate xi eigenspaces
// are rotated to diagonalize zeta). Throws NonCommuting when
// ||xi zeta - zeta xi||_F >= 1e-10 ||xi|| ||zeta||.
std::pair<SymmetricEigen, Matrix> common_eigenbasis(const Matrix& xi, const Matrix& zeta);

}  // namespace ncw
