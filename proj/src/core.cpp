#include "ncw/core.hpp"

#include <cmath>
#include <sstream>

#include "ncw/linalg.hpp"

namespace ncw {

namespace {

constexpr double kSymmetryTol = 1e-12;

}  // namespace

double relative_asymmetry(const Matrix& m) {
  const double norm = m.norm();
  if (norm == 0.0) return 0.0;
  return (m - m.transpose()).norm() / norm;
}

ValidationReport validate_spec(const EnsembleSpec& spec) {
  ValidationReport report;
  auto fail = [&](std::string msg) { report.violations.push_back(std::move(msg)); };

  if (spec.n <= 0) fail("n must be positive");
  if (spec.t <= 0) fail("t must be positive");
  if (spec.n > 0 && spec.t > 0 && spec.t < spec.n) fail("t >= n required");
  if (!(spec.sigma2 > 0.0) || !std::isfinite(spec.sigma2)) fail("sigma2 must be positive");
  if (spec.beta != Dyson::Real && spec.beta != Dyson::Complex) fail("beta must be 1 or 2");

  if (spec.xi.rows() != spec.n || spec.xi.cols() != spec.n) {
    fail("xi must be n x n");
  } else if (spec.n > 0) {
    if (!spec.xi.allFinite()) {
      fail("xi has non-finite entries");
    } else {
      if (relative_asymmetry(spec.xi) > kSymmetryTol) fail("xi not symmetric");
      Matrix sym = 0.5 * (spec.xi + spec.xi.transpose());
      const Vector eig = Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues();
      if (eig.minCoeff() <= 0.0) fail("xi not positive definite");
    }
  }
  if (spec.b.rows() != spec.n || spec.b.cols() != spec.t) {
    fail("b must be n x t");
  } else if (!spec.b.allFinite()) {
    fail("b has non-finite entries");
  }
  return report;
}

EnsembleSpec make_spec(int n, int t, double sigma2, int beta, Matrix xi, Matrix b) {
  if (beta == 4) throw Unsupported("beta = 4 (symplectic) is unsupported");
  if (beta != 1 && beta != 2) throw InvalidSpec("beta must be 1 or 2");

  EnsembleSpec spec;
  spec.n = n;
  spec.t = t;
  spec.sigma2 = sigma2;
  spec.beta = beta == 1 ? Dyson::Real : Dyson::Complex;
  if (xi.rows() == xi.cols() && xi.size() > 0 && xi.allFinite() &&
      relative_asymmetry(xi) <= kSymmetryTol) {
    xi = 0.5 * (xi + xi.transpose()).eval();
  }
  spec.xi = std::move(xi);
  spec.b = std::move(b);

  const ValidationReport report = validate_spec(spec);
  if (!report.ok()) {
    std::ostringstream msg;
    for (std::size_t i = 0; i < report.violations.size(); ++i) {
      msg << (i ? "; " : "") << report.violations[i];
    }
    for (const auto& v : report.violations) {
      if (v == "xi not positive definite") throw NotPositiveDefinite(msg.str());
    }
    throw InvalidSpec(msg.str());
  }
  return spec;
}

DerivedMatrices derive_matrices(const EnsembleSpec& spec) {
  DerivedMatrices d;
  d.zeta = spec.b * spec.b.transpose() / static_cast<double>(spec.t);
  d.zeta = 0.5 * (d.zeta + d.zeta.transpose()).eval();

  const SymmetricEigen eig = sym_eigen(spec.xi);
  if (eig.eigenvalues.size() > 0 && eig.eigenvalues.minCoeff() <= 0.0) {
    throw NotPositiveDefinite("xi not positive definite");
  }
  d.xi_eigenvalues = eig.eigenvalues;
  d.xi_eigenvectors = eig.eigenvectors;
  d.xi_sqrt = eig.eigenvectors * eig.eigenvalues.cwiseSqrt().asDiagonal() * eig.eigenvectors.transpose();
  return d;
}

EvaluationPoint::EvaluationPoint(double lambda_, double epsilon_) : lambda(lambda_), epsilon(epsilon_) {
  if (!(epsilon_ > 0.0)) throw Error("evaluation point needs epsilon > 0");
}

}  // namespace ncw
