// Problem definition for (non-central, correlated) Wishart ensembles
// W = (xi^{1/2} A + B)(xi^{1/2} A + B)^dagger / T.
#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ncw {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;

// Error types shared across the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidSpec : Error {
  using Error::Error;
};
struct NotPositiveDefinite : Error {
  using Error::Error;
};
struct Unsupported : Error {
  using Error::Error;
};

enum class Dyson { Real = 1, Complex = 2 };

// Full problem statement. Build through make_spec() or the model builders so
// that xi is symmetrized and validated.
struct EnsembleSpec {
  int n = 0;
  int t = 0;
  double sigma2 = 1.0;
  Dyson beta = Dyson::Real;
  Matrix xi;  // n x n, symmetric positive definite
  Matrix b;   // n x t, mean of the constituting matrix

  double kappa() const { return static_cast<double>(n) / static_cast<double>(t); }
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Checks every invariant of EnsembleSpec without throwing.
ValidationReport validate_spec(const EnsembleSpec& spec);

// Assembles a spec from raw inputs: symmetrizes xi when its relative
// asymmetry is below 1e-12, then validates. Throws InvalidSpec,
// NotPositiveDefinite or Unsupported.
EnsembleSpec make_spec(int n, int t, double sigma2, int beta, Matrix xi, Matrix b);

struct DerivedMatrices {
  Matrix zeta;     // B B^T / T
  Matrix xi_sqrt;  // symmetric square root of xi
  Vector xi_eigenvalues;
  Matrix xi_eigenvectors;
};

DerivedMatrices derive_matrices(const EnsembleSpec& spec);

// Relative asymmetry ||m - m^T||_F / ||m||_F.
double relative_asymmetry(const Matrix& m);

struct EvaluationPoint {
  double lambda;
  double epsilon;

  EvaluationPoint(double lambda_, double epsilon_);
  Complex z() const { return {lambda, epsilon}; }
};

}  // namespace ncw
