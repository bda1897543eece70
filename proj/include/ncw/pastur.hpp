// Newton solvers for the self-consistent (Pastur) equations of the
// correlated, non-central and non-central correlated Wishart ensembles, and
// density curves obtained from them by warm-started continuation in lambda.
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ncw/core.hpp"
#include "ncw/linalg.hpp"

namespace ncw {

struct SolverConfig {
  double tol = 1e-12;
  int max_iter = 200;
  double epsilon = 1e-6;
  double damping = 1.0;
};

// g = <(z - W)^{-1}>, g_xi = <xi (z - W)^{-1}> and the coefficients
//   alpha1 = sigma2 (1 - kappa + kappa z g),
//   alpha2 = 1 / (1 - sigma2 kappa g_xi).
struct ResolventState {
  Complex z;
  Complex g;
  Complex g_xi;
  Complex alpha1;
  Complex alpha2;
  int iterations = 0;
  double residual = 0.0;
};

struct SolverNoConvergence : NoConvergence {
  SolverNoConvergence(const std::string& what, ResolventState last_) : NoConvergence(what), last(last_) {}
  ResolventState last;
};

Complex alpha1(Complex z, Complex g, double sigma2, double kappa);
Complex alpha2(Complex g_xi, double sigma2, double kappa);

// Without a warm start the guess is 1/z, falling back to an epsilon homotopy
// from large broadening when Newton stalls.
ResolventState solve_pastur_cwe(Complex z, const Vector& xi_eigs, double sigma2, double kappa,
                                const SolverConfig& cfg, std::optional<Complex> warm = std::nullopt);

ResolventState solve_pastur_ncwe(Complex z, const Vector& zeta_eigs, double sigma2, double kappa,
                                 const SolverConfig& cfg, std::optional<Complex> warm = std::nullopt);

// The matrix-valued equation, prepared once per (xi, zeta): xi is diagonalized
// and zeta rotated into its eigenbasis. When zeta comes out diagonal there the
// two matrices commute and every trace collapses to a scalar sum.
class NccweProblem {
 public:
  NccweProblem(const Matrix& xi, const Matrix& zeta, double sigma2, double kappa);

  struct Evaluation {
    Complex f1;  // <M^{-1}>
    Complex f2;  // <xi M^{-1}>
    // Jacobian of (f1, f2) with respect to (g, g_xi).
    Complex df1_dg, df1_dgxi, df2_dg, df2_dgxi;
  };

  Evaluation evaluate(Complex z, Complex g, Complex g_xi) const;
  // Central differences with real step h; the maps are holomorphic so a real
  // step gives the complex derivative.
  Evaluation evaluate_fd(Complex z, Complex g, Complex g_xi, double h = 1e-7) const;

  ComplexMatrix m_matrix(Complex z, Complex g, Complex g_xi) const;  // in the xi eigenbasis

  bool commuting() const { return commuting_; }
  int dim() const { return static_cast<int>(xi_eigs_.size()); }
  double sigma2() const { return sigma2_; }
  double kappa() const { return kappa_; }
  double mean_xi() const { return xi_eigs_.mean(); }
  const Vector& xi_eigs() const { return xi_eigs_; }
  const Matrix& zeta_rotated() const { return zeta_rot_; }

 private:
  Vector xi_eigs_;
  Matrix zeta_rot_;
  Vector zeta_diag_;
  bool commuting_ = false;
  double sigma2_;
  double kappa_;
};

ResolventState solve_pastur_nccwe(Complex z, const NccweProblem& problem, const SolverConfig& cfg,
                                  std::optional<std::pair<Complex, Complex>> warm = std::nullopt);

ResolventState solve_pastur_nccwe(Complex z, const Matrix& xi, const Matrix& zeta, double sigma2, double kappa,
                                  const SolverConfig& cfg,
                                  std::optional<std::pair<Complex, Complex>> warm = std::nullopt);

// rho = -Im g / pi, with round-off negatives clamped to zero.
double density_from_resolvent(const ResolventState& state);

enum class Variant { Cwe, Ncwe, Nccwe };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

// B != 0 and xi != I -> nccwe; B != 0 only -> ncwe; otherwise cwe.
Variant resolve_auto_variant(const EnsembleSpec& spec);

struct DensityCurve {
  std::vector<double> grid;
  std::vector<double> rho;
  double epsilon = 0.0;
  std::vector<int> iterations;
  std::vector<bool> converged;
  std::vector<std::string> warnings;

  std::size_t failures() const;
};

// Solver inputs for one ensemble and variant, shared by all grid points.
class PreparedEnsemble {
 public:
  PreparedEnsemble(const EnsembleSpec& spec, Variant variant);

  ResolventState solve(Complex z, const SolverConfig& cfg, const std::optional<ResolventState>& warm) const;
  // Cold start: plain 1/z guess, then an epsilon homotopy if that fails.
  // Same as solve without a warm state.
  ResolventState solve_cold(Complex z, const SolverConfig& cfg) const;

  Variant variant() const { return variant_; }
  int n() const { return n_; }

 private:
  Variant variant_;
  int n_;
  double sigma2_;
  double kappa_;
  Vector eigs_;  // xi eigenvalues (cwe) or zeta eigenvalues (ncwe)
  std::optional<NccweProblem> problem_;
};

// Sequential reference: sweeps from the largest lambda downward, each point
// warm-started from its upper neighbour.
DensityCurve density_curve(const EnsembleSpec& spec, Variant variant, const std::vector<double>& grid,
                           const SolverConfig& cfg);
DensityCurve density_curve(const PreparedEnsemble& prepared, const std::vector<double>& grid,
                           const SolverConfig& cfg);

// OpenMP version: the grid is cut into `chunks` contiguous pieces, each swept
// independently from its own cold start. chunks <= 0 uses the thread count.
DensityCurve density_curve_parallel(const PreparedEnsemble& prepared, const std::vector<double>& grid,
                                    const SolverConfig& cfg, int chunks = 0);

std::vector<double> linspace(double lo, double hi, int points);

// Generous interval containing the whole limiting spectrum.
std::pair<double, double> spectral_bounds(const EnsembleSpec& spec, Variant variant);

// Trapezoid integrals of rho and lambda * rho over the whole curve.
double curve_mass(const DensityCurve& curve);
double curve_first_moment(const DensityCurve& curve);

struct SupportComponent {
  double lo;
  double hi;
  double mass;
  std::size_t first;  // grid index range [first, last]
  std::size_t last;
};

// Maximal runs of grid points with rho >= threshold.
std::vector<SupportComponent> support_components(const DensityCurve& curve, double threshold = 1e-6);

// Upper edge of the bulk: the highest support component whose mass exceeds
// 1.5 / n. Lighter components are bands of separated eigenvalues.
double bulk_upper_edge(const DensityCurve& curve, int n, double threshold = 1e-6);

// Inserts midpoints into intervals where the density changes by more than
// `jump` times its peak, for up to `rounds` passes. Used at steep band edges.
DensityCurve refine_steep(const PreparedEnsemble& prepared, DensityCurve curve, const SolverConfig& cfg,
                          int rounds = 8, double jump = 0.05);

// Bulk density on an automatic grid: a coarse sweep locates the bulk, a
// second sweep of `points` points covers [lower end, bulk edge] with margin,
// then steep edges are refined.
DensityCurve bulk_density_curve(const PreparedEnsemble& prepared, const EnsembleSpec& spec, int points,
                                const SolverConfig& cfg);

}  // namespace ncw
