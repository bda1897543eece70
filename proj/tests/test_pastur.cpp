#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "ncw/closedform.hpp"
#include "ncw/montecarlo.hpp"
#include "ncw/pastur.hpp"

using namespace ncw;
using std::numbers::pi;

namespace {

// Independent scalar oracle for commuting xi = diag(x), zeta = diag(y): damped
// fixed-point iteration, continued in the broadening from Im z = 10 down to
// the target, where the iteration is a contraction at each stage.
std::pair<Complex, Complex> commuting_oracle(Complex z, const Vector& x, const Vector& y, double s2, double kappa) {
  const double n = static_cast<double>(x.size());
  auto map = [&](Complex zz, Complex g, Complex h) {
    const Complex a1 = s2 * (1.0 - kappa + kappa * zz * g);
    const Complex a2 = 1.0 / (1.0 - s2 * kappa * h);
    Complex fg = 0, fh = 0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const Complex inv = 1.0 / (zz - a1 * x(j) - a2 * y(j));
      fg += inv;
      fh += x(j) * inv;
    }
    return std::pair{fg / n, fh / n};
  };
  Complex g = 1.0 / Complex(z.real(), 10.0), h = x.mean() * g;
  for (double eps = 10.0;; eps = std::max(z.imag(), eps * 0.5)) {
    const Complex zz(z.real(), eps);
    for (int it = 0; it < 2000000; ++it) {
      const auto [fg, fh] = map(zz, g, h);
      if (std::abs(fg - g) + std::abs(fh - h) < 1e-15) break;
      g += 0.1 * (fg - g);
      h += 0.1 * (fh - h);
    }
    if (eps == z.imag()) break;
  }
  return {g, h};
}

Matrix random_rank3(int n, std::uint64_t seed) {
  const Matrix u = testutil::random_matrix(n, 3, seed);
  return u * u.transpose() / static_cast<double>(n);
}

Matrix random_diag(int n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Vector d(n);
  for (int i = 0; i < n; ++i) d(i) = u(rng);
  return d.asDiagonal();
}

}  // namespace

TEST_CASE("solve_pastur_cwe reproduces the Marchenko-Pastur resolvent for xi = I") {
  const SolverConfig cfg;
  for (double kappa : {0.25, 0.5, 1.0}) {
    const MpParams p{1.0, kappa};
    const Vector ones = Vector::Ones(20);
    for (double lam : linspace(0.01, 4.2, 60)) {
      const Complex z(lam, 1e-6);
      const auto st = solve_pastur_cwe(z, ones, 1.0, kappa, cfg);
      CHECK(std::abs(st.g - mp_resolvent(z, p)) < 1e-10);
      CHECK(st.g.imag() < 0.0);
    }
  }
}

TEST_CASE("large |z| behaves as 1/z") {
  const SolverConfig cfg;
  const Vector eigs = Vector::LinSpaced(10, 0.5, 2.0);
  const Complex z(1e8, 1.0);
  const auto st = solve_pastur_cwe(z, eigs, 1.0, 0.5, cfg);
  CHECK(std::abs(st.g * z - 1.0) < 1e-6);
  const auto nc = solve_pastur_ncwe(z, eigs, 1.0, 0.5, cfg);
  CHECK(std::abs(nc.g * z - 1.0) < 1e-6);
}

TEST_CASE("alpha coefficients are recomputable from the state") {
  const SolverConfig cfg;
  const Matrix xi = random_diag(8, 0.5, 2.0, 4);
  const Matrix zeta = random_rank3(8, 5);
  for (double lam : {0.3, 1.0, 2.5}) {
    const Complex z(lam, 1e-6);
    const auto st = solve_pastur_nccwe(z, xi, zeta, 0.7, 0.4, cfg);
    CHECK(std::abs(st.alpha1 - 0.7 * (1.0 - 0.4 + 0.4 * z * st.g)) < 1e-14 * std::abs(st.alpha1));
    CHECK(std::abs(st.alpha2 - 1.0 / (1.0 - 0.7 * 0.4 * st.g_xi)) < 1e-14 * std::abs(st.alpha2));
  }
}

TEST_CASE("equal cross-correlations: bulk follows MP with variance sigma2 (1 - mu0^2)") {
  const double mu0_sq = 0.1, kappa = 0.5;
  const SolverConfig cfg;
  auto worst_gap = [&](int n, const MpParams& mp, double mass) {
    Vector eigs = Vector::Constant(n, 1.0 - mu0_sq);
    eigs(n - 1) = 1.0 + (n - 1) * mu0_sq;
    const MpParams rescaled{1.0 - mu0_sq, kappa};
    const double lo = rescaled.lower_edge(), hi = rescaled.upper_edge();
    double worst = 0.0;
    for (double lam : linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), 50)) {
      const auto st = solve_pastur_cwe(Complex(lam, 1e-6), eigs, 1.0, kappa, cfg);
      worst = std::max(worst, std::abs(density_from_resolvent(st) - mass * mp_density(lam, mp)));
    }
    return worst;
  };
  // At N = 256 the detached eigenvalue still shifts the bulk by O(1/N): the
  // remaining N - 1 eigenvalues carry mass (N - 1)/N at aspect ratio (N - 1)/T.
  const int n = 256;
  const double reduced = (n - 1.0) / n;
  CHECK(worst_gap(n, MpParams{1.0 - mu0_sq, kappa * reduced}, reduced) < 1e-3);
  CHECK(worst_gap(n, MpParams{1.0 - mu0_sq, kappa}, 1.0) < 1.0 / n);
  CHECK(worst_gap(1024, MpParams{1.0 - mu0_sq, kappa}, 1.0) < 1e-3);
}

TEST_CASE("solve_pastur_ncwe reductions") {
  const SolverConfig cfg;
  SUBCASE("zeta = 0 gives the MP resolvent") {
    const MpParams p{1.3, 0.6};
    for (double lam : linspace(0.05, 5.0, 40)) {
      const Complex z(lam, 1e-6);
      CHECK(std::abs(solve_pastur_ncwe(z, Vector::Zero(12), 1.3, 0.6, cfg).g - mp_resolvent(z, p)) < 1e-10);
    }
  }
  SUBCASE("sigma2 = 0 gives the resolvent of the zeta spectrum") {
    const Vector zeta = Vector::LinSpaced(7, 0.2, 3.0);
    for (Complex z : {Complex(0.5, 0.1), Complex(1.7, 0.3), Complex(4.0, 0.05)}) {
      Complex expect = 0;
      for (int j = 0; j < 7; ++j) expect += 1.0 / (z - zeta(j));
      expect /= 7.0;
      CHECK(std::abs(solve_pastur_ncwe(z, zeta, 0.0, 0.5, cfg).g - expect) < 1e-12);
    }
  }
}

TEST_CASE("solve_pastur_nccwe reduction lattice") {
  const SolverConfig cfg;
  const int n = 32;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Matrix xi = random_diag(n, 0.5, 2.0, seed);
    const Matrix zeta = random_rank3(n, seed + 10);
    const Vector zeta_eigs = sym_eigen(zeta).eigenvalues;
    const Vector xi_eigs = xi.diagonal();
    for (double lam : linspace(0.05, 5.0, 25)) {
      const Complex z(lam, 1e-6);
      const auto a = solve_pastur_nccwe(z, Matrix::Identity(n, n), zeta, 1.0, 0.5, cfg);
      const auto b = solve_pastur_ncwe(z, zeta_eigs, 1.0, 0.5, cfg);
      CHECK(std::abs(a.g - b.g) < 1e-10);
      CHECK(std::abs(a.g - a.g_xi) < 1e-10);

      const auto c = solve_pastur_nccwe(z, xi, Matrix::Zero(n, n), 1.0, 0.5, cfg);
      const auto d = solve_pastur_cwe(z, xi_eigs, 1.0, 0.5, cfg);
      CHECK(std::abs(c.g - d.g) < 1e-10);
    }
  }
}

TEST_CASE("commuting nc-CWE matches the scalar fixed-point oracle") {
  const int n = 8;
  const Vector x = Vector::LinSpaced(n, 0.6, 1.8);
  Vector y(n);
  y << 0.0, 0.4, 0.1, 0.0, 0.9, 0.2, 0.05, 1.5;
  const NccweProblem prob(x.asDiagonal(), y.asDiagonal(), 0.8, 0.5);
  CHECK(prob.commuting());
  const SolverConfig cfg;
  for (double lam : linspace(0.1, 4.0, 20)) {
    const Complex z(lam, 1e-3);
    const auto st = solve_pastur_nccwe(z, prob, cfg);
    const auto [g, h] = commuting_oracle(z, x, y, 0.8, 0.5);
    CHECK(std::abs(st.g - g) < 1e-8);
    CHECK(std::abs(st.g_xi - h) < 1e-8);
  }
}

TEST_CASE("commuting fast path agrees with the dense path") {
  const int n = 10;
  const Vector x = Vector::LinSpaced(n, 0.5, 2.0);
  const Vector y = Vector::LinSpaced(n, 0.0, 1.0);
  const NccweProblem fast(x.asDiagonal(), y.asDiagonal(), 1.0, 0.5);
  // A rotation hides the common eigenbasis from the commuting test only if
  // zeta is perturbed; instead compare against the explicit dense traces.
  CHECK(fast.commuting());
  const Complex z(1.1, 1e-4), g(0.2, -0.6), h(0.3, -0.5);
  const auto e = fast.evaluate(z, g, h);
  const auto tr = resolvent_traces(fast.m_matrix(z, g, h), Matrix(x.asDiagonal()), Matrix(y.asDiagonal()));
  CHECK(std::abs(e.f1 - tr.g) < 1e-13);
  CHECK(std::abs(e.f2 - tr.g_xi) < 1e-13);
}

TEST_CASE("analytic Newton Jacobian against central differences") {
  const int n = 16;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Matrix xi = testutil::random_spd(n, 0.5, 2.0, 1);
  const Matrix b = testutil::random_matrix(n, 2 * n, 2);
  const Matrix zeta = b * b.transpose() / (2.0 * n);
  const NccweProblem prob(xi, zeta, 0.9, 0.5);
  CHECK_FALSE(prob.commuting());
  for (int i = 0; i < 20; ++i) {
    const Complex z(4.0 * u(rng), 0.05 + u(rng));
    const Complex g(u(rng) - 0.5, -0.05 - u(rng));
    const Complex h(u(rng) - 0.5, -0.05 - u(rng));
    const auto a = prob.evaluate(z, g, h);
    const auto f = prob.evaluate_fd(z, g, h, 1e-7);
    auto rel = [](Complex p, Complex q) { return std::abs(p - q) / std::max(std::abs(q), 1e-12); };
    CHECK(rel(a.f1, f.f1) < 1e-12);
    CHECK(rel(a.df1_dg, f.df1_dg) < 1e-5);
    CHECK(rel(a.df1_dgxi, f.df1_dgxi) < 1e-5);
    CHECK(rel(a.df2_dg, f.df2_dg) < 1e-5);
    CHECK(rel(a.df2_dgxi, f.df2_dgxi) < 1e-5);
  }
}

TEST_CASE("density_from_resolvent") {
  ResolventState st;
  st.g = Complex(0.0, -1.0);
  CHECK(density_from_resolvent(st) == doctest::Approx(1.0 / pi));
  st.g = Complex(0.7, 0.0);
  CHECK(density_from_resolvent(st) == 0.0);
  st.g = Complex(0.7, 1e-14);
  CHECK(density_from_resolvent(st) == 0.0);

  const auto mp = solve_pastur_cwe(Complex(2.0, 1e-9), Vector::Ones(4), 1.0, 1.0, SolverConfig{});
  CHECK(density_from_resolvent(mp) == doctest::Approx(0.5 / pi).epsilon(1e-6));
}

TEST_CASE("density_curve reproduces the MP density") {
  const EnsembleSpec spec = build_identity_model(64, 128, 1.0);
  const auto grid = linspace(0.01, 4.2, 500);
  const DensityCurve c = density_curve(spec, Variant::Cwe, grid, SolverConfig{});
  CHECK(c.failures() == 0);
  CHECK(c.warnings.empty());
  const MpParams p{1.0, 0.5};
  double worst = 0.0, worst_broadened = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double lam = grid[k];
    const double broadened = -mp_resolvent(Complex(lam, c.epsilon), p).imag() / pi;
    worst_broadened = std::max(worst_broadened, std::abs(c.rho[k] - broadened));
    // Within 1e-3 of an edge the epsilon tail of the square root exceeds 1e-4.
    if (std::abs(lam - p.lower_edge()) > 1e-3 && std::abs(lam - p.upper_edge()) > 1e-3) {
      worst = std::max(worst, std::abs(c.rho[k] - mp_density(lam, p)));
    }
  }
  CHECK(worst < 1e-4);
  CHECK(worst_broadened < 1e-8);
  CHECK(c.epsilon == 1e-6);
}

TEST_CASE("density_curve is zero above the support") {
  const EnsembleSpec spec = build_identity_model(16, 32, 1.0);
  const DensityCurve c = density_curve(spec, Variant::Cwe, linspace(3.5, 10.0, 40), SolverConfig{});
  // Only the Lorentzian tail of the broadening survives off the support.
  for (double r : c.rho) CHECK(r < 1e-6);
  SolverConfig sharp;
  sharp.epsilon = 1e-13;
  const DensityCurve d = density_curve(spec, Variant::Cwe, linspace(3.5, 10.0, 40), sharp);
  for (double r : d.rho) CHECK(r < 1e-12);
}

TEST_CASE("density curve invariants") {
  const EnsembleSpec spec = build_fig2_model(24, 0.3, 0.5);
  const PreparedEnsemble prep(spec, Variant::Nccwe);
  const SolverConfig cfg;
  const auto grid = linspace(0.01, 2.0, 60);
  const DensityCurve c = density_curve(prep, grid, cfg);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    CHECK(c.rho[k] >= 0.0);
    if (k > 0) CHECK(c.grid[k] > c.grid[k - 1]);
  }
  // Physical branch at every grid point.
  for (double lam : grid) CHECK(prep.solve_cold(Complex(lam, cfg.epsilon), cfg).g.imag() < 0.0);
  CHECK_THROWS(density_curve(prep, {1.0, 0.5}, cfg));
}

TEST_CASE("parallel chunked curve equals the sequential sweep") {
  const SolverConfig cfg;
  SUBCASE("scalar ncwe") {
    const EnsembleSpec spec = build_fig1_model(128, 1.0);
    const PreparedEnsemble prep(spec, Variant::Ncwe);
    const auto grid = linspace(0.01, 4.0, 200);
    const auto a = density_curve(prep, grid, cfg);
    for (int chunks : {1, 3, 8}) {
      const auto b = density_curve_parallel(prep, grid, cfg, chunks);
      for (std::size_t k = 0; k < grid.size(); ++k) CHECK(std::abs(a.rho[k] - b.rho[k]) < 1e-9);
    }
  }
  SUBCASE("matrix nccwe") {
    const EnsembleSpec spec = build_fig2_model(24, 0.5, 0.5);
    const PreparedEnsemble prep(spec, Variant::Nccwe);
    const auto grid = linspace(0.01, 1.5, 60);
    const auto a = density_curve(prep, grid, cfg);
    const auto b = density_curve_parallel(prep, grid, cfg, 4);
    for (std::size_t k = 0; k < grid.size(); ++k) CHECK(std::abs(a.rho[k] - b.rho[k]) < 1e-9);
  }
}

TEST_CASE("non-convergence is recorded, not fatal") {
  SolverConfig cfg;
  cfg.max_iter = 1;
  const EnsembleSpec spec = build_identity_model(16, 32, 1.0);
  const DensityCurve c = density_curve(spec, Variant::Cwe, linspace(0.2, 2.5, 10), cfg);
  CHECK(c.failures() > 0);
  CHECK(c.warnings.size() == c.failures());
  for (double r : c.rho) CHECK(std::isfinite(r));

  try {
    solve_pastur_cwe(Complex(1.0, 1e-6), Vector::Ones(4), 1.0, 0.5, cfg);
    FAIL("expected SolverNoConvergence");
  } catch (const SolverNoConvergence& e) {
    CHECK(e.last.iterations >= 1);
    CHECK(e.last.residual > 0.0);
  }
}

TEST_CASE("fig2 model: a nonzero mean shifts the density") {
  const SolverConfig cfg;
  const EnsembleSpec with = build_fig2_model(64, 0.3, 0.5);
  const EnsembleSpec without = build_fig2_model(64, 0.3, 0.0);
  const auto curve = bulk_density_curve(PreparedEnsemble(with, Variant::Nccwe), with, 120, cfg);
  const auto base = density_curve(PreparedEnsemble(without, Variant::Nccwe), curve.grid, cfg);
  double sup = 0.0;
  for (std::size_t k = 0; k < curve.grid.size(); ++k) sup = std::max(sup, std::abs(curve.rho[k] - base.rho[k]));
  CHECK(sup > 0.05);
  CHECK(curve_first_moment(curve) > curve_first_moment(base));
}

TEST_CASE("sum rules on bulk curves") {
  const SolverConfig cfg;
  SUBCASE("fig1 model") {
    const EnsembleSpec spec = build_fig1_model(128, 1.0);
    const auto c = bulk_density_curve(PreparedEnsemble(spec, Variant::Ncwe), spec, 300, cfg);
    const auto d = derive_matrices(spec);
    const double expect = (spec.sigma2 * spec.xi.trace() + d.zeta.trace()) / spec.n;
    CHECK(std::abs(curve_mass(c) - 1.0) < 5e-3);
    CHECK(std::abs(curve_first_moment(c) - expect) < 1e-2 * expect);
  }
  SUBCASE("fig2 model") {
    const EnsembleSpec spec = build_fig2_model(48, 0.5, 0.5);
    const auto c = bulk_density_curve(PreparedEnsemble(spec, Variant::Nccwe), spec, 200, cfg);
    const auto d = derive_matrices(spec);
    const double expect = (spec.sigma2 * spec.xi.trace() + d.zeta.trace()) / spec.n;
    CHECK(std::abs(curve_mass(c) - 1.0) < 5e-3);
    CHECK(std::abs(curve_first_moment(c) - expect) < 1e-2 * expect);
  }
}

TEST_CASE("variant helpers") {
  CHECK(variant_from_string("cwe") == Variant::Cwe);
  CHECK(variant_from_string("ncwe") == Variant::Ncwe);
  CHECK(variant_from_string("nccwe") == Variant::Nccwe);
  CHECK(to_string(Variant::Nccwe) == "nccwe");
  CHECK_THROWS(variant_from_string("wishart"));
  CHECK(resolve_auto_variant(build_identity_model(8, 16, 1.0)) == Variant::Cwe);
  CHECK(resolve_auto_variant(build_equal_cross_model(8, 16, 1.0, 0.2)) == Variant::Cwe);
  CHECK(resolve_auto_variant(build_fig1_model(8, 1.0)) == Variant::Ncwe);
  CHECK(resolve_auto_variant(build_fig2_model(8, 0.3, 0.5)) == Variant::Nccwe);
}

TEST_CASE("solvers reject points off the upper half plane") {
  CHECK_THROWS(solve_pastur_cwe(Complex(1.0, 0.0), Vector::Ones(3), 1.0, 0.5, SolverConfig{}));
  CHECK_THROWS(solve_pastur_ncwe(Complex(1.0, -1e-3), Vector::Zero(3), 1.0, 0.5, SolverConfig{}));
}
