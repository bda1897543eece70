#include "ncw/pastur.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

#include <omp.h>

namespace ncw {

namespace {

using Vec2 = std::array<Complex, 2>;

struct NewtonEval {
  Vec2 residual{};  // F = f(x) - x
  Complex jac[2][2]{};
  Vec2 f{};
};

double norm(const Vec2& v, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) s += std::norm(v[i]);
  return std::sqrt(s);
}

bool on_branch(const Vec2& x, int dim) {
  for (int i = 0; i < dim; ++i) {
    if (!std::isfinite(x[i].real()) || !std::isfinite(x[i].imag()) || !(x[i].imag() < 0.0)) return false;
  }
  return true;
}

// Newton with backtracking on F(x) = f(x) - x for one or two unknowns. A
// candidate is accepted when it stays on the physical branch (Im < 0) and
// lowers |F|; otherwise the step is halved, up to 20 times, before falling
// back to damped fixed-point steps x + s F.
template <class Eval>
void newton_solve(const Eval& eval, Vec2& x, int dim, const SolverConfig& cfg, int& iterations, double& residual) {
  auto try_eval = [&](const Vec2& cand, NewtonEval& out) {
    if (!on_branch(cand, dim)) return false;
    try {
      out = eval(cand);
    } catch (const Singular&) {
      return false;
    }
    const double r = norm(out.residual, dim);
    return std::isfinite(r);
  };
  auto newton_step = [&](const NewtonEval& e) {
    Vec2 d{};
    if (dim == 1) {
      d[0] = -e.residual[0] / e.jac[0][0];
    } else {
      const Complex det = e.jac[0][0] * e.jac[1][1] - e.jac[0][1] * e.jac[1][0];
      d[0] = -(e.jac[1][1] * e.residual[0] - e.jac[0][1] * e.residual[1]) / det;
      d[1] = -(-e.jac[1][0] * e.residual[0] + e.jac[0][0] * e.residual[1]) / det;
    }
    return d;
  };

  NewtonEval cur;
  if (!try_eval(x, cur)) {
    iterations = 0;
    residual = std::numeric_limits<double>::infinity();
    throw NoConvergence("initial guess off the physical branch or singular");
  }
  double res = norm(cur.residual, dim);

  for (int it = 1; it <= cfg.max_iter; ++it) {
    const double scale = std::max(1.0, norm(x, dim));
    const Vec2 d = newton_step(cur);

    if (res <= cfg.tol * scale) {
      // Polish with one more step; keep it only if it does not hurt.
      Vec2 cand = x;
      for (int i = 0; i < dim; ++i) cand[i] += d[i];
      NewtonEval e;
      if (try_eval(cand, e) && norm(e.residual, dim) <= res) {
        x = cand;
        res = norm(e.residual, dim);
      }
      iterations = it;
      residual = res;
      return;
    }

    bool accepted = false;
    double t = cfg.damping;
    for (int h = 0; h <= 20 && !accepted; ++h, t *= 0.5) {
      Vec2 cand = x;
      for (int i = 0; i < dim; ++i) cand[i] += t * d[i];
      NewtonEval e;
      if (try_eval(cand, e) && norm(e.residual, dim) < res) {
        x = cand;
        cur = e;
        accepted = true;
      }
    }
    if (!accepted) {
      double s = 1.0;
      for (int h = 0; h <= 20 && !accepted; ++h, s *= 0.5) {
        Vec2 cand = x;
        for (int i = 0; i < dim; ++i) cand[i] += s * cur.residual[i];
        NewtonEval e;
        if (try_eval(cand, e) && norm(e.residual, dim) < res) {
          x = cand;
          cur = e;
          accepted = true;
        }
      }
    }
    if (!accepted) {
      iterations = it;
      residual = res;
      throw NoConvergence("no step reduces the residual on the physical branch");
    }
    res = norm(cur.residual, dim);
  }
  iterations = cfg.max_iter;
  residual = res;
  throw NoConvergence("iteration budget exhausted");
}

// Distinct values with their relative weights (multiplicity / N).
std::vector<std::pair<double, double>> group_values(const Vector& values) {
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  std::vector<std::pair<double, double>> out;
  const double w = 1.0 / static_cast<double>(v.size());
  for (double x : v) {
    if (!out.empty() && out.back().first == x) {
      out.back().second += w;
    } else {
      out.emplace_back(x, w);
    }
  }
  return out;
}

void check_point(Complex z) {
  if (!(z.imag() > 0.0)) throw Error("Pastur solvers need Im z > 0");
}

ResolventState finish(Complex z, Complex g, Complex g_xi, double sigma2, double kappa, int iterations,
                      double residual) {
  ResolventState s;
  s.z = z;
  s.g = g;
  s.g_xi = g_xi;
  s.alpha1 = alpha1(z, g, sigma2, kappa);
  s.alpha2 = alpha2(g_xi, sigma2, kappa);
  s.iterations = iterations;
  s.residual = residual;
  return s;
}

template <class Eval>
ResolventState run_scalar(Complex z, const Eval& eval, Complex g0, const SolverConfig& cfg,
                          const std::function<Complex(Complex)>& g_xi_of, double sigma2, double kappa) {
  Vec2 x{g0, Complex{}};
  int iterations = 0;
  double residual = 0.0;
  try {
    newton_solve(eval, x, 1, cfg, iterations, residual);
  } catch (const NoConvergence& e) {
    throw SolverNoConvergence(e.what(), finish(z, x[0], g_xi_of(x[0]), sigma2, kappa, iterations, residual));
  }
  return finish(z, x[0], g_xi_of(x[0]), sigma2, kappa, iterations, residual);
}

// Cold start: the plain guess first, then an epsilon homotopy. At large
// broadening g is close to 1/z; the broadening shrinks by decades, each stage
// warm-started from the previous one.
//
// A Stieltjes transform of a probability measure obeys -Im g >= Im z |g|^2
// (Cauchy-Schwarz); a direct solve violating it sits on a spurious root.
template <class Solve>
ResolventState with_homotopy(Complex z, const Solve& solve_at) {
  try {
    const ResolventState direct = solve_at(z, nullptr);
    if (-direct.g.imag() >= 0.99 * z.imag() * std::norm(direct.g)) return direct;
  } catch (const NoConvergence&) {
  }
  const double target = z.imag();
  double eps = std::max(1.0, std::abs(z.real()));
  std::optional<ResolventState> prev;
  while (true) {
    const bool last = eps <= target;
    const Complex zs(z.real(), last ? target : eps);
    prev = solve_at(zs, prev ? &*prev : nullptr);
    if (last) return *prev;
    eps = std::max(target, eps * 0.1);
  }
}

}  // namespace

Complex alpha1(Complex z, Complex g, double sigma2, double kappa) {
  return sigma2 * (1.0 - kappa + kappa * z * g);
}

Complex alpha2(Complex g_xi, double sigma2, double kappa) { return 1.0 / (1.0 - sigma2 * kappa * g_xi); }

namespace {

ResolventState cwe_once(Complex z, const Vector& xi_eigs, double sigma2, double kappa, const SolverConfig& cfg,
                        Complex g0) {
  const auto terms = group_values(xi_eigs);
  const Complex dalpha = sigma2 * kappa * z;

  auto eval = [&](const Vec2& x) {
    const Complex a1 = alpha1(z, x[0], sigma2, kappa);
    Complex f = 0.0, df = 0.0;
    for (const auto& [lam, w] : terms) {
      const Complex inv = 1.0 / (z - a1 * lam);
      f += w * inv;
      df += w * lam * dalpha * inv * inv;
    }
    NewtonEval e;
    e.f[0] = f;
    e.residual[0] = f - x[0];
    e.jac[0][0] = df - 1.0;
    return e;
  };
  auto g_xi_of = [&](Complex g) {
    const Complex a1 = alpha1(z, g, sigma2, kappa);
    Complex s = 0.0;
    for (const auto& [lam, w] : terms) s += w * lam / (z - a1 * lam);
    return s;
  };
  return run_scalar(z, eval, g0, cfg, g_xi_of, sigma2, kappa);
}

ResolventState ncwe_once(Complex z, const Vector& zeta_eigs, double sigma2, double kappa, const SolverConfig& cfg,
                         Complex g0) {
  const auto terms = group_values(zeta_eigs);
  const double c = sigma2 * kappa;

  auto eval = [&](const Vec2& x) {
    const Complex a1 = alpha1(z, x[0], sigma2, kappa);
    const Complex a2 = alpha2(x[0], sigma2, kappa);
    Complex f = 0.0, df = 0.0;
    for (const auto& [zeta, w] : terms) {
      const Complex inv = 1.0 / (z - a1 - zeta * a2);
      f += w * inv;
      df += w * (c * z + zeta * c * a2 * a2) * inv * inv;
    }
    NewtonEval e;
    e.f[0] = f;
    e.residual[0] = f - x[0];
    e.jac[0][0] = df - 1.0;
    return e;
  };
  return run_scalar(z, eval, g0, cfg, [](Complex g) { return g; }, sigma2, kappa);
}

}  // namespace

ResolventState solve_pastur_cwe(Complex z, const Vector& xi_eigs, double sigma2, double kappa,
                                const SolverConfig& cfg, std::optional<Complex> warm) {
  check_point(z);
  if (xi_eigs.size() == 0 || xi_eigs.minCoeff() <= 0.0) throw Error("solve_pastur_cwe: xi eigenvalues must be > 0");
  if (warm) return cwe_once(z, xi_eigs, sigma2, kappa, cfg, *warm);
  return with_homotopy(z, [&](Complex zs, const ResolventState* w) {
    return cwe_once(zs, xi_eigs, sigma2, kappa, cfg, w ? w->g : 1.0 / zs);
  });
}

ResolventState solve_pastur_ncwe(Complex z, const Vector& zeta_eigs, double sigma2, double kappa,
                                 const SolverConfig& cfg, std::optional<Complex> warm) {
  check_point(z);
  if (zeta_eigs.size() == 0) throw Error("solve_pastur_ncwe: empty zeta spectrum");
  if (warm) return ncwe_once(z, zeta_eigs, sigma2, kappa, cfg, *warm);
  return with_homotopy(z, [&](Complex zs, const ResolventState* w) {
    return ncwe_once(zs, zeta_eigs, sigma2, kappa, cfg, w ? w->g : 1.0 / zs);
  });
}

NccweProblem::NccweProblem(const Matrix& xi, const Matrix& zeta, double sigma2, double kappa)
    : sigma2_(sigma2), kappa_(kappa) {
  if (xi.rows() != xi.cols() || zeta.rows() != zeta.cols() || xi.rows() != zeta.rows()) {
    throw Error("NccweProblem: xi and zeta must be square with equal dimensions");
  }
  const SymmetricEigen eig = sym_eigen(xi);
  if (eig.eigenvalues.minCoeff() <= 0.0) throw NotPositiveDefinite("xi not positive definite");
  xi_eigs_ = eig.eigenvalues;
  zeta_rot_ = eig.eigenvectors.transpose() * zeta * eig.eigenvectors;
  zeta_rot_ = 0.5 * (zeta_rot_ + zeta_rot_.transpose()).eval();
  zeta_diag_ = zeta_rot_.diagonal();
  const double total = zeta_rot_.norm();
  const double off = (zeta_rot_ - Matrix(zeta_diag_.asDiagonal())).norm();
  commuting_ = total == 0.0 || off <= 1e-12 * total;
}

ComplexMatrix NccweProblem::m_matrix(Complex z, Complex g, Complex g_xi) const {
  const Complex a1 = alpha1(z, g, sigma2_, kappa_);
  const Complex a2 = alpha2(g_xi, sigma2_, kappa_);
  ComplexMatrix m = -a2 * zeta_rot_.cast<Complex>();
  m.diagonal().array() += z - a1 * xi_eigs_.array().cast<Complex>();
  return m;
}

NccweProblem::Evaluation NccweProblem::evaluate(Complex z, Complex g, Complex g_xi) const {
  const Complex a2 = alpha2(g_xi, sigma2_, kappa_);
  const double c = sigma2_ * kappa_;
  ResolventTraces tr;
  if (commuting_) {
    const Complex a1 = alpha1(z, g, sigma2_, kappa_);
    const double n = static_cast<double>(dim());
    tr = ResolventTraces{};
    for (int j = 0; j < dim(); ++j) {
      const double lx = xi_eigs_(j);
      const double lz = zeta_diag_(j);
      const Complex inv = 1.0 / (z - a1 * lx - a2 * lz);
      const Complex inv2 = inv * inv;
      tr.g += inv;
      tr.g_xi += lx * inv;
      tr.inv_xi_inv += lx * inv2;
      tr.inv_zeta_inv += lz * inv2;
      tr.t_xx += lx * lx * inv2;
      tr.t_xz += lx * lz * inv2;
    }
    tr.g /= n;
    tr.g_xi /= n;
    tr.inv_xi_inv /= n;
    tr.inv_zeta_inv /= n;
    tr.t_xx /= n;
    tr.t_xz /= n;
    if (!std::isfinite(std::abs(tr.g))) throw Singular("M(z) singular");
  } else {
    tr = resolvent_traces_diag(m_matrix(z, g, g_xi), xi_eigs_, zeta_rot_);
  }
  // dM/dg = -sigma2 kappa z xi, dM/dg_xi = -sigma2 kappa alpha2^2 zeta.
  Evaluation e;
  e.f1 = tr.g;
  e.f2 = tr.g_xi;
  e.df1_dg = c * z * tr.inv_xi_inv;
  e.df1_dgxi = c * a2 * a2 * tr.inv_zeta_inv;
  e.df2_dg = c * z * tr.t_xx;
  e.df2_dgxi = c * a2 * a2 * tr.t_xz;
  return e;
}

NccweProblem::Evaluation NccweProblem::evaluate_fd(Complex z, Complex g, Complex g_xi, double h) const {
  auto values = [&](Complex a, Complex b) {
    const ComplexMatrix x = inverse_complex(m_matrix(z, a, b));
    const double n = static_cast<double>(dim());
    Complex f1 = x.trace() / n;
    Complex f2 = (xi_eigs_.cast<Complex>().array() * x.diagonal().array()).sum() / n;
    return std::pair{f1, f2};
  };
  Evaluation e;
  std::tie(e.f1, e.f2) = values(g, g_xi);
  const auto gp = values(g + h, g_xi);
  const auto gm = values(g - h, g_xi);
  const auto hp = values(g, g_xi + h);
  const auto hm = values(g, g_xi - h);
  e.df1_dg = (gp.first - gm.first) / (2.0 * h);
  e.df2_dg = (gp.second - gm.second) / (2.0 * h);
  e.df1_dgxi = (hp.first - hm.first) / (2.0 * h);
  e.df2_dgxi = (hp.second - hm.second) / (2.0 * h);
  return e;
}

namespace {

ResolventState nccwe_once(Complex z, const NccweProblem& problem, const SolverConfig& cfg, Vec2 x) {
  auto eval = [&](const Vec2& x) {
    const auto ev = problem.evaluate(z, x[0], x[1]);
    NewtonEval e;
    e.f = {ev.f1, ev.f2};
    e.residual = {ev.f1 - x[0], ev.f2 - x[1]};
    e.jac[0][0] = ev.df1_dg - 1.0;
    e.jac[0][1] = ev.df1_dgxi;
    e.jac[1][0] = ev.df2_dg;
    e.jac[1][1] = ev.df2_dgxi - 1.0;
    return e;
  };
  int iterations = 0;
  double residual = 0.0;
  try {
    newton_solve(eval, x, 2, cfg, iterations, residual);
  } catch (const NoConvergence& e) {
    throw SolverNoConvergence(e.what(),
                              finish(z, x[0], x[1], problem.sigma2(), problem.kappa(), iterations, residual));
  }
  return finish(z, x[0], x[1], problem.sigma2(), problem.kappa(), iterations, residual);
}

}  // namespace

ResolventState solve_pastur_nccwe(Complex z, const NccweProblem& problem, const SolverConfig& cfg,
                                  std::optional<std::pair<Complex, Complex>> warm) {
  check_point(z);
  if (warm) return nccwe_once(z, problem, cfg, {warm->first, warm->second});
  return with_homotopy(z, [&](Complex zs, const ResolventState* w) {
    return nccwe_once(zs, problem, cfg, w ? Vec2{w->g, w->g_xi} : Vec2{1.0 / zs, problem.mean_xi() / zs});
  });
}

ResolventState solve_pastur_nccwe(Complex z, const Matrix& xi, const Matrix& zeta, double sigma2, double kappa,
                                  const SolverConfig& cfg, std::optional<std::pair<Complex, Complex>> warm) {
  return solve_pastur_nccwe(z, NccweProblem(xi, zeta, sigma2, kappa), cfg, warm);
}

double density_from_resolvent(const ResolventState& state) {
  const double rho = -state.g.imag() / std::numbers::pi;
  if (rho < 0.0 && rho > -1e-12) return 0.0;
  return rho;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Cwe:
      return "cwe";
    case Variant::Ncwe:
      return "ncwe";
    case Variant::Nccwe:
      return "nccwe";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "cwe") return Variant::Cwe;
  if (s == "ncwe") return Variant::Ncwe;
  if (s == "nccwe") return Variant::Nccwe;
  throw Error("unknown variant '" + s + "'");
}

Variant resolve_auto_variant(const EnsembleSpec& spec) {
  const bool has_mean = spec.b.size() > 0 && spec.b.cwiseAbs().maxCoeff() > 0.0;
  const bool correlated = !spec.xi.isIdentity(0.0);
  if (has_mean && correlated) return Variant::Nccwe;
  if (has_mean) return Variant::Ncwe;
  return Variant::Cwe;
}

std::size_t DensityCurve::failures() const {
  return static_cast<std::size_t>(std::count(converged.begin(), converged.end(), false));
}

PreparedEnsemble::PreparedEnsemble(const EnsembleSpec& spec, Variant variant)
    : variant_(variant), n_(spec.n), sigma2_(spec.sigma2), kappa_(spec.kappa()) {
  const DerivedMatrices d = derive_matrices(spec);
  switch (variant) {
    case Variant::Cwe:
      eigs_ = d.xi_eigenvalues;
      break;
    case Variant::Ncwe:
      eigs_ = sym_eigen(d.zeta).eigenvalues.cwiseMax(0.0);
      break;
    case Variant::Nccwe:
      problem_.emplace(spec.xi, d.zeta, spec.sigma2, spec.kappa());
      break;
  }
}

ResolventState PreparedEnsemble::solve(Complex z, const SolverConfig& cfg,
                                       const std::optional<ResolventState>& warm) const {
  switch (variant_) {
    case Variant::Cwe:
      return solve_pastur_cwe(z, eigs_, sigma2_, kappa_, cfg,
                              warm ? std::optional<Complex>(warm->g) : std::nullopt);
    case Variant::Ncwe:
      return solve_pastur_ncwe(z, eigs_, sigma2_, kappa_, cfg,
                               warm ? std::optional<Complex>(warm->g) : std::nullopt);
    case Variant::Nccwe:
      return solve_pastur_nccwe(
          z, *problem_, cfg,
          warm ? std::optional<std::pair<Complex, Complex>>(std::pair{warm->g, warm->g_xi}) : std::nullopt);
  }
  throw Error("unreachable");
}

ResolventState PreparedEnsemble::solve_cold(Complex z, const SolverConfig& cfg) const {
  return solve(z, cfg, std::nullopt);
}

namespace {

void check_grid(const std::vector<double>& grid) {
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw Error("density grid must be strictly ascending");
  }
}

// Sweeps grid[lo, hi) from the top down. The first point is solved cold.
void sweep(const PreparedEnsemble& prepared, const std::vector<double>& grid, std::size_t lo, std::size_t hi,
           const SolverConfig& cfg, DensityCurve& out) {
  std::optional<ResolventState> warm;
  for (std::size_t k = hi; k-- > lo;) {
    const Complex z(grid[k], cfg.epsilon);
    std::optional<ResolventState> state;
    try {
      state = warm ? prepared.solve(z, cfg, warm) : prepared.solve_cold(z, cfg);
    } catch (const NoConvergence&) {
      if (warm) {
        try {
          state = prepared.solve_cold(z, cfg);
        } catch (const NoConvergence&) {
        }
      }
    } catch (const Singular&) {
    }
    if (state) {
      out.rho[k] = std::max(0.0, density_from_resolvent(*state));
      out.iterations[k] = state->iterations;
      out.converged[k] = true;
      warm = state;
    } else {
      out.converged[k] = false;
    }
  }
}

DensityCurve empty_curve(const std::vector<double>& grid, const SolverConfig& cfg) {
  DensityCurve c;
  c.grid = grid;
  c.rho.assign(grid.size(), 0.0);
  c.iterations.assign(grid.size(), 0);
  c.converged.assign(grid.size(), false);
  c.epsilon = cfg.epsilon;
  return c;
}

// Fills non-converged points by linear interpolation between converged
// neighbours and records a warning per point.
void patch_failures(DensityCurve& c) {
  const std::size_t n = c.grid.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (c.converged[k]) continue;
    std::ptrdiff_t left = static_cast<std::ptrdiff_t>(k) - 1;
    while (left >= 0 && !c.converged[left]) --left;
    std::size_t right = k + 1;
    while (right < n && !c.converged[right]) ++right;
    double value = 0.0;
    if (left >= 0 && right < n) {
      const double w = (c.grid[k] - c.grid[left]) / (c.grid[right] - c.grid[left]);
      value = (1.0 - w) * c.rho[left] + w * c.rho[right];
    } else if (left >= 0) {
      value = c.rho[left];
    } else if (right < n) {
      value = c.rho[right];
    }
    c.rho[k] = value;
    std::ostringstream msg;
    msg << "no convergence at lambda=" << c.grid[k] << ", density interpolated";
    c.warnings.push_back(msg.str());
  }
}

}  // namespace

DensityCurve density_curve(const PreparedEnsemble& prepared, const std::vector<double>& grid,
                           const SolverConfig& cfg) {
  check_grid(grid);
  DensityCurve c = empty_curve(grid, cfg);
  sweep(prepared, grid, 0, grid.size(), cfg, c);
  patch_failures(c);
  return c;
}

DensityCurve density_curve(const EnsembleSpec& spec, Variant variant, const std::vector<double>& grid,
                           const SolverConfig& cfg) {
  return density_curve(PreparedEnsemble(spec, variant), grid, cfg);
}

DensityCurve density_curve_parallel(const PreparedEnsemble& prepared, const std::vector<double>& grid,
                                    const SolverConfig& cfg, int chunks) {
  check_grid(grid);
  DensityCurve c = empty_curve(grid, cfg);
  if (chunks <= 0) chunks = omp_get_max_threads();
  const std::size_t n = grid.size();
  const auto nchunks = static_cast<std::ptrdiff_t>(std::min<std::size_t>(std::max(chunks, 1), std::max<std::size_t>(n, 1)));
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < nchunks; ++i) {
    const std::size_t lo = n * static_cast<std::size_t>(i) / static_cast<std::size_t>(nchunks);
    const std::size_t hi = n * static_cast<std::size_t>(i + 1) / static_cast<std::size_t>(nchunks);
    sweep(prepared, grid, lo, hi, cfg, c);
  }
  patch_failures(c);
  return c;
}

std::vector<double> linspace(double lo, double hi, int points) {
  std::vector<double> out(static_cast<std::size_t>(std::max(points, 0)));
  if (points == 1) {
    out[0] = lo;
    return out;
  }
  for (int i = 0; i < points; ++i) out[i] = lo + (hi - lo) * i / (points - 1);
  return out;
}

std::pair<double, double> spectral_bounds(const EnsembleSpec& spec, Variant variant) {
  const DerivedMatrices d = derive_matrices(spec);
  const double sk = std::sqrt(spec.kappa());
  const double xi_max = variant == Variant::Ncwe ? 1.0 : d.xi_eigenvalues.maxCoeff();
  const double xi_min = variant == Variant::Ncwe ? 1.0 : d.xi_eigenvalues.minCoeff();
  const double zeta_max =
      variant == Variant::Cwe ? 0.0 : std::max(0.0, sym_eigen(d.zeta).eigenvalues.maxCoeff());
  const double s = std::sqrt(spec.sigma2);
  const double hi_root = s * std::sqrt(xi_max) * (1.0 + sk) + std::sqrt(zeta_max);
  const double hi = 1.05 * hi_root * hi_root;
  const double lo_root = std::max(0.0, s * std::sqrt(xi_min) * (1.0 - sk) - std::sqrt(zeta_max));
  const double lo = std::max(1e-5 * hi, 0.9 * lo_root * lo_root);
  return {lo, hi};
}

namespace {

double trapezoid(const std::vector<double>& x, const std::vector<double>& y, std::size_t first, std::size_t last) {
  double s = 0.0;
  for (std::size_t k = first; k < last; ++k) s += 0.5 * (x[k + 1] - x[k]) * (y[k] + y[k + 1]);
  return s;
}

}  // namespace

double curve_mass(const DensityCurve& curve) {
  if (curve.grid.size() < 2) return 0.0;
  return trapezoid(curve.grid, curve.rho, 0, curve.grid.size() - 1);
}

double curve_first_moment(const DensityCurve& curve) {
  if (curve.grid.size() < 2) return 0.0;
  std::vector<double> y(curve.grid.size());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = curve.grid[k] * curve.rho[k];
  return trapezoid(curve.grid, y, 0, curve.grid.size() - 1);
}

std::vector<SupportComponent> support_components(const DensityCurve& curve, double threshold) {
  std::vector<SupportComponent> out;
  const std::size_t n = curve.grid.size();
  std::size_t k = 0;
  while (k < n) {
    if (curve.rho[k] < threshold) {
      ++k;
      continue;
    }
    std::size_t j = k;
    while (j + 1 < n && curve.rho[j + 1] >= threshold) ++j;
    // Include the zero-density neighbours so the trapezoid covers the edges.
    const std::size_t a = k > 0 ? k - 1 : k;
    const std::size_t b = j + 1 < n ? j + 1 : j;
    out.push_back({curve.grid[a], curve.grid[b], trapezoid(curve.grid, curve.rho, a, b), a, b});
    k = j + 1;
  }
  return out;
}

double bulk_upper_edge(const DensityCurve& curve, int n, double threshold) {
  const auto comps = support_components(curve, threshold);
  for (auto it = comps.rbegin(); it != comps.rend(); ++it) {
    if (it->mass > 1.5 / n) return curve.grid[it->last > it->first ? it->last - 1 : it->last];
  }
  return curve.grid.empty() ? 0.0 : curve.grid.back();
}

DensityCurve bulk_density_curve(const PreparedEnsemble& prepared, const EnsembleSpec& spec, int points,
                                const SolverConfig& cfg) {
  const auto [lo, hi] = spectral_bounds(spec, prepared.variant());
  const DensityCurve coarse = density_curve(prepared, linspace(lo, hi, 80), cfg);
  const double step = (hi - lo) / 79.0;
  const double edge = bulk_upper_edge(coarse, spec.n);
  // The coarse bulk edge is accurate to one coarse step.
  const double top = std::min(hi, edge + 2.0 * step);
  double bottom = lo;
  const auto comps = support_components(coarse);
  if (!comps.empty()) bottom = std::max(lo, comps.front().lo - step);
  return refine_steep(prepared, density_curve(prepared, linspace(bottom, top, points), cfg), cfg);
}

DensityCurve refine_steep(const PreparedEnsemble& prepared, DensityCurve curve, const SolverConfig& cfg,
                          int rounds, double jump) {
  for (int r = 0; r < rounds; ++r) {
    const double peak = *std::max_element(curve.rho.begin(), curve.rho.end());
    if (!(peak > 0.0)) break;
    std::vector<double> extra;
    for (std::size_t i = 1; i < curve.grid.size(); ++i) {
      if (std::abs(curve.rho[i] - curve.rho[i - 1]) > jump * peak) {
        extra.push_back(0.5 * (curve.grid[i] + curve.grid[i - 1]));
      }
    }
    if (extra.empty()) break;
    // One chunk per point: every inserted point is solved from a cold start.
    const DensityCurve add = density_curve_parallel(prepared, extra, cfg, static_cast<int>(extra.size()));
    DensityCurve merged = empty_curve({}, cfg);
    std::size_t a = 0, b = 0;
    auto take = [&merged](const DensityCurve& c, std::size_t k) {
      merged.grid.push_back(c.grid[k]);
      merged.rho.push_back(c.rho[k]);
      merged.iterations.push_back(c.iterations[k]);
      merged.converged.push_back(c.converged[k]);
    };
    while (a < curve.grid.size() || b < add.grid.size()) {
      if (b == add.grid.size() || (a < curve.grid.size() && curve.grid[a] < add.grid[b])) {
        take(curve, a++);
      } else {
        take(add, b++);
      }
    }
    merged.warnings = std::move(curve.warnings);
    merged.warnings.insert(merged.warnings.end(), add.warnings.begin(), add.warnings.end());
    curve = std::move(merged);
  }
  return curve;
}

}  // namespace ncw
