#include "ncw/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace ncw {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

template <class Mat>
std::vector<double> eigenvalues_of(const Mat& w_lower) {
  Eigen::SelfAdjointEigenSolver<Mat> solver(w_lower, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    // One retry on an explicitly symmetrized copy.
    Mat full = w_lower.template selfadjointView<Eigen::Lower>();
    solver.compute(0.5 * (full + full.adjoint()), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NoConvergence("eigensolver failed on sampled matrix");
  }
  const Vector& ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

struct TrialResult {
  std::vector<double> eigenvalues;
  std::string failure;
};

TrialResult run_trial(const EnsembleSpec& spec, const Matrix& xi_sqrt, bool correlated, std::uint64_t seed,
                      int trial) {
  TrialResult r;
  try {
    r.eigenvalues = sample_trial(spec, correlated ? xi_sqrt : Matrix(), seed, trial);
  } catch (const NoConvergence& e) {
    std::ostringstream msg;
    msg << "trial " << trial << ": " << e.what();
    r.failure = msg.str();
  }
  return r;
}

McSpectrum assemble(const EnsembleSpec& spec, const McConfig& cfg, std::vector<TrialResult>& results,
                    std::optional<double> bulk_edge, bool parallel);

McSpectrum run(const EnsembleSpec& spec, const McConfig& cfg, std::optional<double> bulk_edge, bool parallel) {
  if (cfg.trials < 1) throw Error("mc: trials must be >= 1");
  if (cfg.bins < 2) throw Error("mc: bins must be >= 2");
  const ValidationReport report = validate_spec(spec);
  if (!report.ok()) throw InvalidSpec("mc: invalid ensemble: " + report.violations.front());

  const bool correlated = !spec.xi.isIdentity(0.0);
  const Matrix xi_sqrt = correlated ? derive_matrices(spec).xi_sqrt : Matrix();
  std::vector<TrialResult> results(static_cast<std::size_t>(cfg.trials));
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < cfg.trials; ++i) results[i] = run_trial(spec, xi_sqrt, correlated, cfg.seed, i);
  } else {
    for (int i = 0; i < cfg.trials; ++i) results[i] = run_trial(spec, xi_sqrt, correlated, cfg.seed, i);
  }
  return assemble(spec, cfg, results, bulk_edge, parallel);
}

McSpectrum assemble(const EnsembleSpec& spec, const McConfig& cfg, std::vector<TrialResult>& results,
                    std::optional<double> bulk_edge, bool parallel) {
  McSpectrum mc;
  mc.n = spec.n;
  double largest_sum = 0.0;
  for (auto& r : results) {
    if (!r.failure.empty()) {
      mc.failures.push_back(r.failure);
      continue;
    }
    ++mc.trials;
    largest_sum += r.eigenvalues.back();
    mc.eigenvalues.insert(mc.eigenvalues.end(), r.eigenvalues.begin(), r.eigenvalues.end());
  }
  if (mc.trials == 0) throw NoConvergence("mc: every trial failed");
  mc.mean_largest = largest_sum / mc.trials;
  mc.histogram = make_histogram(mc.eigenvalues, cfg.bins);

  double edge;
  if (bulk_edge) {
    edge = *bulk_edge;
  } else {
    EnsembleSpec reference = spec;
    reference.b.setZero();
    McConfig ref_cfg = cfg;
    ref_cfg.trials = std::min(cfg.trials, 4);
    const McSpectrum ref = run(reference, ref_cfg, std::numeric_limits<double>::infinity(), parallel);
    edge = *std::max_element(ref.eigenvalues.begin(), ref.eigenvalues.end());
  }
  mc.classification_edge = edge + cfg.bulk_edge_pad * mc.histogram.width();

  const std::size_t n = static_cast<std::size_t>(spec.n);
  for (std::size_t t = 0; t < static_cast<std::size_t>(mc.trials); ++t) {
    std::vector<double> above;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = mc.eigenvalues[t * n + j];
      if (v > mc.classification_edge) above.push_back(v);
    }
    mc.outliers.push_back(std::move(above));
  }
  return mc;
}

}  // namespace

double McSpectrum::mean_rank(int r) const {
  if (r < 1 || r > n || trials == 0) throw Error("mean_rank: rank out of range");
  const std::size_t dim = static_cast<std::size_t>(n);
  double s = 0.0;
  for (std::size_t t = 0; t < static_cast<std::size_t>(trials); ++t) {
    s += eigenvalues[t * dim + dim - static_cast<std::size_t>(r)];
  }
  return s / trials;
}

std::uint64_t trial_seed(std::uint64_t seed, int trial) {
  return splitmix64(splitmix64(seed) ^ splitmix64(0xD1B54A32D192ED03ULL + static_cast<std::uint64_t>(trial)));
}

std::vector<double> sample_trial(const EnsembleSpec& spec, const Matrix& xi_sqrt, std::uint64_t seed, int trial) {
  std::mt19937_64 rng(trial_seed(seed, trial));
  const double inv_t = 1.0 / static_cast<double>(spec.t);

  if (spec.beta == Dyson::Real) {
    std::normal_distribution<double> normal(0.0, std::sqrt(spec.sigma2));
    Matrix a(spec.n, spec.t);
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = normal(rng);
    Matrix full = xi_sqrt.size() > 0 ? Matrix(xi_sqrt * a) : a;
    full += spec.b;
    Matrix w = Matrix::Zero(spec.n, spec.n);
    w.selfadjointView<Eigen::Lower>().rankUpdate(full, inv_t);
    return eigenvalues_of(w);
  }

  std::normal_distribution<double> normal(0.0, std::sqrt(spec.sigma2 / 2.0));
  ComplexMatrix a(spec.n, spec.t);
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      a(i, j) = Complex(re, im);
    }
  ComplexMatrix full = xi_sqrt.size() > 0 ? ComplexMatrix(xi_sqrt.cast<Complex>() * a) : a;
  full += spec.b.cast<Complex>();
  ComplexMatrix w = ComplexMatrix::Zero(spec.n, spec.n);
  w.selfadjointView<Eigen::Lower>().rankUpdate(full, inv_t);
  return eigenvalues_of(w);
}

McSpectrum sample_wishart(const EnsembleSpec& spec, const McConfig& cfg, std::optional<double> bulk_edge) {
  return run(spec, cfg, bulk_edge, true);
}

McSpectrum sample_wishart_serial(const EnsembleSpec& spec, const McConfig& cfg, std::optional<double> bulk_edge) {
  return run(spec, cfg, bulk_edge, false);
}

Histogram make_histogram(const std::vector<double>& values, int bins) {
  if (bins < 2) throw Error("histogram needs at least 2 bins");
  Histogram h;
  if (values.empty()) return h;
  const double top = std::max(*std::max_element(values.begin(), values.end()) * 1.02, 1e-300);
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) h.edges[i] = top * i / bins;
  const double width = top / bins;
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (double v : values) {
    auto idx = static_cast<long>(std::floor(std::max(v, 0.0) / width));
    idx = std::clamp(idx, 0L, static_cast<long>(bins) - 1);
    counts[static_cast<std::size_t>(idx)] += 1.0;
  }
  h.density.resize(counts.size());
  const double norm = 1.0 / (static_cast<double>(values.size()) * width);
  for (std::size_t i = 0; i < counts.size(); ++i) h.density[i] = counts[i] * norm;
  return h;
}

double interpolate_density(const DensityCurve& curve, double lambda) {
  const auto& x = curve.grid;
  if (x.empty() || lambda < x.front() || lambda > x.back()) return 0.0;
  const auto it = std::upper_bound(x.begin(), x.end(), lambda);
  if (it == x.end()) return curve.rho.back();
  const std::size_t k = static_cast<std::size_t>(it - x.begin());
  if (k == 0) return curve.rho.front();
  const double w = (lambda - x[k - 1]) / (x[k] - x[k - 1]);
  return (1.0 - w) * curve.rho[k - 1] + w * curve.rho[k];
}

double bin_average(const DensityCurve& curve, double lo, double hi) {
  // Exact integral of the piecewise-linear interpolant over [lo, hi].
  const auto& x = curve.grid;
  if (x.size() < 2 || hi <= lo) return interpolate_density(curve, lo);
  std::vector<double> knots{lo};
  for (double v : x)
    if (v > lo && v < hi) knots.push_back(v);
  knots.push_back(hi);
  double s = 0.0;
  for (std::size_t k = 1; k < knots.size(); ++k) {
    s += 0.5 * (knots[k] - knots[k - 1]) *
         (interpolate_density(curve, knots[k - 1]) + interpolate_density(curve, knots[k]));
  }
  return s / (hi - lo);
}

ComparisonReport compare_curves(const DensityCurve& theory, const McSpectrum& mc,
                                const std::vector<OutlierPrediction>& predictions, double sup_threshold) {
  if (mc.trials == 0 || mc.eigenvalues.empty() || mc.histogram.density.empty()) {
    throw EmptyOverlap("compare: Monte-Carlo spectrum is empty");
  }
  if (theory.grid.size() < 2) throw EmptyOverlap("compare: theory curve is empty");
  const double edge = mc.classification_edge;
  const double total = static_cast<double>(mc.eigenvalues.size());

  std::vector<double> bulk;
  bulk.reserve(mc.eigenvalues.size());
  for (double v : mc.eigenvalues)
    if (v <= edge) bulk.push_back(v);
  std::sort(bulk.begin(), bulk.end());
  if (bulk.empty() || bulk.back() < theory.grid.front() || bulk.front() > theory.grid.back()) {
    throw EmptyOverlap("compare: theory and sample supports do not overlap");
  }

  ComparisonReport report;
  // Histogram of bulk eigenvalues on the spectrum's bins, normalized by the
  // full eigenvalue count so that it estimates the bulk part of the density.
  const auto& edges = mc.histogram.edges;
  const double width = mc.histogram.width();
  std::vector<double> counts(mc.histogram.density.size(), 0.0);
  for (double v : bulk) {
    auto idx = static_cast<long>(std::floor(std::max(v, 0.0) / width));
    idx = std::clamp(idx, 0L, static_cast<long>(counts.size()) - 1);
    counts[static_cast<std::size_t>(idx)] += 1.0;
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double center = 0.5 * (edges[i] + edges[i + 1]);
    if (center > edge) break;
    const double emp = counts[i] / (total * width);
    report.sup_distance = std::max(report.sup_distance, std::abs(emp - bin_average(theory, edges[i], edges[i + 1])));
    report.sup_distance_center =
        std::max(report.sup_distance_center, std::abs(emp - interpolate_density(theory, center)));
    ++report.bins_compared;
  }

  // Theory CDF by cumulative trapezoid on the grid.
  const auto& x = theory.grid;
  std::vector<double> cdf(x.size(), 0.0);
  for (std::size_t k = 1; k < x.size(); ++k) {
    cdf[k] = cdf[k - 1] + 0.5 * (x[k] - x[k - 1]) * (theory.rho[k] + theory.rho[k - 1]);
  }
  auto theory_cdf = [&](double v) {
    if (v <= x.front()) return 0.0;
    if (v >= x.back()) return cdf.back();
    const std::size_t k = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), v) - x.begin());
    const double h = v - x[k - 1];
    const double slope = (theory.rho[k] - theory.rho[k - 1]) / (x[k] - x[k - 1]);
    return cdf[k - 1] + h * (theory.rho[k - 1] + 0.5 * slope * h);
  };
  for (std::size_t i = 0; i < bulk.size(); ++i) {
    const double f = theory_cdf(bulk[i]);
    const double below = static_cast<double>(i) / total;
    const double above = static_cast<double>(i + 1) / total;
    report.kolmogorov = std::max({report.kolmogorov, std::abs(f - below), std::abs(f - above)});
  }

  std::vector<double> predicted;
  for (const auto& p : predictions)
    if (p.valid) predicted.push_back(p.lambda_bar);
  std::sort(predicted.rbegin(), predicted.rend());
  for (std::size_t r = 0; r < predicted.size() && static_cast<int>(r) < mc.n; ++r) {
    OutlierComparison oc;
    oc.rank = static_cast<int>(r) + 1;
    oc.predicted = predicted[r];
    oc.empirical_mean = mc.mean_rank(oc.rank);
    oc.relative_error = std::abs(oc.empirical_mean - oc.predicted) / std::abs(oc.predicted);
    report.outliers.push_back(oc);
  }
  report.mismatch = report.sup_distance > sup_threshold;
  return report;
}

EnsembleSpec build_fig1_model(int n, double mu, int beta) {
  if (n < 1) throw Error("fig1 model: n >= 1 required");
  const int t = 2 * n;
  Matrix b = Matrix::Zero(n, t);
  for (int j = 0; j < n; ++j) b(j, j) = mu * std::sqrt(static_cast<double>(j + 1));
  return make_spec(n, t, 1.0, beta, Matrix::Identity(n, n), std::move(b));
}

EnsembleSpec build_fig2_model(int n, double mu0, double mu, int beta) {
  if (n < 1) throw Error("fig2 model: n >= 1 required");
  if (std::abs(mu0) >= 1.0 || std::abs(mu) >= 1.0) throw Error("fig2 model: |mu0| < 1 and |mu| < 1 required");
  const int t = 2 * n;
  Matrix xi(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) xi(j, k) = j == k ? 1.0 : std::pow(mu0, std::abs(j - k));
  Matrix b(n, t);
  for (int j = 0; j < n; ++j)
    for (int v = 0; v < t; ++v) b(j, v) = std::pow(mu, std::abs(j - v));
  return make_spec(n, t, 0.25, beta, std::move(xi), std::move(b));
}

EnsembleSpec build_equal_cross_model(int n, int t, double sigma2, double mu0_sq, double mu, int beta) {
  if (n < 1) throw Error("equal_cross model: n >= 1 required");
  Matrix xi = Matrix::Constant(n, n, mu0_sq);
  xi.diagonal().setOnes();
  return make_spec(n, t, sigma2, beta, std::move(xi), Matrix::Constant(n, t, mu));
}

EnsembleSpec build_identity_model(int n, int t, double sigma2, int beta) {
  return make_spec(n, t, sigma2, beta, Matrix::Identity(n, n), Matrix::Zero(n, t));
}

}  // namespace ncw
