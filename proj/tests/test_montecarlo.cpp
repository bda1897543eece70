#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "helpers.hpp"
#include "ncw/closedform.hpp"
#include "ncw/montecarlo.hpp"

using namespace ncw;

namespace {

DensityCurve mp_curve(const MpParams& p, int points) {
  DensityCurve c;
  c.grid = linspace(p.lower_edge(), p.upper_edge(), points);
  for (double x : c.grid) c.rho.push_back(mp_density(x, p));
  c.iterations.assign(c.grid.size(), 0);
  c.converged.assign(c.grid.size(), true);
  return c;
}

McConfig config(int trials, std::uint64_t seed, int bins = 100) {
  McConfig c;
  c.trials = trials;
  c.seed = seed;
  c.bins = bins;
  return c;
}

// Per-trial normalized traces tr(W)/N, recovered from the eigenvalues.
std::vector<double> trial_traces(const McSpectrum& s) {
  std::vector<double> out;
  for (int t = 0; t < s.trials; ++t) {
    const auto first = s.eigenvalues.begin() + static_cast<long>(t) * s.n;
    out.push_back(std::accumulate(first, first + s.n, 0.0) / s.n);
  }
  return out;
}

}  // namespace

TEST_CASE("trial seeds are distinct and stable") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL})
    for (int t = 0; t < 100; ++t) seen.insert(trial_seed(seed, t));
  CHECK(seen.size() == 300);
  CHECK(trial_seed(42, 3) == trial_seed(42, 3));
}

TEST_CASE("sampling is deterministic and order independent") {
  const EnsembleSpec spec = build_fig2_model(32, 0.3, 0.5);
  const McSpectrum a = sample_wishart(spec, config(6, 123));
  const McSpectrum b = sample_wishart(spec, config(6, 123));
  const McSpectrum serial = sample_wishart_serial(spec, config(6, 123));
  CHECK(a.eigenvalues == b.eigenvalues);
  CHECK(a.eigenvalues == serial.eigenvalues);
  CHECK(a.histogram.density == serial.histogram.density);
  CHECK(a.classification_edge == serial.classification_edge);
  const McSpectrum other = sample_wishart(spec, config(6, 124));
  CHECK(a.eigenvalues != other.eigenvalues);
  // Trial i does not depend on how many trials run.
  const McSpectrum fewer = sample_wishart(spec, config(3, 123));
  CHECK(std::equal(fewer.eigenvalues.begin(), fewer.eigenvalues.end(), a.eigenvalues.begin()));
}

TEST_CASE("pooled spectrum and histogram bookkeeping") {
  for (int beta : {1, 2}) {
    const EnsembleSpec spec = build_fig2_model(24, 0.5, 0.5, beta);
    const McSpectrum s = sample_wishart(spec, config(7, 9, 40));
    CHECK(s.trials == 7);
    CHECK(s.eigenvalues.size() == 7u * 24u);
    for (double v : s.eigenvalues) CHECK(v >= -1e-10);
    for (int t = 0; t < 7; ++t) {
      const auto first = s.eigenvalues.begin() + t * 24;
      CHECK(std::is_sorted(first, first + 24));
    }
    double integral = 0.0;
    for (double d : s.histogram.density) {
      CHECK(d >= 0.0);
      integral += d * s.histogram.width();
    }
    CHECK(std::abs(integral - 1.0) < 1e-12);
    CHECK(s.histogram.edges.front() == 0.0);
    const double top = *std::max_element(s.eigenvalues.begin(), s.eigenvalues.end());
    CHECK(s.histogram.edges.back() == doctest::Approx(1.02 * top).epsilon(1e-14));
    CHECK(s.mean_largest == doctest::Approx(s.mean_rank(1)).epsilon(1e-14));
    CHECK_THROWS(s.mean_rank(0));
    CHECK_THROWS(s.mean_rank(25));
  }
}

TEST_CASE("make_histogram") {
  const Histogram h = make_histogram({0.5, 1.5, 1.6, 3.0}, 3);
  REQUIRE(h.edges.size() == 4);
  CHECK(h.width() == doctest::Approx(1.02));
  CHECK(h.density[0] * h.width() == doctest::Approx(0.25));
  CHECK(h.density[1] * h.width() == doctest::Approx(0.5));
  CHECK(h.density[2] * h.width() == doctest::Approx(0.25));
  CHECK_THROWS(make_histogram({1.0}, 1));
}

TEST_CASE("sample mean of tr(W)/N matches sigma2 <xi> + <zeta>") {
  struct Case {
    EnsembleSpec spec;
    double expect;
  };
  std::vector<Case> cases;
  cases.push_back({build_identity_model(64, 128, 1.0), 1.0});
  for (int beta : {1, 2}) {
    const EnsembleSpec s = build_fig2_model(48, 0.3, 0.5, beta);
    const double zeta_mean = s.b.squaredNorm() / (static_cast<double>(s.n) * s.t);
    cases.push_back({s, s.sigma2 * s.xi.trace() / s.n + zeta_mean});
  }
  for (const auto& c : cases) {
    const McSpectrum s = sample_wishart(c.spec, config(200, 5, 20));
    const auto tr = trial_traces(s);
    const double mean = std::accumulate(tr.begin(), tr.end(), 0.0) / tr.size();
    double var = 0.0;
    for (double v : tr) var += (v - mean) * (v - mean);
    const double se = std::sqrt(var / (tr.size() - 1) / tr.size());
    CHECK(std::abs(mean - c.expect) < 3.0 * se);
  }
}

TEST_CASE("complex samples: eigenvalues agree with the real embedding") {
  // Re-draws the same Gaussian stream and diagonalizes the 2N x 2N real
  // symmetric embedding [[Re W, -Im W], [Im W, Re W]], whose spectrum is that
  // of W with every eigenvalue doubled.
  const EnsembleSpec spec = build_fig2_model(12, 0.4, 0.3, 2);
  const Matrix xi_sqrt = derive_matrices(spec).xi_sqrt;
  const auto got = sample_trial(spec, xi_sqrt, 77, 2);

  std::mt19937_64 rng(trial_seed(77, 2));
  std::normal_distribution<double> normal(0.0, std::sqrt(spec.sigma2 / 2.0));
  Matrix re(spec.n, spec.t), im(spec.n, spec.t);
  for (int j = 0; j < spec.t; ++j)
    for (int i = 0; i < spec.n; ++i) {
      re(i, j) = normal(rng);
      im(i, j) = normal(rng);
    }
  const Matrix ar = xi_sqrt * re + spec.b, ai = xi_sqrt * im;
  const Matrix wr = (ar * ar.transpose() + ai * ai.transpose()) / spec.t;
  const Matrix wi = (ai * ar.transpose() - ar * ai.transpose()) / spec.t;
  Matrix emb(2 * spec.n, 2 * spec.n);
  emb << wr, -wi, wi, wr;
  const Vector ev = sym_eigen(emb).eigenvalues;
  REQUIRE(got.size() == static_cast<std::size_t>(spec.n));
  for (int i = 0; i < spec.n; ++i) {
    CHECK(std::abs(got[i] - ev(2 * i)) < 1e-10 * ev.maxCoeff());
    CHECK(std::abs(got[i] - ev(2 * i + 1)) < 1e-10 * ev.maxCoeff());
  }
}

TEST_CASE("real samples: eigenvalues agree with an explicit product") {
  const EnsembleSpec spec = build_fig2_model(10, 0.2, 0.4, 1);
  const Matrix xi_sqrt = derive_matrices(spec).xi_sqrt;
  const auto got = sample_trial(spec, xi_sqrt, 3, 0);
  std::mt19937_64 rng(trial_seed(3, 0));
  std::normal_distribution<double> normal(0.0, std::sqrt(spec.sigma2));
  Matrix a(spec.n, spec.t);
  for (int j = 0; j < spec.t; ++j)
    for (int i = 0; i < spec.n; ++i) a(i, j) = normal(rng);
  const Matrix full = xi_sqrt * a + spec.b;
  const Vector ev = sym_eigen(full * full.transpose() / spec.t).eigenvalues;
  for (int i = 0; i < spec.n; ++i) CHECK(std::abs(got[i] - ev(i)) < 1e-12 * ev.maxCoeff());
}

TEST_CASE("Marchenko-Pastur samples") {
  const MpParams p{1.0, 0.5};
  const DensityCurve theory = mp_curve(p, 2000);
  SUBCASE("N = 512: histogram within 0.05") {
    const McSpectrum s = sample_wishart(build_identity_model(512, 1024, 1.0), config(20, 11), p.upper_edge());
    const auto r = compare_curves(theory, s);
    CHECK(r.sup_distance < 0.05);
    CHECK_FALSE(r.mismatch);
    CHECK(r.bins_compared > 50);
  }
  SUBCASE("N = 1024: Kolmogorov statistic below 0.02") {
    const McSpectrum s = sample_wishart(build_identity_model(1024, 2048, 1.0), config(20, 12), p.upper_edge());
    CHECK(compare_curves(theory, s).kolmogorov < 0.02);
  }
  SUBCASE("complex entries follow the same law") {
    const McSpectrum s = sample_wishart(build_identity_model(256, 512, 1.0, 2), config(20, 13), p.upper_edge());
    CHECK(compare_curves(theory, s).kolmogorov < 0.02);
  }
}

TEST_CASE("comparison against the wrong ensemble is flagged") {
  const MpParams p{1.0, 0.5};
  const DensityCurve theory = mp_curve(p, 2000);
  const McSpectrum s = sample_wishart(build_fig1_model(256, 3.0), config(5, 4));
  const auto r = compare_curves(theory, s);
  CHECK(r.mismatch);
  CHECK(r.sup_distance > 0.1);
  const McSpectrum same = sample_wishart(build_fig1_model(256, 0.0), config(5, 4));
  CHECK(compare_curves(theory, same).sup_distance < r.sup_distance);
}

TEST_CASE("degenerate comparisons") {
  const DensityCurve theory = mp_curve(MpParams{1.0, 0.5}, 100);
  CHECK_THROWS_AS(compare_curves(theory, McSpectrum{}), EmptyOverlap);
  const McSpectrum s = sample_wishart(build_identity_model(16, 32, 1.0), config(2, 1));
  CHECK_THROWS_AS(compare_curves(DensityCurve{}, s), EmptyOverlap);
  DensityCurve far = mp_curve(MpParams{1.0, 0.5}, 100);
  for (double& x : far.grid) x += 100.0;
  CHECK_THROWS_AS(compare_curves(far, s), EmptyOverlap);
  CHECK_THROWS(sample_wishart(build_identity_model(16, 32, 1.0), config(0, 1)));
  CHECK_THROWS(sample_wishart(build_identity_model(16, 32, 1.0), config(2, 1, 1)));
}

TEST_CASE("outliers are classified above the bulk and matched to predictions") {
  const int n = 256;
  const EnsembleSpec spec = build_equal_cross_model(n, 2 * n, 1.0, 0.1);
  const MpParams bulk{0.9, 0.5};
  // The top eigenvalue fluctuates by about 6.5% per trial; 100 trials put the
  // 2% bound at three standard errors.
  const McSpectrum s = sample_wishart(spec, config(100, 21), bulk.upper_edge());
  for (const auto& above : s.outliers) CHECK(above.size() == 1);
  const auto p = outlier_cwe_equal_cross(n, 0.1, 1.0, 0.5);
  const auto r = compare_curves(mp_curve(bulk, 1000), s, {p});
  REQUIRE(r.outliers.size() == 1);
  CHECK(r.outliers[0].rank == 1);
  CHECK(r.outliers[0].empirical_mean == doctest::Approx(s.mean_largest));
  CHECK(r.outliers[0].relative_error < 0.02);
  // Invalid predictions are not matched.
  const auto weak = outlier_cwe_equal_cross(n, 0.0, 1.0, 0.5);
  CHECK(compare_curves(mp_curve(bulk, 1000), s, {weak}).outliers.empty());
}

TEST_CASE("classification edge falls back to a B = 0 reference run") {
  const McSpectrum s = sample_wishart(build_fig1_model(64, 1.0), config(4, 2, 50));
  const McSpectrum ref = sample_wishart(build_identity_model(64, 128, 1.0), config(4, 2, 50));
  const double ref_top = *std::max_element(ref.eigenvalues.begin(), ref.eigenvalues.end());
  CHECK(s.classification_edge == doctest::Approx(ref_top + 3.0 * s.histogram.width()).epsilon(1e-12));
}

TEST_CASE("bin averages of the theory curve") {
  DensityCurve c;
  c.grid = {0.0, 1.0, 2.0};
  c.rho = {0.0, 1.0, 0.0};
  CHECK(bin_average(c, 0.0, 2.0) == doctest::Approx(0.5));
  CHECK(bin_average(c, 0.0, 1.0) == doctest::Approx(0.5));
  CHECK(bin_average(c, 0.5, 1.5) == doctest::Approx(0.75));
  CHECK(bin_average(c, 2.0, 4.0) == doctest::Approx(0.0));
  CHECK(interpolate_density(c, 0.25) == doctest::Approx(0.25));
  CHECK(interpolate_density(c, -1.0) == 0.0);
}

TEST_CASE("fig1 model") {
  const EnsembleSpec s = build_fig1_model(4, 1.0);
  CHECK(s.t == 8);
  CHECK(s.sigma2 == 1.0);
  CHECK(s.xi.isIdentity(0.0));
  Matrix expect = Matrix::Zero(4, 8);
  expect.diagonal() << 1.0, std::sqrt(2.0), std::sqrt(3.0), 2.0;
  CHECK(s.b == expect);
  CHECK(build_fig1_model(5, 0.0).b.isZero(0.0));
  for (double mu : {0.5, 3.0}) {
    const EnsembleSpec f = build_fig1_model(6, mu);
    const Matrix zeta = derive_matrices(f).zeta;
    Matrix diag = Matrix::Zero(6, 6);
    for (int j = 1; j <= 6; ++j) diag(j - 1, j - 1) = mu * mu * j / 12.0;
    CHECK((zeta - diag).norm() < 1e-14);
  }
}

TEST_CASE("fig2 model") {
  const EnsembleSpec s = build_fig2_model(5, 0.5, 0.3);
  CHECK(s.t == 10);
  CHECK(s.sigma2 == 0.25);
  CHECK(s.xi(0, 2) == doctest::Approx(0.25));
  CHECK(s.xi(4, 0) == doctest::Approx(0.0625));
  CHECK(s.b(1, 3) == doctest::Approx(0.09));
  CHECK(s.b(0, 9) == doctest::Approx(std::pow(0.3, 9)));
  CHECK(build_fig2_model(6, 0.0, 0.3).xi.isIdentity(0.0));
  const Matrix b0 = build_fig2_model(4, 0.3, 0.0).b;
  Matrix delta = Matrix::Zero(4, 8);
  delta.diagonal().setOnes();
  CHECK(b0 == delta);
  for (double mu0 : {0.1, 0.3, 0.5}) CHECK_NOTHROW(build_fig2_model(512, mu0, 0.5));
  CHECK_THROWS(build_fig2_model(4, 1.0, 0.5));
  CHECK_THROWS(build_fig2_model(4, 0.5, -1.0));
}

TEST_CASE("equal cross-correlation and identity builders") {
  const EnsembleSpec e = build_equal_cross_model(3, 7, 2.0, 0.2, 0.5);
  CHECK(e.xi(0, 1) == 0.2);
  CHECK(e.xi(2, 2) == 1.0);
  CHECK(e.b.isConstant(0.5));
  CHECK(e.t == 7);
  const EnsembleSpec i = build_identity_model(3, 3, 1.5, 2);
  CHECK(i.beta == Dyson::Complex);
  CHECK(i.b.isZero(0.0));
}
