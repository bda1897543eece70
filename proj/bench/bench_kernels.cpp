// OpenMP kernels against their serial references.
#include <benchmark/benchmark.h>

#include "ncw/linalg.hpp"
#include "ncw/montecarlo.hpp"
#include "ncw/pastur.hpp"

using namespace ncw;

namespace {

void BM_DensityCurveSerial(benchmark::State& state) {
  const EnsembleSpec spec = build_fig2_model(static_cast<int>(state.range(0)), 0.3, 0.5);
  const PreparedEnsemble prepared(spec, Variant::Nccwe);
  const auto grid = linspace(0.05, 3.0, 32);
  for (auto _ : state) benchmark::DoNotOptimize(density_curve(prepared, grid, SolverConfig{}));
}

void BM_DensityCurveParallel(benchmark::State& state) {
  const EnsembleSpec spec = build_fig2_model(static_cast<int>(state.range(0)), 0.3, 0.5);
  const PreparedEnsemble prepared(spec, Variant::Nccwe);
  const auto grid = linspace(0.05, 3.0, 32);
  for (auto _ : state) benchmark::DoNotOptimize(density_curve_parallel(prepared, grid, SolverConfig{}));
}

McConfig bench_mc() {
  McConfig mc;
  mc.trials = 8;
  return mc;
}

void BM_SampleSerial(benchmark::State& state) {
  const EnsembleSpec spec = build_fig1_model(static_cast<int>(state.range(0)), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(sample_wishart_serial(spec, bench_mc(), 4.0));
}

void BM_SampleParallel(benchmark::State& state) {
  const EnsembleSpec spec = build_fig1_model(static_cast<int>(state.range(0)), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(sample_wishart(spec, bench_mc(), 4.0));
}

struct TraceInputs {
  ComplexMatrix m;
  Vector xi_diag;
  Matrix xi;
  Matrix zeta;

  explicit TraceInputs(int n) {
    const EnsembleSpec spec = build_fig2_model(n, 0.3, 0.5);
    const NccweProblem prob(spec.xi, derive_matrices(spec).zeta, spec.sigma2, spec.kappa());
    m = prob.m_matrix(Complex(1.0, 1e-3), Complex(0.2, -0.5), Complex(0.3, -0.4));
    xi_diag = prob.xi_eigs();
    xi = xi_diag.asDiagonal();
    zeta = prob.zeta_rotated();
  }
};

void BM_TracesDense(benchmark::State& state) {
  const TraceInputs in(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(resolvent_traces(in.m, in.xi, in.zeta));
}

void BM_TracesDiag(benchmark::State& state) {
  const TraceInputs in(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(resolvent_traces_diag(in.m, in.xi_diag, in.zeta));
}

}  // namespace

BENCHMARK(BM_DensityCurveSerial)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DensityCurveParallel)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SampleSerial)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SampleParallel)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TracesDense)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TracesDiag)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
