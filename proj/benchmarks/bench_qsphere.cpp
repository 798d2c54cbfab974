/// @file bench_qsphere.cpp
/// @brief Microbenchmarks for the hot kernels: spherical-harmonic transform
///        round trips, evolution right-hand sides, one modified-flow step,
///        and an envelope sweep.
///
/// Grid sizes follow the resolution ladder the scenario runner uses
/// (nlat = 16/32/64 with nlon = 2*nlat).  All state is built once per
/// benchmark so the loop body measures the kernel alone.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "qsphere/conformal.hpp"
#include "qsphere/envelopes.hpp"
#include "qsphere/evolver.hpp"
#include "qsphere/prescribed.hpp"
#include "qsphere/ricci_flow.hpp"
#include "qsphere/sphere.hpp"

namespace {

using namespace qsphere;

Field smooth_test_field(const GridPtr& grid) {
    Field f(grid);
    for (int i = 0; i < grid->nlat(); ++i) {
        for (int j = 0; j < grid->nlon(); ++j) {
            f.at(i, j) = 1.0 + 0.1 * grid->x(i) * std::cos(grid->phi(j)) +
                         0.05 * grid->x(i) * grid->x(i);
        }
    }
    return f;
}

// ============================================================================
// Spherical-harmonic transform round trip
// ============================================================================

void bm_sht_roundtrip(benchmark::State& state) {
    const int nlat = int(state.range(0));
    const GridPtr grid = build_grid(nlat, 2 * nlat);
    const Field f = smooth_test_field(grid);
    for (auto _ : state) {
        Field back = inverse(forward(f));
        benchmark::DoNotOptimize(back.values().data());
    }
}
BENCHMARK(bm_sht_roundtrip)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

// ============================================================================
// Round-metric Laplacian
// ============================================================================

void bm_laplacian(benchmark::State& state) {
    const int nlat = int(state.range(0));
    const GridPtr grid = build_grid(nlat, 2 * nlat);
    const Field f = smooth_test_field(grid);
    for (auto _ : state) {
        Field lap = laplacian_sigma(f);
        benchmark::DoNotOptimize(lap.values().data());
    }
}
BENCHMARK(bm_laplacian)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

// ============================================================================
// Conformal-branch right-hand side (lapse variable)
// ============================================================================

void bm_conformal_rhs(benchmark::State& state) {
    const int nlat = int(state.range(0));
    const GridPtr grid = build_grid(nlat, 2 * nlat);
    const ConformalFoliation fol = ConformalFoliation::round(grid);
    const PrescribedCurvature rbar = PrescribedCurvature::zero();
    const Field u = smooth_test_field(grid);
    for (auto _ : state) {
        Field rhs = conformal_rhs(fol, rbar, DependentVariable::lapse, u, 2.0);
        benchmark::DoNotOptimize(rhs.values().data());
    }
}
BENCHMARK(bm_conformal_rhs)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

// ============================================================================
// One modified-flow RK4 step (ellipsoid background)
// ============================================================================

void bm_flow_step(benchmark::State& state) {
    const int nlat = int(state.range(0));
    const GridPtr grid = build_grid(nlat, 2 * nlat);
    const AxiMetric m = make_ellipsoid(grid, 1.2);
    for (auto _ : state) {
        AxiMetric next = step_modified_flow(m, 1e-3);
        benchmark::DoNotOptimize(next.a.data());
        benchmark::DoNotOptimize(next.b.data());
    }
}
BENCHMARK(bm_flow_step)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

// ============================================================================
// Envelope sweep on a decaying separable background
// ============================================================================

void bm_envelope_sweep(benchmark::State& state) {
    const int nlat = int(state.range(0));
    const GridPtr grid = build_grid(nlat, 2 * nlat);
    Field profile(grid);
    for (int i = 0; i < grid->nlat(); ++i)
        for (int j = 0; j < grid->nlon(); ++j)
            profile.at(i, j) = 0.05 * (3.0 * grid->x(i) * grid->x(i) - 1.0);
    const ConformalFoliation fol =
        ConformalFoliation::separable(profile, TimeLawKind::inverse_power, 2.0);
    const PrescribedCurvature rbar = PrescribedCurvature::zero();
    std::vector<double> t_grid;
    for (int k = 0; k < 200; ++k)
        t_grid.push_back(std::exp(std::log(20.0) * double(k) / 199.0));
    for (auto _ : state) {
        EnvelopePair env = envelopes_conformal(fol, rbar, t_grid);
        benchmark::DoNotOptimize(env.lower.data());
    }
}
BENCHMARK(bm_envelope_sweep)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
