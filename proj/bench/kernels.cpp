#include <cmath>
#include <numbers>

#include <benchmark/benchmark.h>

#include "nlspde/duality.hpp"
#include "nlspde/lattice.hpp"
#include "nlspde/model.hpp"
#include "nlspde/nonlocal.hpp"
#include "nlspde/spde.hpp"

using namespace nlspde;

namespace {

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::Parallel : Exec::Serial; }

Model heat_model(int n, int steps) {
    return Model::assemble(Grid::interval(0.0, std::numbers::pi, n), TimeGrid::uniform(1.0, steps),
                           heat_coefficients(1.0), 1.0);
}

void BM_PropagatorMatrix(benchmark::State& st) {
    const Model m = heat_model(127, 64);
    for (auto _ : st) benchmark::DoNotOptimize(propagator_matrix(m.stepper, Direction::Forward, exec_of(st)));
}

void BM_AssembleQ(benchmark::State& st) {
    const Model m = heat_model(63, 64);
    const NonlocalCondition c = NonlocalCondition::with_kappa(Direction::Backward, 0.5);
    for (auto _ : st) benchmark::DoNotOptimize(assemble_Q(c, m, exec_of(st)));
}

void BM_StepExpectation(benchmark::State& st) {
    const NoiseLattice lat = NoiseLattice::build(2, TimeGrid::uniform(1.0, 64), Topology::Recombining);
    const int k = lat.steps() - 1;
    Mat next(255, lat.nodes(k + 1));
    for (Eigen::Index j = 0; j < next.cols(); ++j) {
        for (Eigen::Index i = 0; i < next.rows(); ++i) next(i, j) = std::sin(0.01 * i + 0.1 * j);
    }
    for (auto _ : st) benchmark::DoNotOptimize(step_expectation(lat, k, next, exec_of(st)));
}

void BM_BackwardSpde(benchmark::State& st) {
    const Model m = Model::assemble(Grid::interval(0.0, std::numbers::pi, 31), TimeGrid::uniform(1.0, 16),
                                    heat_coefficients(1.0), 1.0);
    const NoiseLattice lat = NoiseLattice::build(1, m.time, Topology::Recombining);
    const Vec s = sample_nodes(m.grid, [](const Point& x) { return std::sin(x[0]); });
    const Mat terminal = s.replicate(1, lat.nodes(lat.steps()));
    for (auto _ : st) benchmark::DoNotOptimize(solve_backward_spde(m, lat, terminal, {}, exec_of(st)));
}

void BM_FeynmanKac(benchmark::State& st) {
    const Model m = heat_model(63, 16);
    FkOptions opt;
    opt.paths = 4000;
    opt.seed = 7;
    opt.substeps = 4;
    opt.exec = exec_of(st);
    for (auto _ : st) benchmark::DoNotOptimize(fk_simulate(m, {std::numbers::pi / 2, 0.0}, 0, opt));
}

}  // namespace

// Arg 0: serial reference path, arg 1: OpenMP path.
BENCHMARK(BM_PropagatorMatrix)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AssembleQ)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StepExpectation)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BackwardSpde)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeynmanKac)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
