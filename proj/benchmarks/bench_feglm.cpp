#include <cmath>
#include <vector>

#include <benchmark/benchmark.h>

#include "waterscreen/feglm.hpp"
#include "waterscreen/rng.hpp"

using namespace waterscreen;

namespace {

// Balanced zip x year layout, one exposure with a mild planted effect and
// three noise covariates.
RegressionSpec make_spec(int nz, int ny) {
    const int n = nz * ny;
    Rng rng(static_cast<std::uint64_t>(nz) * 1000 + static_cast<std::uint64_t>(ny));
    RegressionSpec s;
    s.y.resize(n);
    s.offset.resize(n);
    s.exposures.resize(n, 1);
    s.covariates.resize(n, 3);
    s.fe_a.resize(static_cast<std::size_t>(n));
    s.fe_b.resize(static_cast<std::size_t>(n));
    s.cluster.resize(static_cast<std::size_t>(n));
    Rng rx = rng.child("x"), rc = rng.child("c"), ry = rng.child("y");
    for (int i = 0; i < n; ++i) {
        s.fe_a[static_cast<std::size_t>(i)] = i / ny;
        s.fe_b[static_cast<std::size_t>(i)] = i % ny;
        s.cluster[static_cast<std::size_t>(i)] = i / ny;
        s.offset[i] = std::log(5e4);
        s.exposures(i, 0) = rx.child(i).next_normal();
        for (int c = 0; c < 3; ++c) s.covariates(i, c) = rc.child(i * 3 + c).next_normal();
        double eta = s.offset[i] + std::log(0.008) + 0.05 * s.exposures(i, 0);
        s.y[i] = static_cast<double>(ry.child(i).next_poisson(std::exp(eta)));
    }
    s.exposure_names = {"exposure"};
    s.covariate_names = {"c1", "c2", "c3"};
    return s;
}

void BM_fit_poisson_fe(benchmark::State& state) {
    RegressionSpec spec = make_spec(static_cast<int>(state.range(0)), 11);
    for (auto _ : state) {
        FitResult fit = fit_poisson_fe(spec);
        benchmark::DoNotOptimize(fit.coef);
    }
    state.SetItemsProcessed(state.iterations() * spec.y.size());
}
BENCHMARK(BM_fit_poisson_fe)->Arg(50)->Arg(200)->Arg(600)->Unit(benchmark::kMillisecond);

void BM_demean(benchmark::State& state) {
    RegressionSpec spec = make_spec(static_cast<int>(state.range(0)), 11);
    Eigen::MatrixXd cols(spec.y.size(), 4);
    cols.col(0) = spec.exposures.col(0);
    cols.rightCols(3) = spec.covariates;
    Eigen::VectorXd w = Eigen::VectorXd::Ones(spec.y.size());
    for (auto _ : state) {
        Eigen::MatrixXd work = cols;
        int iters = demean(work, spec.fe_a, spec.fe_b, w);
        benchmark::DoNotOptimize(iters);
        benchmark::DoNotOptimize(work);
    }
    state.SetItemsProcessed(state.iterations() * spec.y.size());
}
BENCHMARK(BM_demean)->Arg(200)->Arg(600)->Unit(benchmark::kMillisecond);

} // namespace
