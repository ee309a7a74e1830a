#include <cmath>
#include <vector>

#include <benchmark/benchmark.h>

#include "waterscreen/mixtures.hpp"
#include "waterscreen/rng.hpp"

using namespace waterscreen;

namespace {

std::vector<double> lognormal_column(std::size_t n, double nan_rate) {
    Rng rng(n);
    Rng rv = rng.child("v"), rm = rng.child("m");
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::exp(rv.child(i).next_normal());
        if (rm.child(i).next_double() < nan_rate) x[i] = std::nan("");
    }
    return x;
}

void BM_quantize(benchmark::State& state) {
    std::vector<double> col = lognormal_column(static_cast<std::size_t>(state.range(0)), 0.1);
    for (auto _ : state) {
        std::vector<int> scores = quantize(col, 4);
        benchmark::DoNotOptimize(scores);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_quantize)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);

void BM_natural_spline_basis(benchmark::State& state) {
    std::vector<double> col = lognormal_column(static_cast<std::size_t>(state.range(0)), 0.0);
    for (auto _ : state) {
        Eigen::MatrixXd basis = natural_spline_basis(col, 4);
        benchmark::DoNotOptimize(basis);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_natural_spline_basis)->Arg(1 << 12)->Arg(1 << 16);

} // namespace
