#include <vector>

#include <benchmark/benchmark.h>

#include "waterscreen/rng.hpp"
#include "waterscreen/splinebasis.hpp"

using namespace waterscreen;

namespace {

std::vector<double> uniform_column(std::size_t n) {
    Rng rng(n + 1);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = rng.child(i).next_double() * 10.0;
    return x;
}

void BM_basis_evaluate(benchmark::State& state) {
    std::vector<double> x = uniform_column(static_cast<std::size_t>(state.range(0)));
    BsplineBasis basis = BsplineBasis::from_quantiles(x, 20);
    for (auto _ : state) {
        Eigen::MatrixXd B = basis.evaluate(x);
        benchmark::DoNotOptimize(B);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_basis_evaluate)->Arg(1 << 10)->Arg(1 << 14)->Arg(1 << 17);

void BM_basis_derivative(benchmark::State& state) {
    std::vector<double> x = uniform_column(static_cast<std::size_t>(state.range(0)));
    BsplineBasis basis = BsplineBasis::from_quantiles(x, 20);
    for (auto _ : state) {
        Eigen::MatrixXd D = basis.derivative(x);
        benchmark::DoNotOptimize(D);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_basis_derivative)->Arg(1 << 10)->Arg(1 << 14);

} // namespace
