#include <benchmark/benchmark.h>

#include "waterscreen/ingest.hpp"
#include "waterscreen/panelprep.hpp"
#include "waterscreen/synth.hpp"

using namespace waterscreen;

namespace {

// Aggregation from raw sample records to the zip x year panel, the hot path
// of the build-panel stage.
void BM_build_panel(benchmark::State& state) {
    SynthSpec spec;
    spec.n_zips = static_cast<int>(state.range(0));
    spec.n_years = 8;
    spec.n_analytes = 10;
    spec.seed = 7;
    SynthResult res = generate_panel(spec);
    IngestConfig cfg;
    cfg.year_min = spec.start_year;
    cfg.year_max = spec.start_year + spec.n_years - 1;
    for (auto _ : state) {
        IngestReport report;
        ZipYearPanel panel = build_panel(res.raw, cfg, report);
        benchmark::DoNotOptimize(panel.analytes);
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(res.raw.samples.size()));
}
BENCHMARK(BM_build_panel)->Arg(30)->Arg(120)->Unit(benchmark::kMillisecond);

void BM_prepare_panel(benchmark::State& state) {
    SynthSpec spec;
    spec.n_zips = 120;
    spec.n_years = 8;
    spec.n_analytes = 20;
    spec.missing_rate = 0.2;
    spec.seed = 7;
    SynthResult res = generate_panel(spec);
    IngestConfig cfg;
    cfg.year_min = spec.start_year;
    cfg.year_max = spec.start_year + spec.n_years - 1;
    IngestReport report;
    ZipYearPanel base = build_panel(res.raw, cfg, report);
    for (auto _ : state) {
        ZipYearPanel panel = base;
        prepare_panel(panel);
        benchmark::DoNotOptimize(panel.analyte_info);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(base.n_rows()));
}
BENCHMARK(BM_prepare_panel)->Unit(benchmark::kMillisecond);

} // namespace
