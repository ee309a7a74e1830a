#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "helpers.hpp"
#include "waterscreen/csv.hpp"
#include "waterscreen/errors.hpp"
#include "waterscreen/pipeline.hpp"
#include "waterscreen/synth.hpp"

using namespace waterscreen;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is.good());
    return json::parse(is);
}

bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            const double x = a(i, j), y = b(i, j);
            if (std::isnan(x) != std::isnan(y)) return false;
            if (!std::isnan(x) && x != y) return false;
        }
    return true;
}

bool same_num(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config files accept comments, blanks, and padding") {
    wstest::TempDir dir;
    const std::string path = dir.file("run.cfg");
    wstest::write_file(path,
                       "# comment line\n"
                       "\n"
                       "  seed = 42 \n"
                       "out_dir=/tmp/waterscreen_x\n"
                       " bh_alpha = 0.01\n"
                       "qgcomp_clustered=false\n");
    RunConfig cfg = parse_config_file(path);
    CHECK(cfg.seed == 42);
    CHECK(cfg.out_dir == "/tmp/waterscreen_x");
    CHECK(cfg.bh_alpha == 0.01);
    CHECK(!cfg.qgcomp_clustered);
    CHECK(cfg.year_min == 2012); // untouched defaults survive
    CHECK(cfg.quantiles == 4);
}

TEST_CASE("config parse failures carry the line or key") {
    wstest::TempDir dir;
    const std::string path = dir.file("bad.cfg");

    wstest::write_file(path, "seed=1\nbogus line\n");
    CHECK_THROWS_WITH_AS(parse_config_file(path), "config line 2 is not key=value: bogus line",
                         ConfigError);

    wstest::write_file(path, "zzz=1\n");
    CHECK_THROWS_WITH_AS(parse_config_file(path), "unknown config key: zzz", ConfigError);

    wstest::write_file(path, "seed=abc\n");
    CHECK_THROWS_WITH_AS(parse_config_file(path), "config key 'seed' needs an integer, got 'abc'",
                         ConfigError);

    wstest::write_file(path, "bh_alpha=x\n");
    CHECK_THROWS_AS(parse_config_file(path), ConfigError);

    wstest::write_file(path, "drop_censored=maybe\n");
    CHECK_THROWS_AS(parse_config_file(path), ConfigError);

    CHECK_THROWS_AS(parse_config_file(dir.file("absent.cfg")), IoError);
}

TEST_CASE("the echoed config file reproduces every value") {
    RunConfig cfg;
    cfg.samples = "data/s.csv";
    cfg.out_dir = "elsewhere";
    cfg.gam_lambda = 1.0 / 3.0; // forces the 17-digit fallback
    cfg.bh_alpha = 0.01;
    cfg.seed = 987654321;
    cfg.threads = 2;
    cfg.doseresponse_analytes = "Nitrate, Arsenic";
    cfg.mixtures_file = "";

    wstest::TempDir dir;
    const std::string path = dir.file("echo.cfg");
    write_config_echo(cfg, path);
    RunConfig back = parse_config_file(path);
    CHECK(config_to_kv(back) == config_to_kv(cfg));
    CHECK(back.gam_lambda == cfg.gam_lambda);
    CHECK(back.doseresponse_analytes == cfg.doseresponse_analytes);
}

TEST_CASE("thread resolution prefers the config then the environment") {
    RunConfig cfg;
    cfg.threads = 3;
    setenv("WATERSCREEN_THREADS", "7", 1);
    CHECK(resolve_threads(cfg) == 3);

    cfg.threads = 0;
    CHECK(resolve_threads(cfg) == 7);

    setenv("WATERSCREEN_THREADS", "abc", 1);
    CHECK_THROWS_AS(resolve_threads(cfg), ConfigError);
    setenv("WATERSCREEN_THREADS", "0", 1);
    CHECK_THROWS_AS(resolve_threads(cfg), ConfigError);

    unsetenv("WATERSCREEN_THREADS");
    CHECK(resolve_threads(cfg) == 1);
}

TEST_CASE("panel interchange files round-trip exactly") {
    SynthSpec spec;
    spec.n_zips = 10;
    spec.n_years = 4;
    spec.n_analytes = 5;
    spec.missing_rate = 0.15;
    spec.samples_per_cell = 2;
    spec.seed = 99;
    SynthResult res = generate_panel(spec);
    res.panel.analyte_info[2].kept = false; // a filtered column must not be written

    wstest::TempDir dir;
    save_panel(res.panel, dir.file("panel.csv"), dir.file("panel_meta.json"));
    ZipYearPanel p = load_panel(dir.file("panel.csv"), dir.file("panel_meta.json"));

    const ZipYearPanel& ref = res.panel;
    CHECK(p.zip_ids == ref.zip_ids);
    CHECK(p.year_values == ref.year_values);
    CHECK(p.zip_idx == ref.zip_idx);
    CHECK(p.year_idx == ref.year_idx);
    CHECK(p.deaths == ref.deaths);
    CHECK(p.censored == ref.censored);
    CHECK(p.population == ref.population);
    CHECK(p.median_income == ref.median_income);
    CHECK(p.age_u5 == ref.age_u5);
    CHECK(p.age_65p == ref.age_65p);
    CHECK(p.groundwater == ref.groundwater);
    CHECK(p.has_age_adjusted == ref.has_age_adjusted);
    CHECK(p.age_adjusted_rate == ref.age_adjusted_rate);

    REQUIRE(p.analyte_info.size() == 4);
    CHECK(p.analyte_index("analyte_03") == -1);
    for (std::size_t j = 0; j < p.analyte_info.size(); ++j) {
        const AnalyteInfo& got = p.analyte_info[j];
        int rj = ref.analyte_index(got.name);
        REQUIRE(rj >= 0);
        const AnalyteInfo& want = ref.analyte_info[static_cast<std::size_t>(rj)];
        CHECK(got.chem_class == want.chem_class);
        CHECK(got.n_nonmissing == want.n_nonmissing);
        CHECK(same_num(got.mean, want.mean));
        CHECK(same_num(got.sd, want.sd));
        CHECK(same_num(got.missing_pct, want.missing_pct));
        CHECK(same_matrix(p.analytes.col(static_cast<Eigen::Index>(j)), ref.analytes.col(rj)));
    }
}

TEST_CASE("panel loading rejects bad metadata") {
    SynthSpec spec;
    spec.n_zips = 6;
    spec.n_years = 3;
    spec.n_analytes = 2;
    spec.samples_per_cell = 1;
    spec.seed = 5;
    SynthResult res = generate_panel(spec);

    wstest::TempDir dir;
    save_panel(res.panel, dir.file("panel.csv"), dir.file("panel_meta.json"));

    CHECK_THROWS_AS(load_panel(dir.file("panel.csv"), dir.file("nope.json")), IoError);

    wstest::write_file(dir.file("broken.json"), "{");
    CHECK_THROWS_AS(load_panel(dir.file("panel.csv"), dir.file("broken.json")), ParseError);

    wstest::write_file(dir.file("empty.json"), "{}");
    CHECK_THROWS_AS(load_panel(dir.file("panel.csv"), dir.file("empty.json")), ParseError);

    // Same metadata against a shorter table: the row count gate fires first.
    SynthSpec spec2 = spec;
    spec2.n_years = 2;
    SynthResult res2 = generate_panel(spec2);
    save_panel(res2.panel, dir.file("panel2.csv"), dir.file("panel_meta2.json"));
    CHECK_THROWS_AS(load_panel(dir.file("panel2.csv"), dir.file("panel_meta.json")), ParseError);
}

TEST_CASE("missing upstream outputs are dependency errors and land in the report") {
    wstest::TempDir dir;
    RunConfig cfg;
    cfg.out_dir = dir.file("out");
    cfg.threads = 1;

    const std::string want = "stage 'screen' requires output of stage 'build-panel' (missing " +
                             cfg.out_dir + "/panel.csv)";
    CHECK_THROWS_WITH_AS(run_pipeline(cfg, {"screen"}), want.c_str(), DependencyError);

    json j = read_json(cfg.out_dir + "/report.json");
    CHECK(j["stages"]["screen"]["status"] == "failed");
    CHECK(j["stages"]["screen"]["error"].get<std::string>().find("requires output") !=
          std::string::npos);

    CHECK_THROWS_AS(run_pipeline(cfg, {"build-panel"}), DependencyError);
}

TEST_CASE("stage list and config are validated up front") {
    wstest::TempDir dir;
    RunConfig cfg;
    cfg.out_dir = dir.file("out");
    cfg.threads = 1;

    CHECK_THROWS_WITH_AS(run_pipeline(cfg, {"screen", "bogus"}), "unknown stage: bogus",
                         ConfigError);
    CHECK(!std::filesystem::exists(cfg.out_dir + "/report.json")); // rejected before any stage ran

    cfg.quantiles = 1;
    std::filesystem::create_directories(cfg.out_dir);
    CHECK_THROWS_WITH_AS(run_pipeline(cfg, {"report"}), "quantiles must be at least 2",
                         ConfigError);
    json j = read_json(cfg.out_dir + "/report.json");
    CHECK(j["stages"]["report"]["status"] == "failed");
}

TEST_CASE("a full run writes every stage product and tracks staleness") {
    wstest::TempDir dir;
    RunConfig cfg;
    cfg.out_dir = dir.file("out");
    cfg.threads = 1;
    cfg.seed = 7;
    cfg.synth_zips = 12;
    cfg.synth_years = 6;
    cfg.synth_analytes = 4;
    cfg.synth_beta_index = 0;
    cfg.synth_beta_value = 0.1;
    cfg.gam_knots = 6;
    cfg.lambda_count = 8;
    cfg.gam_grid_points = 50;
    cfg.doseresponse_analytes = "analyte_01";

    run_pipeline(cfg, {"synth", "build-panel", "screen", "dlm", "mixtures", "doseresponse",
                       "report"});

    for (const char* f : {"panel.csv", "panel_meta.json", "panel_summary.csv",
                          "screen_results.csv", "attribution.csv", "dlm_results.csv",
                          "correlations.csv", "network_edges.csv", "mds_coords.csv",
                          "mixtures.json", "mixture_results.csv", "doseresponse_analyte_01.csv",
                          "density_analyte_01.csv", "report.json", "run_config.cfg"}) {
        CHECK(std::filesystem::exists(cfg.out_dir + "/" + f));
    }
    CHECK(std::filesystem::exists(cfg.out_dir + "/synthetic/truth.json"));

    json j = read_json(cfg.out_dir + "/report.json");
    for (const char* s : {"synth", "build-panel", "screen", "dlm", "mixtures", "doseresponse",
                          "report"}) {
        CHECK(j["stages"][s]["status"] == "ok");
    }
    CHECK(j["stages"]["synth"]["outputs"].contains("synthetic/samples.csv"));
    CHECK(j["stages"]["build-panel"]["n_analytes_kept"] == 4);
    CHECK(j["stages"]["screen"]["n_analytes"] == 4);
    CHECK(j["stages"]["dlm"]["n_fit"] == 4);
    CHECK(j["stages"]["doseresponse"]["n_fit"] == 1);
    // Built-in mixture lists name real chemicals absent from a synthetic panel.
    CHECK(j["stages"]["mixtures"]["n_mixtures_fit"] == 0);
    CHECK(j["stages"]["mixtures"]["n_mixtures_failed"] == 5);
    CHECK(j["config"]["out_dir"] == cfg.out_dir);

    CsvTable screen = CsvTable::read_file(cfg.out_dir + "/screen_results.csv");
    CHECK(screen.rows() == 4);

    // The echoed config re-parses to the run's exact configuration.
    RunConfig echoed = parse_config_file(cfg.out_dir + "/run_config.cfg");
    CHECK(config_to_kv(echoed) == config_to_kv(cfg));

    // Broken mixtures files fail the stage and the failure is recorded.
    RunConfig bad = cfg;
    bad.mixtures_file = dir.file("mix_broken.json");
    wstest::write_file(bad.mixtures_file, "{ not json");
    CHECK_THROWS_AS(run_pipeline(bad, {"mixtures"}), ParseError);
    j = read_json(cfg.out_dir + "/report.json");
    CHECK(j["stages"]["mixtures"]["status"] == "failed");
    CHECK(j["stages"]["mixtures"]["error"].get<std::string>().find("invalid JSON") !=
          std::string::npos);

    wstest::write_file(bad.mixtures_file, "{\"nope\": 1}\n");
    CHECK_THROWS_WITH_AS(run_pipeline(bad, {"mixtures"}),
                         "mixtures file must contain a 'mixtures' array", ConfigError);

    // A valid custom mixture over panel analytes fits and restores the stage.
    RunConfig custom = cfg;
    custom.mixtures_file = dir.file("mix_ok.json");
    wstest::write_file(custom.mixtures_file,
                       "{\"mixtures\": [{\"name\": \"pair\","
                       " \"analytes\": [\"analyte_01\", \"analyte_02\"]}]}\n");
    run_pipeline(custom, {"mixtures"});
    json mix = read_json(cfg.out_dir + "/mixtures.json");
    REQUIRE(mix["mixtures"].size() == 1);
    CHECK(mix["mixtures"][0]["name"] == "pair");
    CHECK(mix["mixtures"][0]["used"].size() == 2);
    CHECK(mix["mixtures"][0].contains("psi"));
    j = read_json(cfg.out_dir + "/report.json");
    CHECK(j["stages"]["mixtures"]["status"] == "ok");
    CHECK(j["stages"]["mixtures"]["n_mixtures_fit"] == 1);

    // Rerunning an upstream stage stamps every transitive dependent stale.
    run_pipeline(cfg, {"synth"});
    j = read_json(cfg.out_dir + "/report.json");
    CHECK(j["stages"]["synth"]["status"] == "ok");
    for (const char* s : {"build-panel", "screen", "dlm", "mixtures", "doseresponse"}) {
        CHECK(j["stages"][s]["status"] == "stale");
    }
    CHECK(j["stages"]["report"]["status"] == "ok");
}

} // TEST_SUITE
