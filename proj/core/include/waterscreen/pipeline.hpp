#pragma once

#include <string>
#include <utility>
#include <vector>

#include "waterscreen/panel.hpp"

namespace waterscreen {

// Flat key=value configuration; flags mirror the same keys and win over the
// file. Unknown keys are configuration errors.
struct RunConfig {
    std::string samples;
    std::string lods;
    std::string crosswalk;
    std::string sources;
    std::string demographics;
    std::string deaths;
    std::string classes;
    std::string mcl;
    std::string out_dir = "out";

    int year_min = 2012;
    int year_max = 2022;
    bool drop_censored = false;

    double missing_threshold = 0.5;
    double nzv_freq_ratio = 19.0;
    double nzv_unique_pct = 0.1024;

    double bh_alpha = 0.05;
    double ladder_alpha = 0.05;
    bool clip_negative = true;

    double network_threshold = 0.3;
    int quantiles = 4;
    int year_spline_df = 4;
    bool qgcomp_clustered = true;
    std::string mixtures_file;

    int n_lags = 2;
    int n_leads = 1;

    int gam_knots = 20;
    int gam_degree = 3;
    double gam_lambda = -1.0;  // < 0 = GCV selection
    double lambda_min = 1e-4;
    double lambda_max = 1e8;
    int lambda_count = 40;
    int gam_grid_points = 200;
    std::string doseresponse_analytes;  // comma-separated; empty = retained set

    long long seed = 1;
    int threads = 0;  // 0 = WATERSCREEN_THREADS or 1

    int synth_zips = 150;
    int synth_years = 11;
    int synth_analytes = 20;
    int synth_beta_index = -1;  // 0-based analyte receiving the planted effect
    double synth_beta_value = 0.0;
    double synth_missing_rate = 0.0;
    int synth_censor_threshold = 0;
};

RunConfig parse_config_file(const std::string& path);
void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::pair<std::string, std::string>> config_to_kv(const RunConfig& cfg);
void write_config_echo(const RunConfig& cfg, const std::string& path);
int resolve_threads(const RunConfig& cfg);

void save_panel(const ZipYearPanel& panel, const std::string& csv_path,
                const std::string& meta_path);
ZipYearPanel load_panel(const std::string& csv_path, const std::string& meta_path);

void stage_synth(const RunConfig& cfg);
void stage_build_panel(const RunConfig& cfg);
void stage_screen(const RunConfig& cfg);
void stage_dlm(const RunConfig& cfg);
void stage_mixtures(const RunConfig& cfg);
void stage_doseresponse(const RunConfig& cfg);
void stage_report(const RunConfig& cfg);

// Runs the requested stages in canonical order (synth, build-panel, screen,
// dlm, mixtures, doseresponse, report). A stage failure marks its report
// entry failed, stamps dependents stale, and rethrows.
void run_pipeline(const RunConfig& cfg, const std::vector<std::string>& stages);

} // namespace waterscreen
