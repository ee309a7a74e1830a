#pragma once

#include <array>
#include <string>
#include <vector>

#include "waterscreen/feglm.hpp"
#include "waterscreen/panel.hpp"

namespace waterscreen {

struct ScreenConfig {
    double alpha = 0.05;         // BH cut for entering the ladder
    double ladder_alpha = 0.05;  // unadjusted p threshold inside M1..M4
    bool clip_negative = true;   // attribution point-estimate clipping
    int n_threads = 1;
    FitOptions fit;
};

// state: 1 pass, 0 fail, -1 not assessed.
struct LadderFlag {
    int state = -1;
    std::string reason;
};

struct ScreenRow {
    std::string analyte;
    std::string chem_class;
    double coefficient = 0.0;
    double std_err = 0.0;
    RateIncrease increase;
    double p_value = 0.0;
    double bh_p = 0.0;
    std::array<LadderFlag, 6> m;
    std::string status;  // not_significant | excluded_after_checks | retained | fit_failed
    std::string fit_error;
    std::size_t n_obs = 0;
    bool converged = false;
};

// Rows where the analyte is observed; outcome and covariates are complete by
// construction of the panel.
std::vector<std::size_t> analyte_rows(const ZipYearPanel& panel, int analyte_col);

/// The primary specification: the analyte as sole exposure, the shared
// covariate block, zip and year fixed effects, log-population offset, zip
// clustering. Exposed so the ladder variants can be checked against it.
RegressionSpec primary_spec(const ZipYearPanel& panel, int analyte_col,
                            std::vector<std::size_t>* rows_out = nullptr);

// Variant specs for the first four rungs. M1 swaps the outcome for expected
// counts from the age-adjusted rate and drops the age shares; M2 strips all
// covariates; M3 drops groundwater; M4 keeps only the age shares.
RegressionSpec ladder_spec(const ZipYearPanel& panel, int analyte_col, int which,
                           std::vector<std::size_t>* rows_out = nullptr);

std::vector<double> bh_adjust(const std::vector<double>& pvalues);

std::array<LadderFlag, 6> robustness_ladder(const ZipYearPanel& panel, int analyte_col,
                                            double primary_coef, const ScreenConfig& cfg);

std::vector<ScreenRow> run_screen(const ZipYearPanel& panel, const ScreenConfig& cfg);

struct AttributionResult {
    std::string analyte;
    double total = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> panel_rows;
    std::vector<double> row_deaths;
};

// AF per row = 1 - exp(-beta * A). The point estimate clips rows with
// sign(beta * A) <= 0 when clip_negative is set; the CI endpoints always map
// through the raw formula so a null effect brackets zero.
AttributionResult attributable_mortality(const ZipYearPanel& panel, int analyte_col,
                                         const FitResult& fit,
                                         const std::vector<std::size_t>& rows,
                                         bool clip_negative = true);

AttributionResult run_attribution(const ZipYearPanel& panel, const std::string& analyte,
                                  const ScreenConfig& cfg);

void write_screen_results(const std::string& path, const std::vector<ScreenRow>& rows);
void write_attribution(const std::string& path, const ZipYearPanel& panel,
                       const std::vector<AttributionResult>& results);

} // namespace waterscreen
