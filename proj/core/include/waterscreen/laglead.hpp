#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "waterscreen/feglm.hpp"
#include "waterscreen/panel.hpp"

namespace waterscreen {

// Lags address calendar years, not adjacent panel positions, so a gap year
// drops the rows that need it rather than shifting them.
struct LagDesign {
    std::vector<std::size_t> rows;  // panel rows serving as outcome year t
    Eigen::MatrixXd exposures;      // columns lag0..lagL then lead1..leadJ
    std::vector<std::string> exposure_names;
    int n_lags = 0;
    int n_leads = 0;
    int n_usable_years = 0;
};

LagDesign build_lag_design(const ZipYearPanel& panel, int analyte_col, int n_lags = 2,
                           int n_leads = 1);

struct DlmResult {
    std::string analyte;
    std::string chem_class;
    FitResult fit;
    std::vector<double> coef;  // aligned with exposure_names
    std::vector<double> se;
    double cum = 0.0;
    double cum_se = 0.0;
    double cum_lo = 0.0;
    double cum_hi = 0.0;
    double lead = 0.0;
    double lead_se = 0.0;
    double lead_lo = 0.0;
    double lead_hi = 0.0;
    RateIncrease cum_pct;
    std::size_t n_obs = 0;
    int n_usable_years = 0;
    // Ladder verdicts need the primary-fit sign, which this module does not
    // know; callers fill them. -1 = not assessed.
    int pass_m5 = -1;
    int pass_m6 = -1;
};

DlmResult fit_dlm(const ZipYearPanel& panel, int analyte_col, const LagDesign& design,
                  const FitOptions& opts = {});

DlmResult run_dlm(const ZipYearPanel& panel, const std::string& analyte,
                  const FitOptions& opts = {}, int n_lags = 2, int n_leads = 1);

void write_dlm_results(const std::string& path, const std::vector<DlmResult>& rows);

} // namespace waterscreen
