#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "waterscreen/ingest.hpp"
#include "waterscreen/panel.hpp"

namespace waterscreen {

// Planted-truth panel generator. The generated concentrations flow through
// the real aggregation and standardization code, and the outcome is then
// simulated from the standardized exposures, so the planted coefficients
// hold exactly on the panel the pipeline reconstructs.
struct SynthSpec {
    int n_zips = 150;
    int n_years = 11;
    int n_analytes = 20;
    int start_year = 2012;
    std::vector<double> beta;  // per analyte in SD units; empty = all zero
    double gamma_income = 2e-6;        // per dollar of median income
    double gamma_groundwater = 0.03;
    std::array<double, 5> gamma_age{0.0, 0.0, 0.0, 0.0, 0.004}; // per share percentage point
    double fe_zip_sd = 0.25;
    double fe_year_sd = 0.08;
    double base_rate = 0.008;          // deaths per person-year at reference
    double exposure_rho = 0.0;         // shared-factor loading within blocks
    int corr_block = 1;                // analytes per correlated block
    double missing_rate = 0.0;         // P(analyte-year cell unsampled)
    int censor_threshold = 0;          // y < threshold -> censored to 0
    int samples_per_cell = 3;
    double sample_noise_sd = 0.1;      // log-scale within-cell sample noise
    std::uint64_t seed = 1;
};

struct SynthTruth {
    std::vector<double> beta;
    double gamma_income = 0.0;
    double gamma_groundwater = 0.0;
    std::array<double, 5> gamma_age{};
    std::vector<double> alpha; // per zip, generation order = sorted order
    std::vector<double> delta; // per year
    double base_rate = 0.0;
};

struct SynthResult {
    RawData raw;        // ingest-schema records, deaths filled post-simulation
    ZipYearPanel panel; // prepared (filtered + standardized), outcomes attached
    SynthTruth truth;
    IngestReport ingest_report;
};

SynthResult generate_panel(const SynthSpec& spec);

// Serializes the generated records to the CSV schemas the ingest module
// consumes. All continuous values were already rounded through the output
// format at generation time, so re-ingesting reproduces the panel exactly.
void write_raw_csvs(const RawData& raw, const std::string& dir);
void write_truth_json(const SynthSpec& spec, const SynthTruth& truth, const std::string& path);

/// Dense brute-force reference: Newton-Raphson on the fully dummy-expanded
// Poisson likelihood with an explicit sandwich. O(p^3) per step.
struct OracleFit {
    Eigen::VectorXd coef;
    Eigen::MatrixXd vcov;      // cluster-robust
    Eigen::MatrixXd bread_inv; // inverse Hessian at the optimum
    double deviance = 0.0;
    int iterations = 0;
    bool converged = false;
};

OracleFit oracle_fit_dense(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& offset, const std::vector<int>& cluster,
                           double tol = 1e-9, int max_iter = 100);

// [M | intercept | factor-A dummies minus first | factor-B dummies minus
// first]; the reference-level drops keep the dense design full rank.
Eigen::MatrixXd dense_fe_design(const Eigen::MatrixXd& M, const std::vector<int>& factor_a,
                                const std::vector<int>& factor_b);

} // namespace waterscreen
