#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

namespace waterscreen {

struct DemeanOptions {
    double tol = 1e-10;         // sup-norm of per-sweep changes
    int max_sweeps = 10000;
    double residual_tol = 1e-8; // verified weighted group means at exit
};

// In-place alternating-projections weighted demeaning over one or two
// factors (empty vector = factor absent). Returns the sweep count.
// Throws NumericError carrying the last sweep delta on non-convergence.
int demean(Eigen::MatrixXd& cols, const std::vector<int>& factor_a,
           const std::vector<int>& factor_b, const Eigen::VectorXd& weights,
           const DemeanOptions& opt = {});

// One Poisson FE regression: outcome, offset, exposure block, covariate
// block, two absorbed factors, cluster assignment. Rows with NaN anywhere in
// the used columns are dropped inside the fit.
struct RegressionSpec {
    Eigen::VectorXd y;
    Eigen::VectorXd offset;   // empty = zeros
    Eigen::MatrixXd exposures;
    std::vector<std::string> exposure_names;
    Eigen::MatrixXd covariates; // may have 0 columns
    std::vector<std::string> covariate_names;
    std::vector<int> fe_a; // zip codes; empty = absent
    std::vector<int> fe_b; // year codes; empty = absent
    std::vector<int> cluster; // empty = every row its own cluster
    Eigen::VectorXd prior_weights; // empty = ones
};

struct FitOptions {
    double tol = 1e-9;   // |d(deviance)| / (|deviance| + 0.1)
    int max_iter = 100;
    bool df_correction = false; // G/(G-1) on the sandwich meat
    DemeanOptions demean;
    // Relative residual norm below which a column counts as absorbed by the
    // fixed effects. Demeaning stops at its own tolerance, so exactly
    // absorbed columns retain residuals of that order; the detection cut
    // sits two decades above it.
    double collinear_tol = 1e-8; // absorbed-column detection
};

struct FitResult {
    std::vector<std::string> names; // exposures, then covariates (+ intercept)
    Eigen::VectorXd coef;           // NaN for dropped covariates
    std::vector<int> kept;          // term indices present in vcov
    Eigen::MatrixXd vcov;           // kept x kept, cluster-robust
    Eigen::MatrixXd vcov_model;     // kept x kept, inverse Fisher information

    double deviance = 0.0;
    int n_obs = 0;
    int iterations = 0;
    bool converged = false;
    int dropped_fe_a = 0;
    int dropped_fe_b = 0;
    int dropped_covariates = 0;
    int n_clusters = 0;

    std::vector<int> used_rows; // indices into the caller's rows
    Eigen::VectorXd fitted;     // lambda over used rows
    Eigen::VectorXd eta;        // linear predictor incl offset

    // Converged internals, kept so the sandwich can be re-derived and so
    // downstream modules can form quadratic-form variances.
    Eigen::MatrixXd design_demeaned; // kept columns, final weights
    Eigen::VectorXd work_weights;    // prior * lambda
    Eigen::VectorXd resid;           // y - lambda
    Eigen::MatrixXd bread_inv;       // (X'WX)^-1
    std::vector<int> cluster_used;   // recoded cluster per used row

    int kept_pos(int term) const {
        for (std::size_t i = 0; i < kept.size(); ++i)
            if (kept[i] == term) return static_cast<int>(i);
        return -1;
    }
    double se(int term) const {
        int p = kept_pos(term);
        return p < 0 ? std::nan("") : std::sqrt(vcov(p, p));
    }
    double se_model(int term) const {
        int p = kept_pos(term);
        return p < 0 ? std::nan("") : std::sqrt(vcov_model(p, p));
    }
    int term_index(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return static_cast<int>(i);
        return -1;
    }
};

FitResult fit_poisson_fe(const RegressionSpec& spec, const FitOptions& opt = {});

// Sandwich over the fit's stored demeaned design with an arbitrary cluster
// assignment (length = used rows). Empty = per-row clusters (HC0).
Eigen::MatrixXd cluster_vcov(const FitResult& fit, const std::vector<int>& cluster,
                             bool df_correction = false);

struct RateIncrease {
    double pct = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// (exp(beta) - 1) * 100 with normal-theory CI.
RateIncrease rate_increase(double beta, double se);

double poisson_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                        const Eigen::VectorXd& prior_weights);

} // namespace waterscreen
