#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "waterscreen/feglm.hpp"
#include "waterscreen/panel.hpp"
#include "waterscreen/splinebasis.hpp"

namespace waterscreen {

struct GamConfig {
    int k_interior = 20;
    int degree = 3;
    double lambda = -1.0;             // < 0 selects by GCV
    std::vector<double> lambda_grid;  // empty = 40 log-spaced points, 1e-4..1e8
    double tol = 1e-9;                // penalized-deviance relative change
    int max_iter = 200;
    DemeanOptions demean;
    int grid_points = 200;
    int density_bins = 40;
};

struct GamFit {
    BsplineBasis basis;
    Eigen::VectorXd coef;  // spline coefficients, full basis space
    Eigen::VectorXd covariate_coef;
    std::vector<std::string> covariate_names;
    // Input covariate columns that survived the absorption check, in order;
    // covariate_coef aligns with this, not with the caller's matrix.
    std::vector<int> covariate_kept;
    double lambda = 0.0;
    double edf = 0.0;
    double deviance = 0.0;
    double penalized_deviance = 0.0;
    double gcv = 0.0;
    int iterations = 0;
    bool converged = false;
    // With fixed effects absorbed the curve level is not identified; the
    // mean of f over the fitted rows is normalized to zero and the shift
    // recorded here.
    bool fe_absorbed = false;
    double level_shift = 0.0;
    int n_obs = 0;
    bool endpoint_selected = false;
};

GamFit fit_pspline(const Eigen::VectorXd& y, const std::vector<double>& exposure,
                   const Eigen::MatrixXd& covariates, const Eigen::VectorXd& offset,
                   const std::vector<int>& fe_a, const std::vector<int>& fe_b, double lambda,
                   const GamConfig& cfg = {});

// GCV minimizer over the grid; exact ties resolve to the smaller lambda.
// Grid points whose fit fails numerically are skipped; gcv_path records one
// value per grid point (NaN where skipped).
double select_lambda(const Eigen::VectorXd& y, const std::vector<double>& exposure,
                     const Eigen::MatrixXd& covariates, const Eigen::VectorXd& offset,
                     const std::vector<int>& fe_a, const std::vector<int>& fe_b,
                     const GamConfig& cfg = {}, std::vector<double>* gcv_path = nullptr,
                     bool* endpoint_selected = nullptr);

// f on the link scale at the given exposure values.
std::vector<double> spline_curve(const GamFit& fit, const std::vector<double>& grid);

// d/dA of exp(f(A)) with the partialled covariate contribution at zero:
// exp(f) * f', both factors analytic.
std::vector<double> derivative_curve(const GamFit& fit, const std::vector<double>& grid);

struct DoseResponseCurve {
    std::string analyte;
    std::string chem_class;
    GamFit fit;
    std::vector<double> grid;
    std::vector<double> link;
    std::vector<double> response;
    std::vector<double> deriv;
    std::vector<double> exposure;  // observed values, for the density table
    double p99 = 0.0;
};

DoseResponseCurve run_doseresponse(const ZipYearPanel& panel, const std::string& analyte,
                                   const GamConfig& cfg = {});

void write_doseresponse(const std::string& path, const DoseResponseCurve& curve);
void write_density(const std::string& path, const DoseResponseCurve& curve, int bins = 40);

} // namespace waterscreen
