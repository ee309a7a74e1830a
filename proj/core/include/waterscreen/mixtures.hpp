#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "waterscreen/feglm.hpp"
#include "waterscreen/panel.hpp"

namespace waterscreen {

struct CorrelationMatrix {
    std::vector<std::string> names;
    Eigen::MatrixXd r;  // NaN where fewer than 3 complete pairs
    Eigen::MatrixXi n;  // complete-pair counts
};

CorrelationMatrix correlation_matrix(const ZipYearPanel& panel,
                                     const std::vector<std::string>& analytes = {});

struct NetworkEdge {
    int i = 0;
    int j = 0;
    double r = 0.0;
};

// Undirected, |r| strictly above the threshold, i < j.
std::vector<NetworkEdge> correlation_network(const CorrelationMatrix& corr,
                                             double threshold = 0.3);

// distance = 1 - |r|; missing entries imputed with the largest observed
// dissimilarity, counted in n_imputed.
Eigen::MatrixXd dissimilarity_from_correlation(const CorrelationMatrix& corr,
                                               int* n_imputed = nullptr);

struct MdsResult {
    Eigen::MatrixXd coords;  // n x dims
    int dims = 0;
    double eigen1 = 0.0;
    double eigen2 = 0.0;
    std::vector<std::string> warnings;
};

MdsResult mds_embed(const Eigen::MatrixXd& dissimilarity);

// Scores 0..q-1 by counting breakpoints strictly below the value; ties fall
// in the lower bin; NaN maps to -1.
std::vector<int> quantize(const std::vector<double>& column, int q = 4,
                          bool* constant_warning = nullptr);

// Natural cubic spline of df columns, no intercept column, interior knots at
// quantiles. The curvature is linear beyond the boundary knots.
Eigen::MatrixXd natural_spline_basis(const std::vector<double>& x, int df = 4);

struct MixtureSpec {
    std::string name;
    std::vector<std::string> analytes;
};

struct QgcompConfig {
    int q = 4;
    int year_spline_df = 4;
    bool clustered = true;
    FitOptions fit;
};

struct MixtureResult {
    std::string name;
    std::vector<std::string> analytes_used;
    std::vector<std::string> analytes_missing;
    double psi = 0.0;
    double std_err = 0.0;
    double p_value = 0.0;
    RateIncrease pct;
    std::vector<double> curve;  // exp(psi * s) for s = 0..q-1, relative to s=0
    std::size_t n_obs = 0;
    bool converged = false;
};

MixtureResult qgcomp_fit(const MixtureSpec& spec, const ZipYearPanel& panel,
                         const QgcompConfig& cfg = {});

// The mixture definitions shipped as defaults. The inorganic-ion mixture
// appears twice because the methods list six components while the salinity
// figure uses three; both variants are provided under distinct keys.
std::vector<MixtureSpec> builtin_mixtures();

void write_correlations(const std::string& path, const CorrelationMatrix& corr);
void write_network_edges(const std::string& path, const CorrelationMatrix& corr,
                         const std::vector<NetworkEdge>& edges);
void write_mds_coords(const std::string& path, const CorrelationMatrix& corr,
                      const MdsResult& mds, const ZipYearPanel& panel);
void write_mixture_results(const std::string& path, const std::vector<MixtureResult>& results);

} // namespace waterscreen
