#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "waterscreen/errors.hpp"
#include "waterscreen/feglm.hpp"
#include "waterscreen/panel.hpp"

namespace waterscreen {

// Covariate block shared by the screen and the lag models: median income,
// groundwater share, five age shares. Exposure columns vary by caller.
inline Eigen::MatrixXd primary_covariates(const ZipYearPanel& panel,
                                          const std::vector<std::size_t>& rows,
                                          std::vector<std::string>* names = nullptr) {
    if (names) *names = {"median_income", "groundwater", "age_under5", "age_5_14",
                         "age_15_24",     "age_25_64",   "age_65_plus"};
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 7);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t r = rows[i];
        const Eigen::Index e = static_cast<Eigen::Index>(i);
        X(e, 0) = panel.median_income[r];
        X(e, 1) = panel.groundwater[r];
        X(e, 2) = panel.age_u5[r];
        X(e, 3) = panel.age_5_14[r];
        X(e, 4) = panel.age_15_24[r];
        X(e, 5) = panel.age_25_64[r];
        X(e, 6) = panel.age_65p[r];
    }
    return X;
}

// Outcome, offset log N, zip and year fixed effects, zip clustering.
inline void fill_primary_frame(const ZipYearPanel& panel, const std::vector<std::size_t>& rows,
                               RegressionSpec& spec) {
    const std::size_t n = rows.size();
    spec.y.resize(static_cast<Eigen::Index>(n));
    spec.offset.resize(static_cast<Eigen::Index>(n));
    spec.fe_a.resize(n);
    spec.fe_b.resize(n);
    spec.cluster.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = rows[i];
        if (!(panel.population[r] > 0))
            throw ValidationError("row with nonpositive population reached the model frame");
        spec.y[static_cast<Eigen::Index>(i)] = static_cast<double>(panel.deaths[r]);
        spec.offset[static_cast<Eigen::Index>(i)] = std::log(panel.population[r]);
        spec.fe_a[i] = panel.zip_idx[r];
        spec.fe_b[i] = panel.year_idx[r];
        spec.cluster[i] = panel.zip_idx[r];
    }
}

} // namespace waterscreen
