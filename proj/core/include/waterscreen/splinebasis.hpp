#pragma once

#include <vector>

#include <Eigen/Dense>

namespace waterscreen {

// Clamped B-spline basis. Evaluation outside the boundary knots clamps the
// argument to the boundary, so rows always sum to 1.
struct BsplineBasis {
    std::vector<double> knots;  // full vector, (degree+1)-fold boundary knots
    int degree = 3;

    int n_basis() const { return static_cast<int>(knots.size()) - degree - 1; }
    double lo() const { return knots.front(); }
    double hi() const { return knots.back(); }

    // Interior knots at quantiles j/(k+1); duplicate quantiles collapse, so
    // the realized interior count can be smaller on gridded data.
    static BsplineBasis from_quantiles(const std::vector<double>& x, int k_interior,
                                       int degree = 3);

    Eigen::MatrixXd evaluate(const std::vector<double>& x) const;
    Eigen::MatrixXd derivative(const std::vector<double>& x) const;

    // Greville abscissae, the natural x-locations of the coefficients;
    // strictly increasing for a clamped vector without repeated interior
    // knots.
    std::vector<double> greville() const;
};

// Second divided differences with respect to the coefficient abscissae.
// Rows annihilate every coefficient vector affine in those abscissae, which
// is what sends the fit to a straight line as the penalty grows.
Eigen::MatrixXd second_divided_difference_matrix(const std::vector<double>& abscissae);

} // namespace waterscreen
