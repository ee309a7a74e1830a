#include "waterscreen/splinebasis.hpp"

#include <algorithm>
#include <cmath>

#include "waterscreen/errors.hpp"
#include "waterscreen/stats.hpp"

namespace waterscreen {

BsplineBasis BsplineBasis::from_quantiles(const std::vector<double>& x, int k_interior,
                                          int degree) {
    if (degree < 1) throw ConfigError("spline degree must be at least 1");
    if (k_interior < 1) throw ConfigError("need at least 1 interior knot");
    std::vector<double> present;
    for (double v : x)
        if (!std::isnan(v)) present.push_back(v);
    if (present.size() < 2) throw ValidationError("spline basis needs at least 2 values");
    double lo = *std::min_element(present.begin(), present.end());
    double hi = *std::max_element(present.begin(), present.end());
    if (!(hi > lo)) throw ValidationError("degenerate exposure: all values identical");

    std::vector<double> interior;
    for (int j = 1; j <= k_interior; ++j)
        interior.push_back(
            quantile_type7(present, static_cast<double>(j) / static_cast<double>(k_interior + 1)));
    std::sort(interior.begin(), interior.end());
    interior.erase(std::unique(interior.begin(), interior.end()), interior.end());
    // Knots that collide with a boundary would produce zero-width end spans.
    interior.erase(std::remove_if(interior.begin(), interior.end(),
                                  [&](double t) { return t <= lo || t >= hi; }),
                   interior.end());

    BsplineBasis b;
    b.degree = degree;
    for (int j = 0; j <= degree; ++j) b.knots.push_back(lo);
    for (double t : interior) b.knots.push_back(t);
    for (int j = 0; j <= degree; ++j) b.knots.push_back(hi);
    return b;
}

namespace {

// Largest span index i with knots[i] <= t < knots[i+1]; t at the upper
// boundary lands in the last nonempty span.
int find_span(const std::vector<double>& knots, int degree, int n_basis, double t) {
    if (t >= knots[static_cast<std::size_t>(n_basis)]) return n_basis - 1;
    if (t <= knots[static_cast<std::size_t>(degree)]) return degree;
    auto it = std::upper_bound(knots.begin() + degree, knots.begin() + n_basis + 1, t);
    return static_cast<int>(it - knots.begin()) - 1;
}

// Nonzero basis values of the given degree at t, spans i-degree..i.
void basis_funs(const std::vector<double>& knots, int degree, int span, double t,
                std::vector<double>& N) {
    N.assign(static_cast<std::size_t>(degree) + 1, 0.0);
    N[0] = 1.0;
    std::vector<double> left(static_cast<std::size_t>(degree) + 1);
    std::vector<double> right(static_cast<std::size_t>(degree) + 1);
    for (int j = 1; j <= degree; ++j) {
        left[static_cast<std::size_t>(j)] = t - knots[static_cast<std::size_t>(span + 1 - j)];
        right[static_cast<std::size_t>(j)] = knots[static_cast<std::size_t>(span + j)] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            double denom = right[static_cast<std::size_t>(r + 1)] +
                           left[static_cast<std::size_t>(j - r)];
            double temp = denom != 0.0 ? N[static_cast<std::size_t>(r)] / denom : 0.0;
            N[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
            saved = left[static_cast<std::size_t>(j - r)] * temp;
        }
        N[static_cast<std::size_t>(j)] = saved;
    }
}

} // namespace

Eigen::MatrixXd BsplineBasis::evaluate(const std::vector<double>& x) const {
    const int nb = n_basis();
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()), nb);
    std::vector<double> N;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double t = std::clamp(x[i], lo(), hi());
        int span = find_span(knots, degree, nb, t);
        basis_funs(knots, degree, span, t, N);
        for (int j = 0; j <= degree; ++j)
            B(static_cast<Eigen::Index>(i), span - degree + j) = N[static_cast<std::size_t>(j)];
    }
    return B;
}

Eigen::MatrixXd BsplineBasis::derivative(const std::vector<double>& x) const {
    const int nb = n_basis();
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()), nb);
    if (degree == 0) return D;
    std::vector<double> N;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double t = std::clamp(x[i], lo(), hi());
        int span = find_span(knots, degree, nb, t);
        // Degree-1 basis over the same knots; nonzero entries sit at
        // span-(degree-1)..span.
        basis_funs(knots, degree - 1, span, t, N);
        auto low_val = [&](int j) {
            int off = j - (span - degree + 1);
            return (off >= 0 && off <= degree - 1) ? N[static_cast<std::size_t>(off)] : 0.0;
        };
        for (int j = span - degree; j <= span; ++j) {
            double a = 0.0, b = 0.0;
            double da = knots[static_cast<std::size_t>(j + degree)] -
                        knots[static_cast<std::size_t>(j)];
            double db = knots[static_cast<std::size_t>(j + degree + 1)] -
                        knots[static_cast<std::size_t>(j + 1)];
            if (da != 0.0) a = low_val(j) / da;
            if (db != 0.0) b = low_val(j + 1) / db;
            D(static_cast<Eigen::Index>(i), j) = static_cast<double>(degree) * (a - b);
        }
    }
    return D;
}

std::vector<double> BsplineBasis::greville() const {
    const int nb = n_basis();
    std::vector<double> g(static_cast<std::size_t>(nb));
    for (int j = 0; j < nb; ++j) {
        double s = 0.0;
        for (int d = 1; d <= degree; ++d) s += knots[static_cast<std::size_t>(j + d)];
        g[static_cast<std::size_t>(j)] = s / static_cast<double>(degree);
    }
    return g;
}

Eigen::MatrixXd second_divided_difference_matrix(const std::vector<double>& abscissae) {
    const int n = static_cast<int>(abscissae.size());
    if (n < 3) return Eigen::MatrixXd::Zero(0, std::max(n, 0));
    for (int j = 1; j < n; ++j)
        if (!(abscissae[static_cast<std::size_t>(j)] > abscissae[static_cast<std::size_t>(j - 1)]))
            throw NumericError("coefficient abscissae must be strictly increasing");

    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n - 2, n);
    for (int j = 0; j + 2 < n; ++j) {
        double x0 = abscissae[static_cast<std::size_t>(j)];
        double x1 = abscissae[static_cast<std::size_t>(j + 1)];
        double x2 = abscissae[static_cast<std::size_t>(j + 2)];
        D(j, j) = 1.0 / ((x1 - x0) * (x2 - x0));
        D(j, j + 1) = -1.0 / ((x1 - x0) * (x2 - x0)) - 1.0 / ((x2 - x1) * (x2 - x0));
        D(j, j + 2) = 1.0 / ((x2 - x1) * (x2 - x0));
    }
    return D;
}

} // namespace waterscreen
