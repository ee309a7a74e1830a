#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "helpers.hpp"
#include "waterscreen/errors.hpp"
#include "waterscreen/mixtures.hpp"
#include "waterscreen/rng.hpp"
#include "waterscreen/stats.hpp"

using namespace waterscreen;

namespace {

const double kNan = std::numeric_limits<double>::quiet_NaN();

CorrelationMatrix hand_corr(const Eigen::MatrixXd& r) {
    CorrelationMatrix c;
    for (int i = 0; i < r.rows(); ++i) c.names.push_back("a" + std::to_string(i));
    c.r = r;
    c.n = Eigen::MatrixXi::Constant(static_cast<int>(r.rows()), static_cast<int>(r.cols()), 10);
    return c;
}

} // namespace

TEST_SUITE("mixtures") {

TEST_CASE("quantize splits 1..8 into even quarters with ties in the lower bin") {
    std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
    CHECK(quantize(x, 4) == std::vector<int>{0, 0, 1, 1, 2, 2, 3, 3});

    // scores depend on ranks only
    std::vector<double> ex(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) ex[i] = std::exp(x[i]);
    CHECK(quantize(ex, 4) == quantize(x, 4));

    std::vector<double> shuffled{8, 1, 5, 4, 2, 7, 3, 6};
    CHECK(quantize(shuffled, 4) == std::vector<int>{3, 0, 2, 1, 0, 3, 1, 2});
}

TEST_CASE("quantize maps missing to -1 and flags constant columns") {
    std::vector<double> x{1, kNan, 2, 3, kNan, 4};
    CHECK(quantize(x, 4) == std::vector<int>{0, -1, 1, 2, -1, 3});

    bool constant = false;
    std::vector<double> c{5, 5, 5, 5};
    CHECK(quantize(c, 4, &constant) == std::vector<int>{0, 0, 0, 0});
    CHECK(constant);

    constant = true;
    quantize(x, 4, &constant);
    CHECK_FALSE(constant);

    CHECK_THROWS_AS(quantize({1, 2, 3}, 4), ValidationError); // fewer values than bins
    CHECK_THROWS_AS(quantize({1, 2, 3, 4}, 1), ConfigError);
}

TEST_CASE("correlation matrix uses pairwise-complete rows") {
    ZipYearPanel p = wstest::grid_panel(6, 5, 2);
    Rng rng(42);
    for (std::size_t r = 0; r < p.n_rows(); ++r) {
        double a = rng.child(2 * r).next_normal();
        p.analytes(static_cast<Eigen::Index>(r), 0) = a;
        p.analytes(static_cast<Eigen::Index>(r), 1) = 0.8 * a + 0.6 * rng.child(2 * r + 1).next_normal();
    }
    // poke holes in both columns
    p.analytes(3, 0) = kNan;
    p.analytes(7, 1) = kNan;
    p.analytes(8, 0) = kNan;
    p.analytes(8, 1) = kNan;

    CorrelationMatrix c = correlation_matrix(p);
    REQUIRE(c.names == std::vector<std::string>{"x1", "x2"});
    CHECK(c.n(0, 0) == 28);
    CHECK(c.n(1, 1) == 28);
    CHECK(c.n(0, 1) == 27);
    CHECK(c.r(0, 0) == 1.0);

    std::vector<double> xi, xj;
    for (std::size_t r = 0; r < p.n_rows(); ++r) {
        double a = p.analytes(static_cast<Eigen::Index>(r), 0);
        double b = p.analytes(static_cast<Eigen::Index>(r), 1);
        if (!std::isnan(a) && !std::isnan(b)) {
            xi.push_back(a);
            xj.push_back(b);
        }
    }
    CHECK(c.r(0, 1) == doctest::Approx(pearson(xi, xj)).epsilon(1e-14));
    CHECK(c.r(0, 1) == c.r(1, 0));
    CHECK(c.r(0, 1) > 0.5);
}

TEST_CASE("too few overlapping rows leaves the correlation missing") {
    ZipYearPanel p = wstest::grid_panel(4, 3, 2);
    for (std::size_t r = 0; r < p.n_rows(); ++r)
        p.analytes(static_cast<Eigen::Index>(r), 0) = static_cast<double>(r);
    p.analytes(0, 1) = 1.0;
    p.analytes(1, 1) = 5.0;

    CorrelationMatrix c = correlation_matrix(p);
    CHECK(c.n(0, 1) == 2);
    CHECK(std::isnan(c.r(0, 1)));
    CHECK(c.r(1, 1) == 1.0);

    ZipYearPanel one = wstest::grid_panel(4, 3, 1);
    CHECK_THROWS_AS(correlation_matrix(one), ValidationError);
    CHECK_THROWS_AS(correlation_matrix(p, {"x1", "nope"}), ValidationError);
}

TEST_CASE("network edges need strictly more than the threshold") {
    Eigen::MatrixXd r(3, 3);
    r << 1.0, 0.3, -0.45,
         0.3, 1.0, kNan,
         -0.45, kNan, 1.0;
    CorrelationMatrix c = hand_corr(r);

    std::vector<NetworkEdge> edges = correlation_network(c, 0.3);
    REQUIRE(edges.size() == 1); // |r|=0.3 stays out, NaN stays out
    CHECK(edges[0].i == 0);
    CHECK(edges[0].j == 2);
    CHECK(edges[0].r == -0.45);

    CHECK(correlation_network(c, 0.29).size() == 2);
}

TEST_CASE("dissimilarity imputes missing cells at the largest observed distance") {
    Eigen::MatrixXd r(3, 3);
    r << 1.0, 0.9, kNan,
         0.9, 1.0, -0.2,
         kNan, -0.2, 1.0;
    int imputed = -1;
    Eigen::MatrixXd d = dissimilarity_from_correlation(hand_corr(r), &imputed);
    CHECK(imputed == 1);
    CHECK(d(0, 1) == doctest::Approx(0.1));
    CHECK(d(1, 2) == doctest::Approx(0.8));
    CHECK(d(0, 2) == doctest::Approx(0.8)); // the max observed dissimilarity
    CHECK(d(2, 0) == doctest::Approx(0.8));
    CHECK(d(0, 0) == 0.0);
}

TEST_CASE("two points embed at plus and minus half the distance") {
    Eigen::MatrixXd d(2, 2);
    d << 0.0, 0.8,
         0.8, 0.0;
    MdsResult m = mds_embed(d);
    REQUIRE(m.dims >= 1);
    CHECK(m.coords(0, 0) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(m.coords(1, 0) == doctest::Approx(-0.4).epsilon(1e-12));
    CHECK(m.eigen1 == doctest::Approx(0.32).epsilon(1e-12));
    if (m.dims > 1) {
        CHECK(std::abs(m.coords(0, 1)) < 1e-9);
        CHECK(std::abs(m.coords(1, 1)) < 1e-9);
    }
}

TEST_CASE("a planar configuration is recovered up to rigid motion") {
    // ten points on two concentric rings
    const int n = 10;
    Eigen::MatrixXd pts(n, 2);
    for (int i = 0; i < n; ++i) {
        double rad = i < 5 ? 1.0 : 2.3;
        double th = 2.0 * 3.14159265358979323846 * (i % 5) / 5.0 + (i < 5 ? 0.0 : 0.31);
        pts(i, 0) = rad * std::cos(th);
        pts(i, 1) = rad * std::sin(th);
    }
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) d(i, j) = (pts.row(i) - pts.row(j)).norm();

    MdsResult m = mds_embed(d);
    REQUIRE(m.dims == 2);
    CHECK(m.eigen1 >= m.eigen2);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double dij = (m.coords.row(i) - m.coords.row(j)).norm();
            CHECK(dij == doctest::Approx(d(i, j)).epsilon(1e-8));
        }
}

TEST_CASE("a single point embeds at the origin with a warning") {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(1, 1);
    MdsResult m = mds_embed(d);
    CHECK(m.dims == 1);
    CHECK(m.coords(0, 0) == 0.0);
    REQUIRE(m.warnings.size() == 1);
}

TEST_CASE("malformed dissimilarity inputs are rejected") {
    Eigen::MatrixXd ok = Eigen::MatrixXd::Zero(2, 2);
    ok(0, 1) = ok(1, 0) = 1.0;

    Eigen::MatrixXd rect = Eigen::MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(mds_embed(rect), ValidationError);

    Eigen::MatrixXd diag = ok;
    diag(0, 0) = 0.5;
    CHECK_THROWS_AS(mds_embed(diag), ValidationError);

    Eigen::MatrixXd asym = ok;
    asym(0, 1) = 1.1;
    CHECK_THROWS_AS(mds_embed(asym), ValidationError);

    Eigen::MatrixXd neg = ok;
    neg(0, 1) = neg(1, 0) = -0.2;
    CHECK_THROWS_AS(mds_embed(neg), ValidationError);

    Eigen::MatrixXd miss = ok;
    miss(0, 1) = miss(1, 0) = kNan;
    CHECK_THROWS_AS(mds_embed(miss), ValidationError);
}

TEST_CASE("natural spline basis matches the truncated-cube formula") {
    std::vector<double> x{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 100};
    Eigen::MatrixXd N = natural_spline_basis(x, 2); // knots 0, 5, 100
    REQUIRE(N.cols() == 2);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(N(static_cast<Eigen::Index>(i), 0) == x[i]);

    CHECK(N(0, 1) == doctest::Approx(0.0));
    CHECK(N(5, 1) == doctest::Approx(1.25));                 // v=5: 125/100
    CHECK(N(7, 1) == doctest::Approx(3.43 - 8.0 / 95.0));    // v=7
    CHECK(N(10, 1) == doctest::Approx(975.0));               // v=100
}

TEST_CASE("duplicate knots collapse the basis") {
    std::vector<double> x{1, 1, 1, 2, 2, 3};
    Eigen::MatrixXd N = natural_spline_basis(x, 4); // distinct knots 1, 1.5, 2, 3
    CHECK(N.cols() == 3);

    CHECK_THROWS_AS(natural_spline_basis({1.0, 2.0}, 0), ConfigError);
    CHECK_THROWS_AS(natural_spline_basis({1.0}, 3), ValidationError);
    CHECK_THROWS_AS(natural_spline_basis({5.0, 5.0, 5.0}, 3), ValidationError);
}

TEST_CASE("two planted quartile effects add up in the mixture index") {
    ZipYearPanel p = wstest::grid_panel(40, 8, 2);
    Rng rng(314);
    for (std::size_t r = 0; r < p.n_rows(); ++r) {
        p.analytes(static_cast<Eigen::Index>(r), 0) = rng.child(2 * r).next_normal();
        p.analytes(static_cast<Eigen::Index>(r), 1) = rng.child(2 * r + 1).next_normal();
    }

    std::vector<double> c0(p.n_rows()), c1(p.n_rows());
    for (std::size_t r = 0; r < p.n_rows(); ++r) {
        c0[r] = p.analytes(static_cast<Eigen::Index>(r), 0);
        c1[r] = p.analytes(static_cast<Eigen::Index>(r), 1);
    }
    std::vector<int> s0 = quantize(c0, 4), s1 = quantize(c1, 4);
    std::vector<double> eta(p.n_rows());
    for (std::size_t r = 0; r < p.n_rows(); ++r)
        eta[r] = std::log(p.population[r] * 0.008) + 0.02 * s0[r] + 0.03 * s1[r];
    wstest::simulate_deaths(p, eta, 2718);

    MixtureSpec spec{"pair", {"x1", "x2", "not_measured"}};
    MixtureResult res = qgcomp_fit(spec, p);
    REQUIRE(res.converged);
    CHECK(res.analytes_used == std::vector<std::string>{"x1", "x2"});
    CHECK(res.analytes_missing == std::vector<std::string>{"not_measured"});
    CHECK(res.n_obs == p.n_rows());

    // the index averages the two scores, so psi estimates the summed effect
    CHECK(std::abs(res.psi - 0.05) < 4.0 * res.std_err);
    CHECK(res.p_value == doctest::Approx(normal_p_two_sided(res.psi / res.std_err)));
    REQUIRE(res.curve.size() == 4);
    CHECK(res.curve[0] == 1.0);
    for (int s = 0; s < 4; ++s)
        CHECK(res.curve[static_cast<std::size_t>(s)] == std::exp(res.psi * s));

    // positive rescaling leaves the quantized scores, hence the fit, unchanged
    ZipYearPanel scaled = p;
    for (std::size_t r = 0; r < p.n_rows(); ++r)
        scaled.analytes(static_cast<Eigen::Index>(r), 0) *= 3.7;
    MixtureResult res2 = qgcomp_fit(spec, scaled);
    CHECK(res2.psi == res.psi);
    CHECK(res2.std_err == res.std_err);

    // unclustered variant keeps the point estimate, not the standard error
    QgcompConfig plain;
    plain.clustered = false;
    MixtureResult res3 = qgcomp_fit(spec, p, plain);
    CHECK(res3.psi == res.psi); // clustering changes the sandwich, not the path
    CHECK(res3.std_err != res.std_err);
}

TEST_CASE("mixture specs are validated against the panel") {
    ZipYearPanel p = wstest::grid_panel(4, 4, 2);
    for (std::size_t r = 0; r < p.n_rows(); ++r) {
        p.analytes(static_cast<Eigen::Index>(r), 0) = static_cast<double>(r % 7);
        p.analytes(static_cast<Eigen::Index>(r), 1) = static_cast<double>((3 * r) % 5);
    }

    CHECK_THROWS_AS(qgcomp_fit({"empty", {}}, p), ValidationError);
    CHECK_THROWS_AS(qgcomp_fit({"gone", {"zzz", "yyy"}}, p), ValidationError);
    // two named, only one present
    CHECK_THROWS_AS(qgcomp_fit({"half", {"x1", "zzz"}}, p), ValidationError);

    ZipYearPanel sparse = wstest::grid_panel(2, 2, 2);
    sparse.analytes(0, 0) = 1.0;
    sparse.analytes(0, 1) = 2.0;
    sparse.analytes(1, 0) = 3.0;
    sparse.analytes(1, 1) = 4.0;
    sparse.analytes(2, 0) = 5.0;
    sparse.analytes(2, 1) = 6.0;
    CHECK_THROWS_AS(qgcomp_fit({"thin", {"x1", "x2"}}, sparse), ValidationError);
}

TEST_CASE("the shipped mixture definitions are intact") {
    std::vector<MixtureSpec> mixes = builtin_mixtures();
    REQUIRE(mixes.size() == 5);
    CHECK(mixes[0].name == "toxic_metals");
    CHECK(mixes[0].analytes.size() == 8);
    CHECK(mixes[1].name == "industrial");
    CHECK(mixes[1].analytes == std::vector<std::string>{"Perchlorate", "Mercury", "Cyanide"});
    CHECK(mixes[2].name == "inorganic_ions_methods");
    CHECK(mixes[2].analytes.size() == 6);
    CHECK(mixes[3].name == "salinity_ions_fig6");
    CHECK(mixes[3].analytes == std::vector<std::string>{"Sodium", "Chloride", "Sulfate"});
    CHECK(mixes[4].name == "disinfection_byproducts");
    CHECK(mixes[4].analytes.size() == 10);
}

} // TEST_SUITE
