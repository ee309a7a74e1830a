#include "waterscreen/mixtures.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "waterscreen/csv.hpp"
#include "waterscreen/errors.hpp"
#include "waterscreen/modelspec.hpp"
#include "waterscreen/stats.hpp"

namespace waterscreen {

CorrelationMatrix correlation_matrix(const ZipYearPanel& panel,
                                     const std::vector<std::string>& analytes) {
    CorrelationMatrix out;
    std::vector<int> cols;
    if (analytes.empty()) {
        cols = panel.kept_analytes();
        for (int c : cols) out.names.push_back(panel.analyte_info[c].name);
    } else {
        for (const auto& name : analytes) {
            int c = panel.analyte_index(name);
            if (c < 0) throw ValidationError("unknown analyte: " + name);
            cols.push_back(c);
            out.names.push_back(name);
        }
    }
    const int p = static_cast<int>(cols.size());
    if (p < 2) throw ValidationError("correlation matrix needs at least 2 analytes");

    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.r = Eigen::MatrixXd::Constant(p, p, nan);
    out.n = Eigen::MatrixXi::Zero(p, p);
    const Eigen::Index nrow = static_cast<Eigen::Index>(panel.n_rows());

    for (int i = 0; i < p; ++i) {
        int cnt = 0;
        for (Eigen::Index r = 0; r < nrow; ++r)
            if (!std::isnan(panel.analytes(r, cols[i]))) ++cnt;
        out.n(i, i) = cnt;
        out.r(i, i) = 1.0;
        for (int j = i + 1; j < p; ++j) {
            std::vector<double> xi, xj;
            for (Eigen::Index r = 0; r < nrow; ++r) {
                double a = panel.analytes(r, cols[i]);
                double b = panel.analytes(r, cols[j]);
                if (!std::isnan(a) && !std::isnan(b)) {
                    xi.push_back(a);
                    xj.push_back(b);
                }
            }
            out.n(i, j) = out.n(j, i) = static_cast<int>(xi.size());
            double rij = xi.size() < 3 ? nan : pearson(xi, xj);
            out.r(i, j) = out.r(j, i) = rij;
        }
    }
    return out;
}

std::vector<NetworkEdge> correlation_network(const CorrelationMatrix& corr, double threshold) {
    std::vector<NetworkEdge> edges;
    const int p = static_cast<int>(corr.names.size());
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j) {
            double r = corr.r(i, j);
            if (!std::isnan(r) && std::abs(r) > threshold) edges.push_back({i, j, r});
        }
    return edges;
}

Eigen::MatrixXd dissimilarity_from_correlation(const CorrelationMatrix& corr, int* n_imputed) {
    const int p = static_cast<int>(corr.names.size());
    Eigen::MatrixXd d(p, p);
    double dmax = 0.0;
    int missing = 0;
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            double r = corr.r(i, j);
            if (std::isnan(r)) {
                d(i, j) = std::numeric_limits<double>::quiet_NaN();
                if (i < j) ++missing;
            } else {
                d(i, j) = 1.0 - std::abs(r);
                dmax = std::max(dmax, d(i, j));
            }
        }
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            if (std::isnan(d(i, j))) d(i, j) = dmax;
    if (n_imputed) *n_imputed = missing;
    return d;
}

MdsResult mds_embed(const Eigen::MatrixXd& dissimilarity) {
    const Eigen::Index n = dissimilarity.rows();
    if (n < 1) throw ValidationError("empty dissimilarity matrix");
    if (dissimilarity.cols() != n) throw ValidationError("dissimilarity matrix must be square");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(dissimilarity(i, i)) > 1e-12)
            throw ValidationError("dissimilarity diagonal must be zero");
        for (Eigen::Index j = 0; j < n; ++j) {
            double v = dissimilarity(i, j);
            if (std::isnan(v)) throw ValidationError("dissimilarity matrix contains missing entries");
            if (std::abs(v - dissimilarity(j, i)) > 1e-9)
                throw ValidationError("dissimilarity matrix must be symmetric");
            if (v < 0.0) throw ValidationError("dissimilarities must be nonnegative");
        }
    }

    MdsResult out;
    if (n == 1) {
        out.coords = Eigen::MatrixXd::Zero(1, 1);
        out.dims = 1;
        out.eigen1 = 0.0;
        out.eigen2 = std::numeric_limits<double>::quiet_NaN();
        out.warnings.push_back("single point embedded in 1 dimension");
        return out;
    }

    Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n, n) -
                        Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    Eigen::MatrixXd d2 = dissimilarity.array().square().matrix();
    Eigen::MatrixXd B = -0.5 * J * d2 * J;
    B = 0.5 * (B + B.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed in MDS");
    const Eigen::VectorXd& ev = es.eigenvalues();  // ascending
    double scale = std::max(1.0, std::max(std::abs(ev[0]), std::abs(ev[n - 1])));
    double tol = 1e-12 * scale;

    std::vector<Eigen::Index> axes;
    for (Eigen::Index k = n - 1; k >= 0 && axes.size() < 2; --k)
        if (ev[k] >= -tol) axes.push_back(k);

    if (axes.empty()) throw NumericError("no nonnegative eigenvalue in MDS double centering");
    out.dims = static_cast<int>(axes.size());
    if (out.dims < 2)
        out.warnings.push_back("only one nonnegative eigenvalue; emitting a 1-D embedding");

    out.coords = Eigen::MatrixXd::Zero(n, out.dims);
    for (int a = 0; a < out.dims; ++a) {
        double lambda = std::max(ev[axes[static_cast<std::size_t>(a)]], 0.0);
        Eigen::VectorXd v = es.eigenvectors().col(axes[static_cast<std::size_t>(a)]);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(v[i]) > 1e-12) {
                if (v[i] < 0.0) v = -v;
                break;
            }
        }
        out.coords.col(a) = v * std::sqrt(lambda);
    }
    out.eigen1 = ev[axes[0]];
    out.eigen2 = out.dims > 1 ? ev[axes[1]] : std::numeric_limits<double>::quiet_NaN();
    return out;
}

std::vector<int> quantize(const std::vector<double>& column, int q, bool* constant_warning) {
    if (q < 2) throw ConfigError("quantize needs q >= 2");
    if (constant_warning) *constant_warning = false;
    std::vector<double> present;
    for (double v : column)
        if (!std::isnan(v)) present.push_back(v);
    if (static_cast<int>(present.size()) < q)
        throw ValidationError("quantize needs at least q non-missing values");

    std::vector<double> breaks(static_cast<std::size_t>(q - 1));
    for (int k = 1; k < q; ++k)
        breaks[static_cast<std::size_t>(k - 1)] =
            quantile_type7(present, static_cast<double>(k) / static_cast<double>(q));

    auto [mn, mx] = std::minmax_element(present.begin(), present.end());
    if (*mn == *mx && constant_warning) *constant_warning = true;

    std::vector<int> scores(column.size());
    for (std::size_t i = 0; i < column.size(); ++i) {
        if (std::isnan(column[i])) {
            scores[i] = -1;
            continue;
        }
        int s = 0;
        for (double b : breaks)
            if (b < column[i]) ++s;
        scores[i] = s;
    }
    return scores;
}

Eigen::MatrixXd natural_spline_basis(const std::vector<double>& x, int df) {
    if (df < 1) throw ConfigError("spline df must be positive");
    std::vector<double> present;
    for (double v : x)
        if (!std::isnan(v)) present.push_back(v);
    if (present.size() < 2) throw ValidationError("spline trend needs at least 2 values");

    std::vector<double> knots;
    knots.push_back(*std::min_element(present.begin(), present.end()));
    for (int k = 1; k < df; ++k)
        knots.push_back(quantile_type7(present, static_cast<double>(k) / static_cast<double>(df)));
    knots.push_back(*std::max_element(present.begin(), present.end()));
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    const int K = static_cast<int>(knots.size());
    if (K < 2) throw ValidationError("spline trend needs at least 2 distinct values");

    auto cube_pos = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
    auto dk = [&](int k, double v) {
        // k is 0-based into the distinct knot vector.
        return (cube_pos(v - knots[static_cast<std::size_t>(k)]) -
                cube_pos(v - knots[static_cast<std::size_t>(K - 1)])) /
               (knots[static_cast<std::size_t>(K - 1)] - knots[static_cast<std::size_t>(k)]);
    };

    const Eigen::Index nr = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd N(nr, K - 1);
    for (Eigen::Index i = 0; i < nr; ++i) {
        double v = x[static_cast<std::size_t>(i)];
        N(i, 0) = v;
        for (int k = 0; k + 2 < K; ++k) N(i, k + 1) = dk(k, v) - dk(K - 2, v);
    }
    return N;
}

MixtureResult qgcomp_fit(const MixtureSpec& spec, const ZipYearPanel& panel,
                         const QgcompConfig& cfg) {
    if (spec.analytes.empty()) throw ValidationError("mixture '" + spec.name + "' is empty");
    MixtureResult out;
    out.name = spec.name;

    std::vector<int> cols;
    for (const auto& name : spec.analytes) {
        int c = panel.analyte_index(name);
        if (c >= 0 && panel.analyte_info[c].kept) {
            cols.push_back(c);
            out.analytes_used.push_back(name);
        } else {
            out.analytes_missing.push_back(name);
        }
    }
    if (cols.empty())
        throw ValidationError("mixture '" + spec.name + "' has no analytes available in the panel");
    if (spec.analytes.size() >= 2 && cols.size() < 2)
        throw ValidationError("mixture '" + spec.name +
                              "' reduced to fewer than 2 available analytes");

    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < panel.n_rows(); ++r) {
        bool complete = true;
        for (int c : cols)
            if (std::isnan(panel.analytes(static_cast<Eigen::Index>(r), c))) {
                complete = false;
                break;
            }
        if (complete) rows.push_back(r);
    }
    if (rows.size() < static_cast<std::size_t>(cfg.q))
        throw ValidationError("mixture '" + spec.name + "' has too few complete rows");

    const std::size_t n = rows.size();
    std::vector<double> index(n, 0.0);
    for (int c : cols) {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i)
            col[i] = panel.analytes(static_cast<Eigen::Index>(rows[i]), c);
        std::vector<int> score = quantize(col, cfg.q);
        for (std::size_t i = 0; i < n; ++i) index[i] += static_cast<double>(score[i]);
    }
    const double m = static_cast<double>(cols.size());
    for (double& v : index) v /= m;

    RegressionSpec reg;
    reg.exposures.resize(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i)
        reg.exposures(static_cast<Eigen::Index>(i), 0) = index[i];
    reg.exposure_names = {"mixture_index"};

    Eigen::MatrixXd base = primary_covariates(panel, rows, &reg.covariate_names);
    std::vector<double> year_vals(n);
    for (std::size_t i = 0; i < n; ++i)
        year_vals[i] = static_cast<double>(panel.year_values[panel.year_idx[rows[i]]]);
    Eigen::MatrixXd trend = natural_spline_basis(year_vals, cfg.year_spline_df);
    reg.covariates.resize(static_cast<Eigen::Index>(n), base.cols() + trend.cols());
    reg.covariates << base, trend;
    for (Eigen::Index j = 0; j < trend.cols(); ++j)
        reg.covariate_names.push_back("year_ns" + std::to_string(j + 1));

    fill_primary_frame(panel, rows, reg);
    reg.fe_b.clear();  // year enters through the spline trend instead
    if (!cfg.clustered) reg.cluster.clear();

    FitResult fit = fit_poisson_fe(reg, cfg.fit);
    out.psi = fit.coef[0];
    out.std_err = fit.se(0);
    out.p_value = out.std_err > 0.0 ? normal_p_two_sided(out.psi / out.std_err)
                                    : std::numeric_limits<double>::quiet_NaN();
    out.pct = rate_increase(out.psi, out.std_err);
    out.curve.resize(static_cast<std::size_t>(cfg.q));
    for (int s = 0; s < cfg.q; ++s)
        out.curve[static_cast<std::size_t>(s)] = std::exp(out.psi * static_cast<double>(s));
    out.n_obs = fit.n_obs;
    out.converged = fit.converged;
    return out;
}

std::vector<MixtureSpec> builtin_mixtures() {
    return {
        {"toxic_metals",
         {"Lead", "Arsenic", "Mercury", "Chromium Hex", "Barium", "Free Copper", "Manganese",
          "Aluminum"}},
        {"industrial", {"Perchlorate", "Mercury", "Cyanide"}},
        {"inorganic_ions_methods",
         {"Chloride", "Sodium", "Total Dissolved Solids (TDS)", "Sulfate", "Conductivity",
          "Hardness (Total as CaCO3)"}},
        {"salinity_ions_fig6", {"Sodium", "Chloride", "Sulfate"}},
        {"disinfection_byproducts",
         {"Bromodichloromethane", "Bromoform", "Chloroform", "Dibromoacetic Acid",
          "Dibromochloromethane", "Dichloroacetic Acid", "Total Haloacetic Acids (HAA5)",
          "Trihalomethanes (TTHM)", "Trichloroacetic Acid", "Ethylene Dibromide"}},
    };
}

void write_correlations(const std::string& path, const CorrelationMatrix& corr) {
    CsvWriter w(path);
    w.write_row({"i", "j", "r", "n"});
    const int p = static_cast<int>(corr.names.size());
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j)
            w.write_row({corr.names[i], corr.names[j], CsvWriter::format_double(corr.r(i, j)),
                         CsvWriter::format_int(corr.n(i, j))});
    w.close();
}

void write_network_edges(const std::string& path, const CorrelationMatrix& corr,
                         const std::vector<NetworkEdge>& edges) {
    CsvWriter w(path);
    w.write_row({"i", "j", "r"});
    for (const auto& e : edges)
        w.write_row({corr.names[static_cast<std::size_t>(e.i)],
                     corr.names[static_cast<std::size_t>(e.j)], CsvWriter::format_double(e.r)});
    w.close();
}

void write_mds_coords(const std::string& path, const CorrelationMatrix& corr,
                      const MdsResult& mds, const ZipYearPanel& panel) {
    CsvWriter w(path);
    w.write_row({"analyte", "x", "y", "class"});
    for (std::size_t i = 0; i < corr.names.size(); ++i) {
        int c = panel.analyte_index(corr.names[i]);
        std::string cls = c >= 0 ? panel.analyte_info[c].chem_class : "unknown";
        double x = mds.coords(static_cast<Eigen::Index>(i), 0);
        double y = mds.dims > 1 ? mds.coords(static_cast<Eigen::Index>(i), 1)
                                : std::numeric_limits<double>::quiet_NaN();
        w.write_row({corr.names[i], CsvWriter::format_double(x), CsvWriter::format_double(y), cls});
    }
    w.close();
}

void write_mixture_results(const std::string& path, const std::vector<MixtureResult>& results) {
    std::size_t qmax = 0;
    for (const auto& r : results) qmax = std::max(qmax, r.curve.size());
    CsvWriter w(path);
    std::vector<std::string> header = {"mixture",      "n_components", "n_obs",
                                       "psi",          "std_err",      "p_value",
                                       "increase_pct", "ci_lo",        "ci_hi"};
    for (std::size_t s = 0; s < qmax; ++s) header.push_back("rel_s" + std::to_string(s));
    w.write_row(header);
    for (const auto& r : results) {
        std::vector<std::string> row = {
            r.name,
            CsvWriter::format_int(static_cast<long long>(r.analytes_used.size())),
            CsvWriter::format_int(static_cast<long long>(r.n_obs)),
            CsvWriter::format_double(r.psi),
            CsvWriter::format_double(r.std_err),
            CsvWriter::format_double(r.p_value),
            CsvWriter::format_double(r.pct.pct),
            CsvWriter::format_double(r.pct.lo),
            CsvWriter::format_double(r.pct.hi)};
        for (std::size_t s = 0; s < qmax; ++s)
            row.push_back(s < r.curve.size() ? CsvWriter::format_double(r.curve[s]) : "NA");
        w.write_row(row);
    }
    w.close();
}

} // namespace waterscreen
