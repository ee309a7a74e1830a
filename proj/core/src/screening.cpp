#include "waterscreen/screening.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "waterscreen/csv.hpp"
#include "waterscreen/errors.hpp"
#include "waterscreen/laglead.hpp"
#include "waterscreen/modelspec.hpp"
#include "waterscreen/stats.hpp"
#include "waterscreen/threadpool.hpp"

namespace waterscreen {

namespace {

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

std::string trim_message(const Error& e) { return e.what(); }

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<int>& cols,
                               const std::vector<std::string>& names,
                               std::vector<std::string>* names_out) {
    Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(cols.size()));
    if (names_out) names_out->clear();
    for (std::size_t j = 0; j < cols.size(); ++j) {
        out.col(static_cast<Eigen::Index>(j)) = X.col(cols[j]);
        if (names_out) names_out->push_back(names[static_cast<std::size_t>(cols[j])]);
    }
    return out;
}

} // namespace

std::vector<std::size_t> analyte_rows(const ZipYearPanel& panel, int analyte_col) {
    if (analyte_col < 0 || analyte_col >= static_cast<int>(panel.n_analytes()))
        throw ValidationError("analyte column out of range");
    std::vector<std::size_t> rows;
    rows.reserve(panel.n_rows());
    for (std::size_t r = 0; r < panel.n_rows(); ++r)
        if (!std::isnan(panel.analytes(static_cast<Eigen::Index>(r), analyte_col)))
            rows.push_back(r);
    return rows;
}

RegressionSpec primary_spec(const ZipYearPanel& panel, int analyte_col,
                            std::vector<std::size_t>* rows_out) {
    std::vector<std::size_t> rows = analyte_rows(panel, analyte_col);
    RegressionSpec spec;
    spec.exposures.resize(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t i = 0; i < rows.size(); ++i)
        spec.exposures(static_cast<Eigen::Index>(i), 0) =
            panel.analytes(static_cast<Eigen::Index>(rows[i]), analyte_col);
    spec.exposure_names = {panel.analyte_info[analyte_col].name};
    spec.covariates = primary_covariates(panel, rows, &spec.covariate_names);
    fill_primary_frame(panel, rows, spec);
    if (rows_out) *rows_out = std::move(rows);
    return spec;
}

RegressionSpec ladder_spec(const ZipYearPanel& panel, int analyte_col, int which,
                           std::vector<std::size_t>* rows_out) {
    std::vector<std::size_t> rows;
    RegressionSpec spec = primary_spec(panel, analyte_col, &rows);

    // Primary covariate order: income, groundwater, then the five age shares.
    switch (which) {
        case 1: {
            if (!panel.has_age_adjusted)
                throw ValidationError("age-adjusted mortality column not available");
            for (std::size_t i = 0; i < rows.size(); ++i) {
                double rate = panel.age_adjusted_rate[rows[i]];
                if (std::isnan(rate))
                    throw ValidationError("missing age-adjusted rate in an outcome row");
                spec.y[static_cast<Eigen::Index>(i)] = static_cast<double>(
                    std::llround(rate * panel.population[rows[i]] / 1e5));
            }
            spec.covariates = select_columns(spec.covariates, {0, 1}, spec.covariate_names,
                                             &spec.covariate_names);
            break;
        }
        case 2:
            spec.covariates.resize(spec.covariates.rows(), 0);
            spec.covariate_names.clear();
            break;
        case 3:
            spec.covariates = select_columns(spec.covariates, {0, 2, 3, 4, 5, 6},
                                             spec.covariate_names, &spec.covariate_names);
            break;
        case 4:
            spec.covariates = select_columns(spec.covariates, {2, 3, 4, 5, 6},
                                             spec.covariate_names, &spec.covariate_names);
            break;
        default:
            throw ConfigError("ladder variant must be 1..4");
    }
    if (rows_out) *rows_out = std::move(rows);
    return spec;
}

std::vector<double> bh_adjust(const std::vector<double>& pvalues) {
    const std::size_t m = pvalues.size();
    for (double p : pvalues)
        if (!(p >= 0.0 && p <= 1.0))
            throw ValidationError("p-values must lie in [0, 1]");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (pvalues[a] != pvalues[b]) return pvalues[a] < pvalues[b];
        return a < b;
    });
    std::vector<double> adj(m);
    double running = 1.0;
    for (std::size_t i = m; i-- > 0;) {
        double q = pvalues[order[i]] * static_cast<double>(m) / static_cast<double>(i + 1);
        running = std::min(running, q);
        adj[order[i]] = running;
    }
    return adj;
}

std::array<LadderFlag, 6> robustness_ladder(const ZipYearPanel& panel, int analyte_col,
                                            double primary_coef, const ScreenConfig& cfg) {
    std::array<LadderFlag, 6> flags;
    const int want = sign_of(primary_coef);

    for (int which = 1; which <= 4; ++which) {
        LadderFlag& f = flags[which - 1];
        try {
            RegressionSpec spec = ladder_spec(panel, analyte_col, which);
            FitResult fit = fit_poisson_fe(spec, cfg.fit);
            double b = fit.coef[0];
            double se = fit.se(0);
            if (!(se > 0.0)) {
                f.state = 0;
                f.reason = "degenerate standard error";
                continue;
            }
            double p = normal_p_two_sided(b / se);
            if (sign_of(b) != want) {
                f.state = 0;
                f.reason = "sign differs from primary fit";
            } else if (!(p < cfg.ladder_alpha)) {
                f.state = 0;
                f.reason = "p above threshold";
            } else {
                f.state = 1;
            }
        } catch (const Error& e) {
            f.state = 0;
            f.reason = trim_message(e);
        }
    }

    try {
        LagDesign d = build_lag_design(panel, analyte_col);
        DlmResult dlm = fit_dlm(panel, analyte_col, d, cfg.fit);
        LadderFlag& m5 = flags[4];
        if (sign_of(dlm.cum) != want) {
            m5.state = 0;
            m5.reason = "cumulative effect sign differs from primary fit";
        } else if (!(dlm.cum_lo > 0.0 || dlm.cum_hi < 0.0)) {
            m5.state = 0;
            m5.reason = "cumulative CI covers 0";
        } else {
            m5.state = 1;
        }
        LadderFlag& m6 = flags[5];
        if (dlm.lead_lo <= 0.0 && dlm.lead_hi >= 0.0) {
            m6.state = 1;
        } else {
            m6.state = 0;
            m6.reason = "lead CI excludes 0";
        }
    } catch (const Error& e) {
        flags[4].state = 0;
        flags[4].reason = trim_message(e);
        flags[5].state = 0;
        flags[5].reason = trim_message(e);
    }
    return flags;
}

std::vector<ScreenRow> run_screen(const ZipYearPanel& panel, const ScreenConfig& cfg) {
    std::vector<int> cols = panel.kept_analytes();
    std::vector<ScreenRow> rows(cols.size());

    parallel_for(cols.size(), cfg.n_threads, [&](std::size_t i) {
        const int col = cols[i];
        ScreenRow& row = rows[i];
        row.analyte = panel.analyte_info[col].name;
        row.chem_class = panel.analyte_info[col].chem_class;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.coefficient = row.std_err = row.p_value = row.bh_p = nan;
        row.increase = {nan, nan, nan};
        try {
            RegressionSpec spec = primary_spec(panel, col);
            FitResult fit = fit_poisson_fe(spec, cfg.fit);
            row.coefficient = fit.coef[0];
            row.std_err = fit.se(0);
            row.n_obs = fit.n_obs;
            row.converged = fit.converged;
            row.increase = rate_increase(row.coefficient, row.std_err);
            if (row.std_err > 0.0 && std::isfinite(row.coefficient))
                row.p_value = normal_p_two_sided(row.coefficient / row.std_err);
            else
                row.fit_error = "degenerate standard error";
        } catch (const Error& e) {
            row.fit_error = trim_message(e);
        }
    });

    // Merge order is analyte name, independent of panel column order.
    std::sort(rows.begin(), rows.end(),
              [](const ScreenRow& a, const ScreenRow& b) { return a.analyte < b.analyte; });

    std::vector<double> ps;
    std::vector<std::size_t> with_p;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (std::isfinite(rows[i].p_value)) {
            with_p.push_back(i);
            ps.push_back(rows[i].p_value);
        } else {
            rows[i].status = "fit_failed";
        }
    }
    std::vector<double> adj = bh_adjust(ps);
    for (std::size_t k = 0; k < with_p.size(); ++k) rows[with_p[k]].bh_p = adj[k];

    std::vector<std::size_t> significant;
    for (std::size_t i : with_p) {
        if (rows[i].bh_p < cfg.alpha) significant.push_back(i);
        else rows[i].status = "not_significant";
    }

    parallel_for(significant.size(), cfg.n_threads, [&](std::size_t k) {
        ScreenRow& row = rows[significant[k]];
        int col = panel.analyte_index(row.analyte);
        row.m = robustness_ladder(panel, col, row.coefficient, cfg);
        bool all_pass = true;
        for (const auto& f : row.m) all_pass = all_pass && f.state == 1;
        row.status = all_pass ? "retained" : "excluded_after_checks";
    });
    return rows;
}

AttributionResult attributable_mortality(const ZipYearPanel& panel, int analyte_col,
                                         const FitResult& fit,
                                         const std::vector<std::size_t>& rows,
                                         bool clip_negative) {
    if (analyte_col < 0 || analyte_col >= static_cast<int>(panel.n_analytes()))
        throw ValidationError("analyte column out of range");
    const double beta = fit.coef[0];
    const double se = fit.se(0);
    const double b_lo = beta - kZ975 * se;
    const double b_hi = beta + kZ975 * se;

    AttributionResult out;
    out.analyte = panel.analyte_info[analyte_col].name;
    out.total = 0.0;
    out.lo = se > 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    out.hi = out.lo;
    out.panel_rows.reserve(fit.used_rows.size());
    out.row_deaths.reserve(fit.used_rows.size());

    for (std::size_t u : fit.used_rows) {
        if (u >= rows.size()) throw InternalError("fit row index outside the supplied row set");
        const std::size_t r = rows[u];
        const double a = panel.analytes(static_cast<Eigen::Index>(r), analyte_col);
        const double y = static_cast<double>(panel.deaths[r]);
        double af = 1.0 - std::exp(-beta * a);
        if (clip_negative && beta * a <= 0.0) af = std::max(af, 0.0);
        const double deaths = y * af;
        out.total += deaths;
        if (se > 0.0) {
            out.lo += y * (1.0 - std::exp(-b_lo * a));
            out.hi += y * (1.0 - std::exp(-b_hi * a));
        }
        out.panel_rows.push_back(r);
        out.row_deaths.push_back(deaths);
    }
    if (out.lo > out.hi) std::swap(out.lo, out.hi);
    return out;
}

AttributionResult run_attribution(const ZipYearPanel& panel, const std::string& analyte,
                                  const ScreenConfig& cfg) {
    int col = panel.analyte_index(analyte);
    if (col < 0) throw ValidationError("unknown analyte: " + analyte);
    if (!panel.analyte_info[col].kept)
        throw ValidationError("analyte '" + analyte + "' was dropped during panel preparation");
    std::vector<std::size_t> rows;
    RegressionSpec spec = primary_spec(panel, col, &rows);
    FitResult fit = fit_poisson_fe(spec, cfg.fit);
    return attributable_mortality(panel, col, fit, rows, cfg.clip_negative);
}

void write_screen_results(const std::string& path, const std::vector<ScreenRow>& rows) {
    CsvWriter w(path);
    w.write_row({"analyte", "class", "coefficient", "std_err", "increase_pct", "ci_lo", "ci_hi",
                 "p_value", "bh_p", "m1", "m2", "m3", "m4", "m5", "m6", "status"});
    auto flag = [](const LadderFlag& f) {
        return f.state < 0 ? std::string("NA") : std::string(f.state ? "pass" : "fail");
    };
    auto f = [](double v) { return CsvWriter::format_double(v); };
    for (const auto& r : rows) {
        w.write_row({r.analyte, r.chem_class, f(r.coefficient), f(r.std_err), f(r.increase.pct),
                     f(r.increase.lo), f(r.increase.hi), f(r.p_value), f(r.bh_p), flag(r.m[0]),
                     flag(r.m[1]), flag(r.m[2]), flag(r.m[3]), flag(r.m[4]), flag(r.m[5]),
                     r.status});
    }
    w.close();
}

void write_attribution(const std::string& path, const ZipYearPanel& panel,
                       const std::vector<AttributionResult>& results) {
    CsvWriter w(path);
    w.write_row({"analyte", "zip", "year", "attributable_deaths"});
    for (const auto& res : results) {
        for (std::size_t i = 0; i < res.panel_rows.size(); ++i) {
            const std::size_t r = res.panel_rows[i];
            w.write_row({res.analyte, panel.zip_ids[panel.zip_idx[r]],
                         CsvWriter::format_int(panel.year_values[panel.year_idx[r]]),
                         CsvWriter::format_double(res.row_deaths[i])});
        }
    }
    w.close();
}

} // namespace waterscreen
