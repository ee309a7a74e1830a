#include "waterscreen/laglead.hpp"

#include <cmath>
#include <map>
#include <set>

#include "waterscreen/csv.hpp"
#include "waterscreen/errors.hpp"
#include "waterscreen/modelspec.hpp"
#include "waterscreen/stats.hpp"

namespace waterscreen {

LagDesign build_lag_design(const ZipYearPanel& panel, int analyte_col, int n_lags, int n_leads) {
    if (analyte_col < 0 || analyte_col >= static_cast<int>(panel.n_analytes()))
        throw ValidationError("analyte column out of range");
    if (n_lags < 1) throw ConfigError("lag design needs at least 1 lag");
    if (n_leads < 0) throw ConfigError("negative lead count");

    std::map<int, int> year_pos;
    for (std::size_t t = 0; t < panel.year_values.size(); ++t)
        year_pos[panel.year_values[t]] = static_cast<int>(t);
    PanelRowIndex index(panel);

    LagDesign d;
    d.n_lags = n_lags;
    d.n_leads = n_leads;
    d.exposure_names.push_back("lag0");
    for (int l = 1; l <= n_lags; ++l) d.exposure_names.push_back("lag" + std::to_string(l));
    for (int j = 1; j <= n_leads; ++j) d.exposure_names.push_back("lead" + std::to_string(j));

    const int width = n_lags + 1 + n_leads;
    std::vector<double> values;
    values.reserve(panel.n_rows() * static_cast<std::size_t>(width));
    std::set<int> usable_years;

    for (std::size_t r = 0; r < panel.n_rows(); ++r) {
        const int zi = panel.zip_idx[r];
        const int year = panel.year_values[panel.year_idx[r]];
        double row_vals[64];
        bool ok = true;
        for (int k = 0; k < width && ok; ++k) {
            int target = (k <= n_lags) ? year - k : year + (k - n_lags);
            auto yp = year_pos.find(target);
            if (yp == year_pos.end()) { ok = false; break; }
            std::ptrdiff_t rr = index.row(zi, yp->second);
            if (rr < 0) { ok = false; break; }
            double a = panel.analytes(static_cast<Eigen::Index>(rr), analyte_col);
            if (std::isnan(a)) { ok = false; break; }
            row_vals[k] = a;
        }
        if (!ok) continue;
        d.rows.push_back(r);
        for (int k = 0; k < width; ++k) values.push_back(row_vals[k]);
        usable_years.insert(year);
    }

    d.n_usable_years = static_cast<int>(usable_years.size());
    if (d.n_usable_years < 3)
        throw ValidationError("analyte '" + panel.analyte_info[analyte_col].name +
                              "' has fewer than 3 usable outcome years in the lag design");

    d.exposures.resize(static_cast<Eigen::Index>(d.rows.size()), width);
    for (std::size_t i = 0; i < d.rows.size(); ++i)
        for (int k = 0; k < width; ++k)
            d.exposures(static_cast<Eigen::Index>(i), k) =
                values[i * static_cast<std::size_t>(width) + static_cast<std::size_t>(k)];
    return d;
}

DlmResult fit_dlm(const ZipYearPanel& panel, int analyte_col, const LagDesign& design,
                  const FitOptions& opts) {
    if (analyte_col < 0 || analyte_col >= static_cast<int>(panel.n_analytes()))
        throw ValidationError("analyte column out of range");

    RegressionSpec spec;
    spec.exposures = design.exposures;
    spec.exposure_names = design.exposure_names;
    spec.covariates = primary_covariates(panel, design.rows, &spec.covariate_names);
    fill_primary_frame(panel, design.rows, spec);

    DlmResult out;
    out.analyte = panel.analyte_info[analyte_col].name;
    out.chem_class = panel.analyte_info[analyte_col].chem_class;
    out.fit = fit_poisson_fe(spec, opts);
    out.n_obs = out.fit.n_obs;
    out.n_usable_years = design.n_usable_years;

    const int width = design.n_lags + 1 + design.n_leads;
    out.coef.resize(width);
    out.se.resize(width);
    for (int k = 0; k < width; ++k) {
        out.coef[k] = out.fit.coef[k];
        out.se[k] = out.fit.se(k);
    }

    out.cum = 0.0;
    double cum_var = 0.0;
    for (int a = 0; a <= design.n_lags; ++a) {
        out.cum += out.coef[a];
        int ka = out.fit.kept_pos(a);
        for (int b = 0; b <= design.n_lags; ++b) {
            int kb = out.fit.kept_pos(b);
            if (ka >= 0 && kb >= 0) cum_var += out.fit.vcov(ka, kb);
        }
    }
    out.cum_se = cum_var > 0.0 ? std::sqrt(cum_var) : 0.0;
    out.cum_lo = out.cum - kZ975 * out.cum_se;
    out.cum_hi = out.cum + kZ975 * out.cum_se;
    out.cum_pct = rate_increase(out.cum, out.cum_se);

    if (design.n_leads >= 1) {
        int li = design.n_lags + 1;
        out.lead = out.coef[li];
        out.lead_se = out.se[li];
        out.lead_lo = out.lead - kZ975 * out.lead_se;
        out.lead_hi = out.lead + kZ975 * out.lead_se;
    } else {
        out.lead = out.lead_se = out.lead_lo = out.lead_hi =
            std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

DlmResult run_dlm(const ZipYearPanel& panel, const std::string& analyte, const FitOptions& opts,
                  int n_lags, int n_leads) {
    int col = panel.analyte_index(analyte);
    if (col < 0) throw ValidationError("unknown analyte: " + analyte);
    if (!panel.analyte_info[col].kept)
        throw ValidationError("analyte '" + analyte + "' was dropped during panel preparation");
    LagDesign d = build_lag_design(panel, col, n_lags, n_leads);
    return fit_dlm(panel, col, d, opts);
}

void write_dlm_results(const std::string& path, const std::vector<DlmResult>& rows) {
    CsvWriter w(path);
    w.write_row({"analyte", "coef_lead1", "se_lead1", "ci_lo_lead1", "ci_hi_lead1",
                 "coef_lag0", "se_lag0", "ci_lo_lag0", "ci_hi_lag0",
                 "coef_lag1", "se_lag1", "ci_lo_lag1", "ci_hi_lag1",
                 "coef_lag2", "se_lag2", "ci_lo_lag2", "ci_hi_lag2",
                 "cum_coef", "cum_se", "cum_ci_lo", "cum_ci_hi", "pass_m5", "pass_m6"});
    auto flag = [](int v) { return v < 0 ? std::string("NA") : std::string(v ? "pass" : "fail"); };
    auto f = [](double v) { return CsvWriter::format_double(v); };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : rows) {
        auto lag = [&](int k) { return k < static_cast<int>(r.coef.size()) ? r.coef[k] : nan; };
        auto lse = [&](int k) { return k < static_cast<int>(r.se.size()) ? r.se[k] : nan; };
        auto lo = [&](int k) { return lag(k) - kZ975 * lse(k); };
        auto hi = [&](int k) { return lag(k) + kZ975 * lse(k); };
        w.write_row({r.analyte,
                     f(r.lead), f(r.lead_se), f(r.lead_lo), f(r.lead_hi),
                     f(lag(0)), f(lse(0)), f(lo(0)), f(hi(0)),
                     f(lag(1)), f(lse(1)), f(lo(1)), f(hi(1)),
                     f(lag(2)), f(lse(2)), f(lo(2)), f(hi(2)),
                     f(r.cum), f(r.cum_se), f(r.cum_lo), f(r.cum_hi),
                     flag(r.pass_m5), flag(r.pass_m6)});
    }
    w.close();
}

} // namespace waterscreen
