#include "waterscreen/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <Eigen/Dense>

#include "waterscreen/csv.hpp"
#include "waterscreen/errors.hpp"
#include "waterscreen/panelprep.hpp"
#include "waterscreen/rng.hpp"

#include "json.hpp"

namespace waterscreen {

namespace {

// Forces a value through the on-disk number format so the in-memory panel
// and a re-ingested file agree bit for bit.
double round10(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::strtod(buf, nullptr);
}

std::string pad2(int v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02d", v);
    return buf;
}

const char* kClassCycle[5] = {
    "Disinfection Byproducts", "Inorganic Chemicals", "Physical Parameters",
    "Radionuclides", "Volatile Organic Chemicals"};

} // namespace

SynthResult generate_panel(const SynthSpec& spec) {
    if (spec.n_zips < 2 || spec.n_years < 2)
        throw ConfigError("synthetic panel needs at least 2 zips and 2 years");
    if (spec.n_analytes < 1) throw ConfigError("synthetic panel needs at least 1 analyte");
    if (!spec.beta.empty() && static_cast<int>(spec.beta.size()) != spec.n_analytes)
        throw ConfigError("beta length must match n_analytes");
    if (spec.corr_block < 1) throw ConfigError("corr_block must be positive");
    if (spec.missing_rate < 0.0 || spec.missing_rate >= 1.0)
        throw ConfigError("missing_rate must lie in [0, 1)");
    if (spec.samples_per_cell < 1) throw ConfigError("samples_per_cell must be positive");
    if (spec.base_rate <= 0.0) throw ConfigError("base_rate must be positive");

    Rng root(spec.seed);
    SynthResult out;
    RawData& raw = out.raw;
    raw.has_age_adjusted = true;

    std::vector<int> zips(spec.n_zips);
    for (int i = 0; i < spec.n_zips; ++i) zips[i] = 90001 + 7 * i;
    std::vector<int> years(spec.n_years);
    for (int t = 0; t < spec.n_years; ++t) years[t] = spec.start_year + t;

    std::vector<std::string> analyte_names(spec.n_analytes);
    for (int k = 0; k < spec.n_analytes; ++k) {
        analyte_names[k] = "analyte_" + pad2(k + 1);
        raw.classes[analyte_names[k]] = kClassCycle[k % 5];
    }

    // One water system per zip, weight 1. Crosswalk splitting is exercised by
    // the ingest tests; the generator keeps the mapping invertible.
    std::vector<std::string> pws_ids(spec.n_zips);
    std::vector<std::string> zip_labels(spec.n_zips);
    for (int i = 0; i < spec.n_zips; ++i) {
        zip_labels[i] = std::to_string(zips[i]);
        pws_ids[i] = "CA" + std::to_string(3000000 + zips[i]);
        raw.crosswalk.push_back({pws_ids[i], zip_labels[i], 1.0});
        bool gw = root.child("source").child(static_cast<std::uint64_t>(zips[i])).next_double() < 0.4;
        raw.sources[pws_ids[i]] = gw ? "GW" : "SW";
    }

    // Analyte-level distribution parameters.
    std::vector<double> log_mu(spec.n_analytes), log_sd(spec.n_analytes), lod(spec.n_analytes);
    for (int k = 0; k < spec.n_analytes; ++k) {
        Rng ar = root.child("analyte").child(static_cast<std::uint64_t>(k));
        log_mu[k] = std::log(0.5) + ar.next_double() * (std::log(50.0) - std::log(0.5));
        log_sd[k] = 0.3 + 0.5 * ar.next_double();
        lod[k] = round10(std::exp(log_mu[k] - 2.0 * log_sd[k]));
        raw.lods[analyte_names[k]] = lod[k];
    }

    const double share_base[5] = {0.06, 0.12, 0.13, 0.52, 0.17};
    std::map<std::pair<int, int>, std::size_t> death_row;

    for (int i = 0; i < spec.n_zips; ++i) {
        const int zip = zips[i];
        Rng zr = root.child("zip").child(static_cast<std::uint64_t>(zip));
        double pop_base = 800.0 + 59200.0 * zr.next_double();
        double income_base = 35000.0 + 60000.0 * zr.next_double();
        for (int t = 0; t < spec.n_years; ++t) {
            const int year = years[t];
            Rng cr = root.child("demo").child(static_cast<std::uint64_t>(zip))
                         .child(static_cast<std::uint64_t>(year));
            long long pop = std::llround(pop_base * (1.0 + 0.004 * t + 0.01 * (cr.next_double() - 0.5)));
            if (pop < 500) pop = 500;
            double income = round10(income_base * (1.0 + 0.01 * t + 0.04 * (cr.next_double() - 0.5)));

            // floor(N * share * u) with u < 1 keeps the count sum strictly
            // below the population, so the five shares never form an exact
            // affine relation with the absorbed intercept.
            DemographicsRow d;
            d.zip = zip_labels[static_cast<std::size_t>(i)];
            d.year = year;
            d.population = static_cast<double>(pop);
            d.median_income = income;
            double jitter[5];
            double jsum = 0.0;
            for (int j = 0; j < 5; ++j) {
                jitter[j] = share_base[j] * (0.8 + 0.4 * cr.next_double());
                jsum += jitter[j];
            }
            for (int j = 0; j < 5; ++j) {
                double share = jitter[j] / jsum;
                double u = 0.94 + 0.05 * cr.next_double();
                d.age_counts[j] = std::floor(static_cast<double>(pop) * share * u);
            }
            raw.demographics.push_back(d);

            DeathsRow dr;
            dr.zip = zip_labels[static_cast<std::size_t>(i)];
            dr.year = year;
            dr.deaths = 0.0;
            dr.censored = false;
            dr.age_adjusted_rate = 0.0;
            death_row[{zip, year}] = raw.deaths.size();
            raw.deaths.push_back(dr);
        }
    }

    // Concentrations: lognormal with a zip-level offset and an optional
    // shared block factor; values below the LOD are recorded as 0.
    for (int i = 0; i < spec.n_zips; ++i) {
        const int zip = zips[i];
        for (int k = 0; k < spec.n_analytes; ++k) {
            int block = k / spec.corr_block;
            double shared = root.child("blk").child(static_cast<std::uint64_t>(zip))
                                .child(static_cast<std::uint64_t>(block)).next_normal();
            double zip_off = root.child("conc_zip").child(static_cast<std::uint64_t>(zip))
                                 .child(static_cast<std::uint64_t>(k)).next_normal();
            double load = std::clamp(spec.exposure_rho, 0.0, 0.999);
            double site = std::sqrt(1.0 - load * load) * zip_off + load * shared;
            for (int t = 0; t < spec.n_years; ++t) {
                const int year = years[t];
                Rng cell = root.child("conc").child(static_cast<std::uint64_t>(zip))
                               .child(static_cast<std::uint64_t>(k))
                               .child(static_cast<std::uint64_t>(year));
                if (spec.missing_rate > 0.0 && cell.next_double() < spec.missing_rate) continue;
                double year_drift = 0.25 * cell.next_normal();
                double cell_mean = log_mu[k] + log_sd[k] * (site + 0.6 * year_drift);
                for (int s = 0; s < spec.samples_per_cell; ++s) {
                    double lv = cell_mean + spec.sample_noise_sd * cell.next_normal();
                    double value = round10(std::exp(lv));
                    if (value < lod[k]) value = 0.0;
                    raw.samples.push_back({pws_ids[i], analyte_names[k], year, value});
                }
            }
        }
    }

    IngestConfig cfg;
    cfg.year_min = spec.start_year;
    cfg.year_max = spec.start_year + spec.n_years - 1;
    ZipYearPanel panel = build_panel(raw, cfg, out.ingest_report);
    PrepConfig prep;
    prepare_panel(panel, prep);

    // Outcome simulation on the standardized exposures so the planted
    // coefficients are exact in the units the screen estimates.
    SynthTruth& truth = out.truth;
    truth.beta.assign(spec.n_analytes, 0.0);
    if (!spec.beta.empty()) truth.beta = spec.beta;
    truth.gamma_income = spec.gamma_income;
    truth.gamma_groundwater = spec.gamma_groundwater;
    truth.gamma_age = spec.gamma_age;
    truth.base_rate = spec.base_rate;
    truth.alpha.resize(panel.zip_ids.size());
    truth.delta.resize(panel.year_values.size());
    for (std::size_t i = 0; i < panel.zip_ids.size(); ++i)
        truth.alpha[i] = spec.fe_zip_sd * root.child("fe_zip").child(panel.zip_ids[i]).next_normal();
    for (std::size_t t = 0; t < panel.year_values.size(); ++t)
        truth.delta[t] = spec.fe_year_sd *
            root.child("fe_year").child(static_cast<std::uint64_t>(panel.year_values[t])).next_normal();

    double income_ref = 0.0, gw_ref = 0.0;
    double age_ref[5] = {0.0, 0.0, 0.0, 0.0, 0.0};
    const std::size_t n = panel.n_rows();
    for (std::size_t r = 0; r < n; ++r) {
        income_ref += panel.median_income[r];
        gw_ref += panel.groundwater[r];
        age_ref[0] += panel.age_u5[r];
        age_ref[1] += panel.age_5_14[r];
        age_ref[2] += panel.age_15_24[r];
        age_ref[3] += panel.age_25_64[r];
        age_ref[4] += panel.age_65p[r];
    }
    income_ref /= static_cast<double>(n);
    gw_ref /= static_cast<double>(n);
    for (double& a : age_ref) a /= static_cast<double>(n);

    for (std::size_t r = 0; r < n; ++r) {
        double eta = std::log(panel.population[r] * spec.base_rate);
        eta += truth.alpha[panel.zip_idx[r]] + truth.delta[panel.year_idx[r]];
        for (int k = 0; k < spec.n_analytes; ++k) {
            if (truth.beta[k] == 0.0) continue;
            int col = panel.analyte_index(analyte_names[k]);
            if (col < 0 || !panel.analyte_info[col].kept) continue;
            double a = panel.analytes(static_cast<Eigen::Index>(r), col);
            if (std::isnan(a)) continue;
            eta += truth.beta[k] * a;
        }
        eta += spec.gamma_income * (panel.median_income[r] - income_ref);
        eta += spec.gamma_groundwater * (panel.groundwater[r] - gw_ref);
        const double shares[5] = {panel.age_u5[r], panel.age_5_14[r], panel.age_15_24[r],
                                  panel.age_25_64[r], panel.age_65p[r]};
        for (int j = 0; j < 5; ++j) eta += spec.gamma_age[j] * (shares[j] - age_ref[j]);

        const std::string& zip_label = panel.zip_ids[panel.zip_idx[r]];
        int zip = std::stoi(zip_label);
        int year = panel.year_values[panel.year_idx[r]];
        Rng yr = root.child("y").child(zip_label).child(static_cast<std::uint64_t>(year));
        long long y = yr.next_poisson(std::exp(eta));

        bool cens = spec.censor_threshold > 0 && y < spec.censor_threshold;
        double rate = cens ? 0.0 : round10(static_cast<double>(y) * 1e5 /
                                           static_cast<double>(panel.population[r]));
        auto it = death_row.find({zip, year});
        if (it == death_row.end()) throw InternalError("synthetic deaths row lost");
        DeathsRow& dr = raw.deaths[it->second];
        dr.deaths = cens ? 0.0 : static_cast<double>(y);
        dr.censored = cens;
        dr.age_adjusted_rate = rate;
        panel.deaths[r] = dr.deaths;
        panel.censored[r] = cens ? 1 : 0;
        panel.age_adjusted_rate[r] = rate;
    }

    out.panel = std::move(panel);
    return out;
}

void write_raw_csvs(const RawData& raw, const std::string& dir) {
    {
        CsvWriter w(dir + "/samples.csv");
        w.write_row({"pws_id", "analyte", "year", "value"});
        for (const auto& s : raw.samples)
            w.write_row({s.pws_id, s.analyte, CsvWriter::format_int(s.year),
                         CsvWriter::format_double(s.value)});
        w.close();
    }
    {
        CsvWriter w(dir + "/lods.csv");
        w.write_row({"analyte", "lod"});
        for (const auto& [name, v] : raw.lods)
            w.write_row({name, CsvWriter::format_double(v)});
        w.close();
    }
    {
        CsvWriter w(dir + "/crosswalk.csv");
        w.write_row({"pws_id", "zip", "weight"});
        for (const auto& c : raw.crosswalk)
            w.write_row({c.pws_id, c.zip, CsvWriter::format_double(c.weight)});
        w.close();
    }
    {
        CsvWriter w(dir + "/sources.csv");
        w.write_row({"pws_id", "source_code"});
        for (const auto& [pws, code] : raw.sources) w.write_row({pws, code});
        w.close();
    }
    {
        CsvWriter w(dir + "/demographics.csv");
        w.write_row({"zip", "year", "population", "median_income", "age_u5", "age_5_14",
                     "age_15_24", "age_25_64", "age_65p"});
        for (const auto& d : raw.demographics) {
            w.write_row({d.zip, CsvWriter::format_int(d.year),
                         CsvWriter::format_double(d.population),
                         CsvWriter::format_double(d.median_income),
                         CsvWriter::format_double(d.age_counts[0]),
                         CsvWriter::format_double(d.age_counts[1]),
                         CsvWriter::format_double(d.age_counts[2]),
                         CsvWriter::format_double(d.age_counts[3]),
                         CsvWriter::format_double(d.age_counts[4])});
        }
        w.close();
    }
    {
        CsvWriter w(dir + "/deaths.csv");
        if (raw.has_age_adjusted) {
            w.write_row({"zip", "year", "deaths", "censored", "age_adjusted_rate"});
            for (const auto& d : raw.deaths)
                w.write_row({d.zip, CsvWriter::format_int(d.year),
                             CsvWriter::format_double(d.deaths), d.censored ? "1" : "0",
                             CsvWriter::format_double(d.age_adjusted_rate)});
        } else {
            w.write_row({"zip", "year", "deaths", "censored"});
            for (const auto& d : raw.deaths)
                w.write_row({d.zip, CsvWriter::format_int(d.year),
                             CsvWriter::format_double(d.deaths), d.censored ? "1" : "0"});
        }
        w.close();
    }
    if (!raw.classes.empty()) {
        CsvWriter w(dir + "/classes.csv");
        w.write_row({"analyte", "class"});
        for (const auto& [name, cls] : raw.classes) w.write_row({name, cls});
        w.close();
    }
}

void write_truth_json(const SynthSpec& spec, const SynthTruth& truth, const std::string& path) {
    nlohmann::json j;
    j["spec"] = {{"n_zips", spec.n_zips},
                 {"n_years", spec.n_years},
                 {"n_analytes", spec.n_analytes},
                 {"start_year", spec.start_year},
                 {"base_rate", spec.base_rate},
                 {"fe_zip_sd", spec.fe_zip_sd},
                 {"fe_year_sd", spec.fe_year_sd},
                 {"exposure_rho", spec.exposure_rho},
                 {"corr_block", spec.corr_block},
                 {"missing_rate", spec.missing_rate},
                 {"censor_threshold", spec.censor_threshold},
                 {"samples_per_cell", spec.samples_per_cell},
                 {"sample_noise_sd", spec.sample_noise_sd},
                 {"seed", spec.seed}};
    j["beta"] = truth.beta;
    j["gamma_income"] = truth.gamma_income;
    j["gamma_groundwater"] = truth.gamma_groundwater;
    j["gamma_age"] = truth.gamma_age;
    j["alpha"] = truth.alpha;
    j["delta"] = truth.delta;
    j["base_rate"] = truth.base_rate;
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open for writing: " + path);
    std::string text = j.dump(2);
    text.push_back('\n');
    std::fwrite(text.data(), 1, text.size(), f);
    if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

Eigen::MatrixXd dense_fe_design(const Eigen::MatrixXd& M, const std::vector<int>& factor_a,
                                const std::vector<int>& factor_b) {
    const Eigen::Index n = M.rows();
    if (static_cast<Eigen::Index>(factor_a.size()) != n)
        throw ValidationError("factor_a length mismatch");
    if (!factor_b.empty() && static_cast<Eigen::Index>(factor_b.size()) != n)
        throw ValidationError("factor_b length mismatch");

    auto compact = [](const std::vector<int>& f) {
        std::map<int, int> code;
        for (int v : f) code.emplace(v, 0);
        int next = 0;
        for (auto& [k, v] : code) v = next++;
        std::vector<int> out(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) out[i] = code.at(f[i]);
        return std::pair<std::vector<int>, int>(out, next);
    };

    auto [fa, la] = compact(factor_a);
    std::vector<int> fb;
    int lb = 0;
    if (!factor_b.empty()) std::tie(fb, lb) = compact(factor_b);

    Eigen::Index p = M.cols() + 1 + std::max(0, la - 1) + std::max(0, lb - 1);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, p);
    X.leftCols(M.cols()) = M;
    Eigen::Index c = M.cols();
    X.col(c).setOnes();
    ++c;
    for (Eigen::Index r = 0; r < n; ++r)
        if (fa[r] > 0) X(r, c + fa[r] - 1) = 1.0;
    c += std::max(0, la - 1);
    for (Eigen::Index r = 0; r < n && lb > 0; ++r)
        if (fb[r] > 0) X(r, c + fb[r] - 1) = 1.0;
    return X;
}

OracleFit oracle_fit_dense(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& offset, const std::vector<int>& cluster,
                           double tol, int max_iter) {
    const Eigen::Index n = y.size();
    const Eigen::Index p = X.cols();
    if (X.rows() != n) throw ValidationError("oracle design row count mismatch");
    if (offset.size() != 0 && offset.size() != n)
        throw ValidationError("oracle offset length mismatch");
    if (p > 2000) throw ValidationError("oracle design exceeds 2000 columns");
    if (n < p) throw ValidationError("oracle needs at least as many rows as columns");
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(y[i] >= 0.0)) throw ValidationError("oracle outcome must be nonnegative");

    Eigen::VectorXd off = offset.size() ? offset : Eigen::VectorXd::Zero(n);

    auto deviance = [&](const Eigen::VectorXd& mu) {
        double dev = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (y[i] > 0.0) dev += 2.0 * (y[i] * std::log(y[i] / mu[i]) - (y[i] - mu[i]));
            else dev += 2.0 * mu[i];
        }
        return dev;
    };

    OracleFit fit;
    fit.coef = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd eta = off;
    Eigen::VectorXd mu = eta.array().exp();
    double dev = deviance(mu);

    Eigen::MatrixXd H(p, p);
    for (int it = 1; it <= max_iter; ++it) {
        Eigen::VectorXd score = X.transpose() * (y - mu);
        H.noalias() = X.transpose() * mu.asDiagonal() * X;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
        if (!lu.isInvertible())
            throw NumericError("dense design is singular (collinear columns or empty factor levels)");
        Eigen::VectorXd step = lu.solve(score);

        double scale = 1.0;
        Eigen::VectorXd coef_new, eta_new, mu_new;
        double dev_new = 0.0;
        int half = 0;
        for (; half < 60; ++half) {
            coef_new = fit.coef + scale * step;
            eta_new = off + X * coef_new;
            if (eta_new.maxCoeff() < 700.0) {
                mu_new = eta_new.array().exp();
                dev_new = deviance(mu_new);
                if (dev_new <= dev + 1e-10 * (std::abs(dev) + 1.0)) break;
            }
            scale *= 0.5;
        }
        if (half == 60) throw NumericError("oracle step halving failed (possible separation)");

        double change = std::abs(dev - dev_new) / (std::abs(dev_new) + 0.1);
        fit.coef = coef_new;
        eta = eta_new;
        mu = mu_new;
        dev = dev_new;
        fit.iterations = it;
        if (change < tol) {
            fit.converged = true;
            break;
        }
    }
    fit.deviance = dev;

    H.noalias() = X.transpose() * mu.asDiagonal() * X;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
    if (!lu.isInvertible()) throw NumericError("dense information matrix is singular at the optimum");
    fit.bread_inv = lu.inverse();

    std::vector<int> cl = cluster;
    if (cl.empty()) {
        cl.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) cl[static_cast<std::size_t>(i)] = static_cast<int>(i);
    } else if (static_cast<Eigen::Index>(cl.size()) != n) {
        throw ValidationError("oracle cluster length mismatch");
    }
    std::map<int, Eigen::VectorXd> sums;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto [it, fresh] = sums.try_emplace(cl[static_cast<std::size_t>(i)],
                                            Eigen::VectorXd::Zero(p));
        it->second += X.row(i).transpose() * (y[i] - mu[i]);
    }
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
    for (const auto& [g, s] : sums) meat.noalias() += s * s.transpose();
    fit.vcov = fit.bread_inv * meat * fit.bread_inv;
    return fit;
}

} // namespace waterscreen
