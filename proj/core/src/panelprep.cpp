#include "waterscreen/panelprep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <string>

#include "waterscreen/csv.hpp"
#include "waterscreen/errors.hpp"
#include "waterscreen/stats.hpp"

namespace waterscreen {

namespace {

// 12-significant-digit key so float noise does not inflate the distinct
// count when judging near-zero variance.
std::string round_key(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

} // namespace

NzvStats near_zero_variance(const std::vector<double>& non_missing, const PrepConfig& cfg) {
    if (non_missing.empty())
        throw ValidationError("near_zero_variance: needs at least one non-missing value");
    std::map<std::string, std::size_t> counts;
    for (double v : non_missing) counts[round_key(v)]++;
    std::size_t first = 0, second = 0;
    for (const auto& [key, c] : counts) {
        if (c >= first) {
            second = first;
            first = c;
        } else if (c > second) {
            second = c;
        }
    }
    NzvStats s;
    s.freq_ratio = second == 0 ? std::numeric_limits<double>::infinity()
                               : static_cast<double>(first) / static_cast<double>(second);
    s.unique_pct = static_cast<double>(counts.size()) / static_cast<double>(non_missing.size()) * 100.0;
    s.drop = s.freq_ratio > cfg.nzv_freq_ratio && s.unique_pct < cfg.nzv_unique_pct;
    return s;
}

bool filter_missingness(std::size_t n_missing, std::size_t n_total, double threshold) {
    if (n_total == 0) return true;
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ConfigError("missingness threshold must lie in (0, 1]");
    double frac = static_cast<double>(n_missing) / static_cast<double>(n_total);
    return frac >= threshold;
}

void prepare_panel(ZipYearPanel& panel, const PrepConfig& cfg) {
    const std::size_t n = panel.n_rows();
    for (std::size_t j = 0; j < panel.n_analytes(); ++j) {
        AnalyteInfo& info = panel.analyte_info[j];
        std::vector<double> values;
        values.reserve(n);
        for (std::size_t r = 0; r < n; ++r) {
            double v = panel.analytes(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
            if (!std::isnan(v)) values.push_back(v);
        }
        info.n_nonmissing = values.size();
        std::size_t n_missing = n - values.size();
        info.missing_pct = n == 0 ? 100.0 : 100.0 * static_cast<double>(n_missing) / static_cast<double>(n);

        bool drop_missing = filter_missingness(n_missing, n, cfg.missing_threshold);
        bool drop_nzv = false;
        if (!values.empty()) {
            NzvStats s = near_zero_variance(values, cfg);
            info.freq_ratio = s.freq_ratio;
            info.unique_pct = s.unique_pct;
            drop_nzv = s.drop;
        }
        // The two filters read the raw column independently, so applying
        // them in either order retains the same set.
        info.kept = !drop_missing && !drop_nzv;
        if (!info.kept) continue;

        MeanSd ms = mean_sd(values);
        if (!(ms.sd > 0.0))
            throw NumericError("analyte '" + info.name +
                               "' has zero variance; cannot standardize");
        info.mean = ms.mean;
        info.sd = ms.sd;
        info.standardized = true;
        for (std::size_t r = 0; r < n; ++r) {
            double& v = panel.analytes(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
            if (!std::isnan(v)) v = (v - ms.mean) / ms.sd;
        }
    }
}

void write_panel_summary(const ZipYearPanel& panel, const std::string& path) {
    CsvWriter w(path);
    w.write_row({"analyte", "n_nonmissing", "missing_pct", "freq_ratio", "unique_pct", "kept",
                 "mean", "sd"});
    for (const auto& info : panel.analyte_info) {
        w.write_row({info.name, CsvWriter::format_int(static_cast<long long>(info.n_nonmissing)),
                     CsvWriter::format_double(info.missing_pct),
                     CsvWriter::format_double(info.freq_ratio),
                     CsvWriter::format_double(info.unique_pct), info.kept ? "1" : "0",
                     CsvWriter::format_double(info.mean), CsvWriter::format_double(info.sd)});
    }
    w.close();
}

} // namespace waterscreen
