#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "waterscreen/errors.hpp"

namespace waterscreen {

// 97.5% standard normal quantile, pinned so confidence intervals are
// bit-stable across platforms.
inline constexpr double kZ975 = 1.959964;

// Linear-interpolation empirical quantile (the common statistical package
// default). x need not be sorted; p in [0,1].
inline double quantile_type7(std::vector<double> x, double p) {
    if (x.empty()) throw NumericError("quantile of empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw NumericError("quantile probability outside [0,1]");
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    if (n == 1) return x[0];
    double h = p * static_cast<double>(n - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo >= n - 1) return x[n - 1];
    double frac = h - static_cast<double>(lo);
    return x[lo] + frac * (x[lo + 1] - x[lo]);
}

// Weighted lower median: smallest value whose cumulative normalized weight
// reaches 0.5. A hair of slack on the threshold guards against cumulative
// rounding; the exact-0.5 tie still picks the lower value.
inline double weighted_median_lower(std::vector<std::pair<double, double>> vw) {
    if (vw.empty()) throw NumericError("weighted median of empty sample");
    double total = 0.0;
    for (auto& [v, w] : vw) {
        if (!(w >= 0.0)) throw NumericError("negative weight in weighted median");
        total += w;
    }
    if (total <= 0.0) throw NumericError("weighted median with zero total weight");
    std::sort(vw.begin(), vw.end());
    double cum = 0.0;
    const double eps = 1e-12 * total;
    for (auto& [v, w] : vw) {
        cum += w;
        if (cum >= 0.5 * total - eps) return v;
    }
    return vw.back().first;
}

struct MeanSd {
    double mean;
    double sd; // sample sd, n-1 denominator
    std::size_t n;
};

inline MeanSd mean_sd(const std::vector<double>& x) {
    std::size_t n = 0;
    double mean = 0.0;
    for (double v : x) {
        if (std::isnan(v)) continue;
        ++n;
        mean += (v - mean) / static_cast<double>(n);
    }
    if (n == 0) return {std::nan(""), std::nan(""), 0};
    double ss = 0.0;
    for (double v : x) {
        if (std::isnan(v)) continue;
        ss += (v - mean) * (v - mean);
    }
    double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    return {mean, sd, n};
}

// Pairwise-complete Pearson correlation. NaN when fewer than 2 complete
// pairs or either side is constant.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw NumericError("pearson: length mismatch");
    std::size_t n = 0;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::isnan(x[i]) || std::isnan(y[i])) continue;
        ++n;
        mx += (x[i] - mx) / static_cast<double>(n);
        my += (y[i] - my) / static_cast<double>(n);
    }
    if (n < 2) return std::nan("");
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::isnan(x[i]) || std::isnan(y[i])) continue;
        double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nan("");
    return sxy / std::sqrt(sxx * syy);
}

// Standard normal CDF via erfc; accurate in both tails.
inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

// Two-sided p-value for a z statistic.
inline double normal_p_two_sided(double z) {
    if (std::isnan(z)) return std::nan("");
    return std::erfc(std::fabs(z) / std::sqrt(2.0));
}

} // namespace waterscreen
