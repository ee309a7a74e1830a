#pragma once

#include <string>
#include <vector>

#include "waterscreen/panel.hpp"

namespace waterscreen {

struct PrepConfig {
    double missing_threshold = 0.5; // drop iff missing fraction >= this
    double nzv_freq_ratio = 19.0;   // drop needs ratio strictly above this
    double nzv_unique_pct = 0.1024; // ... AND unique percentage strictly below this
};

struct NzvStats {
    double freq_ratio; // inf for a single distinct value
    double unique_pct;
    bool drop;
};

// Frequency ratio of the two most common distinct values (after rounding to
// 12 significant digits) and the unique-value percentage. Both conditions
// must hold to drop.
NzvStats near_zero_variance(const std::vector<double>& non_missing,
                            const PrepConfig& cfg = {});

// True = drop. Fraction-based, strict at the boundary per the >= rule.
bool filter_missingness(std::size_t n_missing, std::size_t n_total, double threshold);

struct StandardizeResult {
    double mean;
    double sd; // sample sd, n-1
};

// Applies both column filters and z-scores the surviving analyte columns in
// place, recording statistics on every column.
void prepare_panel(ZipYearPanel& panel, const PrepConfig& cfg = {});

void write_panel_summary(const ZipYearPanel& panel, const std::string& path);

} // namespace waterscreen
