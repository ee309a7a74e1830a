#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

namespace waterscreen {

// Per-analyte column metadata. Filter statistics are filled by panel
// preparation; mean/sd are the standardization constants and stay valid for
// lagged copies of the column so effect sizes share units across lags.
struct AnalyteInfo {
    std::string name;
    std::string chem_class = "unknown";
    std::size_t n_nonmissing = 0;
    double missing_pct = std::nan("");
    double freq_ratio = std::nan("");
    double unique_pct = std::nan("");
    bool kept = true;
    bool standardized = false;
    double mean = std::nan("");
    double sd = std::nan("");
};

// Columnar zip-by-year analysis dataset. One row per (zip, year); analyte
// concentrations sit in an n x k matrix with NaN as the missing marker.
// Immutable after preparation; regressions subset rows per analyte.
struct ZipYearPanel {
    std::vector<std::string> zip_ids; // index -> zip label
    std::vector<int> year_values;     // index -> calendar year, ascending

    // Row-aligned vectors, one entry per (zip, year) row.
    std::vector<int> zip_idx;
    std::vector<int> year_idx;
    std::vector<double> deaths;
    std::vector<unsigned char> censored;
    std::vector<double> population;
    std::vector<double> median_income;
    std::vector<double> age_u5;
    std::vector<double> age_5_14;
    std::vector<double> age_15_24;
    std::vector<double> age_25_64;
    std::vector<double> age_65p;
    std::vector<double> groundwater; // 0/1, constant within zip

    bool has_age_adjusted = false;
    std::vector<double> age_adjusted_rate; // deaths per 100k, optional

    Eigen::MatrixXd analytes; // rows x analyte count, NaN = missing
    std::vector<AnalyteInfo> analyte_info;

    std::size_t n_rows() const { return zip_idx.size(); }
    std::size_t n_analytes() const { return analyte_info.size(); }

    int analyte_index(const std::string& name) const {
        for (std::size_t j = 0; j < analyte_info.size(); ++j)
            if (analyte_info[j].name == name) return static_cast<int>(j);
        return -1;
    }

    std::vector<int> kept_analytes() const {
        std::vector<int> out;
        for (std::size_t j = 0; j < analyte_info.size(); ++j)
            if (analyte_info[j].kept) out.push_back(static_cast<int>(j));
        return out;
    }

    // Row lookup by (zip code, year code); -1 when the cell is absent.
    int find_row(int zi, int yi) const {
        for (std::size_t r = 0; r < zip_idx.size(); ++r)
            if (zip_idx[r] == zi && year_idx[r] == yi) return static_cast<int>(r);
        return -1;
    }
};

// Dense (zip, year) -> row index map; avoids the linear scan in find_row for
// lag construction over the whole panel.
class PanelRowIndex {
public:
    explicit PanelRowIndex(const ZipYearPanel& p)
        : n_years_(p.year_values.size()),
          map_(p.zip_ids.size() * p.year_values.size(), -1) {
        for (std::size_t r = 0; r < p.n_rows(); ++r)
            map_[static_cast<std::size_t>(p.zip_idx[r]) * n_years_ + p.year_idx[r]] =
                static_cast<int>(r);
    }
    int row(int zi, int yi) const {
        if (yi < 0 || static_cast<std::size_t>(yi) >= n_years_) return -1;
        return map_[static_cast<std::size_t>(zi) * n_years_ + yi];
    }

private:
    std::size_t n_years_;
    std::vector<int> map_;
};

} // namespace waterscreen
