#pragma once

// Shared test scaffolding: throwaway directories and small deterministic
// panels built by hand so expected values can be worked out on paper.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "waterscreen/panel.hpp"
#include "waterscreen/rng.hpp"

namespace wstest {

struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("waterscreen_test_" + std::to_string(counter.fetch_add(1)) + "_" +
                std::to_string(std::hash<std::string>{}(std::filesystem::current_path().string()) % 100000));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path.string(); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
}

inline std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

// Full nz-by-ny grid with smoothly varying covariates. Groundwater is the
// only zip-constant covariate; everything else has within-zip variation.
// Analyte cells start missing; deaths start at zero.
inline waterscreen::ZipYearPanel grid_panel(int nz, int ny, int n_analytes) {
    waterscreen::ZipYearPanel p;
    for (int i = 0; i < nz; ++i) p.zip_ids.push_back(std::to_string(90001 + i));
    for (int t = 0; t < ny; ++t) p.year_values.push_back(2012 + t);
    for (int i = 0; i < nz; ++i) {
        for (int t = 0; t < ny; ++t) {
            p.zip_idx.push_back(i);
            p.year_idx.push_back(t);
            p.deaths.push_back(0.0);
            p.censored.push_back(0);
            p.population.push_back(50000.0 + 1000.0 * i + 250.0 * t);
            p.median_income.push_back(60000.0 + 2500.0 * ((i * 7 + t * 3) % 11));
            p.age_u5.push_back(5.0 + 0.1 * ((i + 2 * t) % 7));
            p.age_5_14.push_back(12.0 + 0.1 * ((2 * i + t) % 5));
            p.age_15_24.push_back(13.0 + 0.1 * ((i + 5 * t) % 6));
            p.age_25_64.push_back(52.0 - 0.1 * ((3 * i + t) % 8));
            p.age_65p.push_back(18.0 + 0.1 * ((i * (t + 1)) % 9));
            p.groundwater.push_back(i % 2 ? 1.0 : 0.0);
        }
    }
    p.analytes = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(p.n_rows()), n_analytes,
                                           std::numeric_limits<double>::quiet_NaN());
    for (int j = 0; j < n_analytes; ++j) {
        waterscreen::AnalyteInfo info;
        info.name = "x" + std::to_string(j + 1);
        info.kept = true;
        p.analyte_info.push_back(info);
    }
    return p;
}

// Poisson outcomes from a caller-supplied linear predictor (log scale,
// offset included). Per-row child streams keep draws content-addressed.
inline void simulate_deaths(waterscreen::ZipYearPanel& p, const std::vector<double>& eta,
                            std::uint64_t seed) {
    waterscreen::Rng rng(seed);
    for (std::size_t r = 0; r < p.n_rows(); ++r)
        p.deaths[r] = static_cast<double>(
            rng.child(static_cast<std::uint64_t>(r)).next_poisson(std::exp(eta[r])));
}

} // namespace wstest
