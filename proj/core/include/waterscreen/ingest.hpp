#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "waterscreen/panel.hpp"

namespace waterscreen {

struct SampleRecord {
    std::string pws_id;
    std::string analyte;
    int year;
    double value; // native units, >= 0; 0 means non-detect
};

struct CrosswalkEntry {
    std::string pws_id;
    std::string zip;
    double weight; // area fraction in [0,1]
};

struct DemographicsRow {
    std::string zip;
    int year;
    double population;
    double median_income; // NaN allowed
    std::array<double, 5> age_counts;
};

struct DeathsRow {
    std::string zip;
    int year;
    double deaths;
    bool censored;
    double age_adjusted_rate; // per 100k, NaN when the input lacks the column
};

struct RawData {
    std::vector<SampleRecord> samples;
    std::unordered_map<std::string, double> lods;
    std::vector<CrosswalkEntry> crosswalk;
    std::unordered_map<std::string, std::string> sources; // pws -> code
    std::vector<DemographicsRow> demographics;
    std::vector<DeathsRow> deaths;
    bool has_age_adjusted = false;
    std::unordered_map<std::string, std::string> classes; // analyte -> chemical class
};

struct IngestConfig {
    int year_min = 2012;
    int year_max = 2022;
    bool drop_censored = false;
};

// Data-quality events that do not stop the run; surfaced in report.json.
struct IngestReport {
    std::vector<std::string> unmapped_pws; // sorted, deduplicated
    std::size_t samples_total = 0;
    std::size_t samples_outside_window = 0;
    std::size_t samples_unmapped = 0;
    std::size_t zero_population_rows = 0;
    std::size_t age_excess_flagged = 0;
    std::size_t censored_rows_kept = 0;
    std::size_t censored_rows_dropped = 0;
    std::size_t zips_without_pws = 0;
    std::size_t pws_without_source = 0;
    std::vector<std::string> warnings;
};

// value == 0 marks a non-detect and becomes lod/sqrt(2); detected values
// pass through. The caller raises the missing-LOD error since only it knows
// the analyte name.
double impute_lod(double value, double lod);

// Lower weighted median: smallest value whose cumulative normalized weight
// reaches 0.5.
double weighted_median(const std::vector<double>& values, const std::vector<double>& weights);

// True iff any code is GW or GWP. Unknown codes are a validation error.
bool classify_groundwater(const std::vector<std::string>& codes);

// Percent of population in each of the five age bands.
std::array<double, 5> age_shares(const std::array<double, 5>& age_counts, double population);

RawData read_raw_files(const std::string& samples_path, const std::string& lods_path,
                       const std::string& crosswalk_path, const std::string& sources_path,
                       const std::string& demographics_path, const std::string& deaths_path,
                       const std::string& classes_path, // "" = none
                       const IngestConfig& cfg, IngestReport& report);

ZipYearPanel build_panel(const RawData& raw, const IngestConfig& cfg, IngestReport& report);

} // namespace waterscreen
