#include "waterscreen/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_set>

#include "waterscreen/csv.hpp"
#include "waterscreen/errors.hpp"
#include "waterscreen/stats.hpp"

namespace waterscreen {

double impute_lod(double value, double lod) {
    if (!(lod > 0.0)) throw ValidationError("LOD must be strictly positive");
    if (!(value >= 0.0)) throw ValidationError("sample value must be non-negative");
    if (value == 0.0) return lod / std::sqrt(2.0);
    return value;
}

double weighted_median(const std::vector<double>& values, const std::vector<double>& weights) {
    if (values.size() != weights.size())
        throw ValidationError("weighted_median: values and weights differ in length");
    if (values.empty()) throw ValidationError("weighted_median: empty input");
    std::vector<std::pair<double, double>> vw;
    vw.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) vw.emplace_back(values[i], weights[i]);
    return weighted_median_lower(std::move(vw));
}

namespace {

bool valid_source_code(const std::string& c) {
    return c == "GW" || c == "GWP" || c == "GU" || c == "SW" || c == "SWP" || c == "NA";
}

} // namespace

bool classify_groundwater(const std::vector<std::string>& codes) {
    if (codes.empty()) throw ValidationError("classify_groundwater: empty source-code set");
    bool gw = false;
    for (const auto& c : codes) {
        if (!valid_source_code(c))
            throw ValidationError("unknown water-source code '" + c + "'");
        if (c == "GW" || c == "GWP") gw = true;
    }
    return gw;
}

std::array<double, 5> age_shares(const std::array<double, 5>& age_counts, double population) {
    if (!(population > 0.0)) throw ValidationError("age_shares: population must be positive");
    std::array<double, 5> out{};
    for (std::size_t k = 0; k < 5; ++k) out[k] = age_counts[k] / population * 100.0;
    return out;
}

RawData read_raw_files(const std::string& samples_path, const std::string& lods_path,
                       const std::string& crosswalk_path, const std::string& sources_path,
                       const std::string& demographics_path, const std::string& deaths_path,
                       const std::string& classes_path, const IngestConfig& cfg,
                       IngestReport& report) {
    RawData raw;

    {
        CsvTable t = CsvTable::read_file(samples_path);
        std::size_t c_pws = t.col("pws_id"), c_an = t.col("analyte"), c_yr = t.col("year"),
                    c_val = t.col("value");
        raw.samples.reserve(t.rows());
        for (std::size_t r = 0; r < t.rows(); ++r) {
            report.samples_total++;
            int year = static_cast<int>(t.integer(r, c_yr));
            if (year < cfg.year_min || year > cfg.year_max) {
                report.samples_outside_window++;
                continue;
            }
            double v = t.num(r, c_val);
            if (std::isnan(v) || v < 0.0) {
                throw ValidationError(samples_path + ": row " + std::to_string(r + 2) +
                                      ": sample value must be a non-negative number");
            }
            raw.samples.push_back({t.cell(r, c_pws), t.cell(r, c_an), year, v});
        }
    }

    {
        CsvTable t = CsvTable::read_file(lods_path);
        std::size_t c_an = t.col("analyte"), c_lod = t.col("lod");
        for (std::size_t r = 0; r < t.rows(); ++r) {
            const std::string& a = t.cell(r, c_an);
            double lod = t.num(r, c_lod);
            if (!(lod > 0.0))
                throw ValidationError(lods_path + ": LOD for '" + a + "' must be positive");
            if (!raw.lods.emplace(a, lod).second)
                throw ValidationError(lods_path + ": duplicate LOD entry for '" + a + "'");
        }
    }

    {
        CsvTable t = CsvTable::read_file(crosswalk_path);
        std::size_t c_pws = t.col("pws_id"), c_zip = t.col("zip"), c_w = t.col("weight");
        std::set<std::pair<std::string, std::string>> seen;
        std::unordered_map<std::string, double> pws_weight_sum;
        for (std::size_t r = 0; r < t.rows(); ++r) {
            CrosswalkEntry e{t.cell(r, c_pws), t.cell(r, c_zip), t.num(r, c_w)};
            if (std::isnan(e.weight) || e.weight < 0.0 || e.weight > 1.0)
                throw ValidationError(crosswalk_path + ": row " + std::to_string(r + 2) +
                                      ": weight must lie in [0,1]");
            if (!seen.emplace(e.pws_id, e.zip).second)
                throw ValidationError(crosswalk_path + ": duplicate (pws, zip) pair (" +
                                      e.pws_id + ", " + e.zip + ")");
            pws_weight_sum[e.pws_id] += e.weight;
            raw.crosswalk.push_back(std::move(e));
        }
        for (const auto& [pws, s] : pws_weight_sum) {
            if (s > 1.0 + 1e-9)
                throw ValidationError(crosswalk_path + ": weights for PWS '" + pws +
                                      "' sum to " + CsvWriter::format_double(s) + " > 1");
        }
    }

    {
        CsvTable t = CsvTable::read_file(sources_path);
        std::size_t c_pws = t.col("pws_id"), c_code = t.col("source_code");
        for (std::size_t r = 0; r < t.rows(); ++r) {
            const std::string& pws = t.cell(r, c_pws);
            const std::string& code = t.cell(r, c_code);
            if (!valid_source_code(code))
                throw ValidationError(sources_path + ": unknown water-source code '" + code +
                                      "' for PWS '" + pws + "'");
            if (!raw.sources.emplace(pws, code).second)
                throw ValidationError(sources_path + ": duplicate entry for PWS '" + pws + "'");
        }
    }

    {
        CsvTable t = CsvTable::read_file(demographics_path);
        std::size_t c_zip = t.col("zip"), c_yr = t.col("year"), c_pop = t.col("population"),
                    c_inc = t.col("median_income");
        std::size_t c_age[5] = {t.col("age_u5"), t.col("age_5_14"), t.col("age_15_24"),
                                t.col("age_25_64"), t.col("age_65p")};
        std::set<std::pair<std::string, int>> seen;
        for (std::size_t r = 0; r < t.rows(); ++r) {
            DemographicsRow d;
            d.zip = t.cell(r, c_zip);
            d.year = static_cast<int>(t.integer(r, c_yr));
            if (d.year < cfg.year_min || d.year > cfg.year_max) continue;
            d.population = t.num(r, c_pop);
            if (std::isnan(d.population) || d.population < 0.0)
                throw ValidationError(demographics_path + ": row " + std::to_string(r + 2) +
                                      ": population must be a non-negative number");
            d.median_income = t.num(r, c_inc);
            double total_age = 0.0;
            for (std::size_t k = 0; k < 5; ++k) {
                d.age_counts[k] = t.num(r, c_age[k]);
                if (std::isnan(d.age_counts[k]) || d.age_counts[k] < 0.0)
                    throw ValidationError(demographics_path + ": row " + std::to_string(r + 2) +
                                          ": age counts must be non-negative numbers");
                total_age += d.age_counts[k];
            }
            if (d.population > 0.0 && total_age > d.population) {
                if (total_age > 1.02 * d.population)
                    throw ValidationError(demographics_path + ": zip " + d.zip + " year " +
                                          std::to_string(d.year) + ": age counts exceed population by more than 2%");
                report.age_excess_flagged++;
            }
            if (!seen.emplace(d.zip, d.year).second)
                throw ValidationError(demographics_path + ": duplicate (zip, year) row (" +
                                      d.zip + ", " + std::to_string(d.year) + ")");
            raw.demographics.push_back(std::move(d));
        }
    }

    {
        CsvTable t = CsvTable::read_file(deaths_path);
        std::size_t c_zip = t.col("zip"), c_yr = t.col("year"), c_d = t.col("deaths"),
                    c_c = t.col("censored");
        raw.has_age_adjusted = t.has_column("age_adjusted_rate");
        std::size_t c_rate = raw.has_age_adjusted ? t.col("age_adjusted_rate") : 0;
        std::set<std::pair<std::string, int>> seen;
        for (std::size_t r = 0; r < t.rows(); ++r) {
            DeathsRow d;
            d.zip = t.cell(r, c_zip);
            d.year = static_cast<int>(t.integer(r, c_yr));
            if (d.year < cfg.year_min || d.year > cfg.year_max) continue;
            d.deaths = t.num(r, c_d);
            if (std::isnan(d.deaths) || d.deaths < 0.0)
                throw ValidationError(deaths_path + ": row " + std::to_string(r + 2) +
                                      ": deaths must be a non-negative number");
            long long cens = t.integer(r, c_c);
            if (cens != 0 && cens != 1)
                throw ValidationError(deaths_path + ": row " + std::to_string(r + 2) +
                                      ": censored flag must be 0 or 1");
            d.censored = cens == 1;
            if (d.censored && d.deaths != 0.0)
                throw ValidationError(deaths_path + ": zip " + d.zip + " year " +
                                      std::to_string(d.year) + ": censored rows must report 0 deaths");
            d.age_adjusted_rate =
                raw.has_age_adjusted ? t.num(r, c_rate) : std::numeric_limits<double>::quiet_NaN();
            if (!seen.emplace(d.zip, d.year).second)
                throw ValidationError(deaths_path + ": duplicate (zip, year) row (" + d.zip +
                                      ", " + std::to_string(d.year) + ")");
            raw.deaths.push_back(std::move(d));
        }
    }

    if (!classes_path.empty()) {
        CsvTable t = CsvTable::read_file(classes_path);
        std::size_t c_an = t.col("analyte"), c_cl = t.col("class");
        for (std::size_t r = 0; r < t.rows(); ++r)
            raw.classes[t.cell(r, c_an)] = t.cell(r, c_cl);
    }

    return raw;
}

ZipYearPanel build_panel(const RawData& raw, const IngestConfig& cfg, IngestReport& report) {
    // pws -> crosswalk targets
    std::unordered_map<std::string, std::vector<std::pair<std::string, double>>> pws_zips;
    std::unordered_map<std::string, std::vector<std::string>> zip_pws;
    for (const auto& e : raw.crosswalk) {
        pws_zips[e.pws_id].emplace_back(e.zip, e.weight);
        zip_pws[e.zip].push_back(e.pws_id);
    }

    // (zip, year) rows: the demographics-deaths intersection.
    std::map<std::pair<std::string, int>, const DeathsRow*> deaths_by_key;
    for (const auto& d : raw.deaths) deaths_by_key[{d.zip, d.year}] = &d;

    struct RowDraft {
        const DemographicsRow* dem;
        const DeathsRow* dth;
    };
    std::map<std::pair<std::string, int>, RowDraft> rows;
    for (const auto& d : raw.demographics) {
        auto it = deaths_by_key.find({d.zip, d.year});
        if (it == deaths_by_key.end()) continue;
        if (d.population == 0.0) {
            report.zero_population_rows++;
            continue;
        }
        if (it->second->censored) {
            if (cfg.drop_censored) {
                report.censored_rows_dropped++;
                continue;
            }
            report.censored_rows_kept++;
        }
        rows[{d.zip, d.year}] = {&d, it->second};
    }

    ZipYearPanel p;
    {
        std::set<std::string> zips;
        std::set<int> years;
        for (const auto& [key, rd] : rows) {
            zips.insert(key.first);
            years.insert(key.second);
        }
        p.zip_ids.assign(zips.begin(), zips.end());
        p.year_values.assign(years.begin(), years.end());
    }
    std::unordered_map<std::string, int> zip_code;
    for (std::size_t i = 0; i < p.zip_ids.size(); ++i) zip_code[p.zip_ids[i]] = static_cast<int>(i);
    std::unordered_map<int, int> year_code;
    for (std::size_t i = 0; i < p.year_values.size(); ++i) year_code[p.year_values[i]] = static_cast<int>(i);

    p.has_age_adjusted = raw.has_age_adjusted;
    for (const auto& [key, rd] : rows) {
        p.zip_idx.push_back(zip_code[key.first]);
        p.year_idx.push_back(year_code[key.second]);
        p.deaths.push_back(rd.dth->deaths);
        p.censored.push_back(rd.dth->censored ? 1 : 0);
        p.population.push_back(rd.dem->population);
        p.median_income.push_back(rd.dem->median_income);
        auto shares = age_shares(rd.dem->age_counts, rd.dem->population);
        p.age_u5.push_back(shares[0]);
        p.age_5_14.push_back(shares[1]);
        p.age_15_24.push_back(shares[2]);
        p.age_25_64.push_back(shares[3]);
        p.age_65p.push_back(shares[4]);
        if (p.has_age_adjusted) p.age_adjusted_rate.push_back(rd.dth->age_adjusted_rate);
        p.groundwater.push_back(0.0); // filled below once zip flags are known
    }

    // Groundwater flag per zip from every PWS the crosswalk maps to it.
    std::vector<double> zip_gw(p.zip_ids.size(), 0.0);
    for (std::size_t zi = 0; zi < p.zip_ids.size(); ++zi) {
        auto it = zip_pws.find(p.zip_ids[zi]);
        if (it == zip_pws.end() || it->second.empty()) {
            report.zips_without_pws++;
            continue;
        }
        std::vector<std::string> codes;
        for (const auto& pws : it->second) {
            auto s = raw.sources.find(pws);
            if (s == raw.sources.end()) {
                report.pws_without_source++;
                codes.push_back("NA");
            } else {
                codes.push_back(s->second);
            }
        }
        zip_gw[zi] = classify_groundwater(codes) ? 1.0 : 0.0;
    }
    for (std::size_t r = 0; r < p.n_rows(); ++r) p.groundwater[r] = zip_gw[p.zip_idx[r]];

    // Analyte universe: every analyte observed in the window, sorted by name.
    std::set<std::string> analyte_set;
    for (const auto& s : raw.samples) analyte_set.insert(s.analyte);
    std::unordered_map<std::string, int> analyte_code;
    for (const auto& a : analyte_set) {
        int j = static_cast<int>(p.analyte_info.size());
        analyte_code[a] = j;
        AnalyteInfo info;
        info.name = a;
        auto c = raw.classes.find(a);
        if (c != raw.classes.end()) info.chem_class = c->second;
        p.analyte_info.push_back(std::move(info));
    }

    // Group samples by (pws, analyte, year); each group's crosswalk weight is
    // split equally across its samples so a PWS's influence is its areal
    // share regardless of sampling frequency.
    std::map<std::tuple<std::string, int, int>, std::vector<double>> groups; // (pws, analyte, year idx-able)
    std::set<std::string> unmapped;
    for (const auto& s : raw.samples) {
        auto pit = pws_zips.find(s.pws_id);
        if (pit == pws_zips.end()) {
            report.samples_unmapped++;
            unmapped.insert(s.pws_id);
            continue;
        }
        auto lod_it = raw.lods.find(s.analyte);
        double v;
        if (s.value == 0.0) {
            if (lod_it == raw.lods.end())
                throw ValidationError("non-detect for analyte '" + s.analyte +
                                      "' has no LOD entry");
            v = impute_lod(s.value, lod_it->second);
        } else {
            v = s.value;
        }
        groups[{s.pws_id, analyte_code[s.analyte], s.year}].push_back(v);
    }
    report.unmapped_pws.assign(unmapped.begin(), unmapped.end());

    const std::size_t n = p.n_rows();
    const std::size_t k = p.analyte_info.size();
    p.analytes = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n),
                                           static_cast<Eigen::Index>(k),
                                           std::numeric_limits<double>::quiet_NaN());

    PanelRowIndex row_index(p);

    // Accumulate (value, weight) contributions per panel cell.
    std::map<std::pair<int, int>, std::pair<std::vector<double>, std::vector<double>>> cells;
    for (const auto& [key, values] : groups) {
        const auto& [pws, aj, year] = key;
        auto y_it = year_code.find(year);
        if (y_it == year_code.end()) continue; // year absent from the outcome panel
        double per_sample = 1.0 / static_cast<double>(values.size());
        for (const auto& [zip, w] : pws_zips.at(pws)) {
            auto z_it = zip_code.find(zip);
            if (z_it == zip_code.end()) continue; // zip lacks demographics or deaths
            int row = row_index.row(z_it->second, y_it->second);
            if (row < 0) continue;
            auto& cell = cells[{row, aj}];
            for (double v : values) {
                cell.first.push_back(v);
                cell.second.push_back(w * per_sample);
            }
        }
    }
    for (const auto& [key, vw] : cells) {
        double total_w = 0.0;
        for (double w : vw.second) total_w += w;
        if (total_w <= 0.0) continue; // zero-weight crosswalk rows contribute nothing
        p.analytes(key.first, key.second) = weighted_median(vw.first, vw.second);
    }

    if (!report.unmapped_pws.empty()) {
        report.warnings.push_back(std::to_string(report.unmapped_pws.size()) +
                                  " PWS ids in samples are absent from the crosswalk; their samples were excluded");
    }
    return p;
}

} // namespace waterscreen
