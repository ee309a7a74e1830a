#include "waterscreen/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "waterscreen/csv.hpp"
#include "waterscreen/doseresponse.hpp"
#include "waterscreen/errors.hpp"
#include "waterscreen/hash.hpp"
#include "waterscreen/ingest.hpp"
#include "waterscreen/laglead.hpp"
#include "waterscreen/mixtures.hpp"
#include "waterscreen/panelprep.hpp"
#include "waterscreen/screening.hpp"
#include "waterscreen/synth.hpp"

#include "json.hpp"

namespace waterscreen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

long long parse_ll(const std::string& key, const std::string& v) {
    errno = 0;
    char* end = nullptr;
    long long x = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0' || errno == ERANGE) {
        throw ConfigError("config key '" + key + "' needs an integer, got '" + v + "'");
    }
    return x;
}

int parse_int(const std::string& key, const std::string& v) {
    long long x = parse_ll(key, v);
    if (x < INT_MIN || x > INT_MAX) throw ConfigError("config key '" + key + "' is out of range");
    return static_cast<int>(x);
}

double parse_dbl(const std::string& key, const std::string& v) {
    errno = 0;
    char* end = nullptr;
    double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0' || errno == ERANGE) {
        throw ConfigError("config key '" + key + "' needs a number, got '" + v + "'");
    }
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "' needs true/false, got '" + v + "'");
}

// %.10g when that round-trips, %.17g otherwise. Keeps echoed configs and the
// panel interchange file exact without burying common values in digits.
std::string fmt_exact(double v) {
    if (std::isnan(v)) return "NA";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    if (std::strtod(buf, nullptr) == v) return buf;
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string opath(const RunConfig& cfg, const char* name) {
    return (fs::path(cfg.out_dir) / name).string();
}

std::string synth_path(const RunConfig& cfg, const char* name) {
    return (fs::path(cfg.out_dir) / "synthetic" / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

bool file_exists(const std::string& p) {
    std::error_code ec;
    return fs::exists(p, ec);
}

void validate_config(const RunConfig& c) {
    if (c.out_dir.empty()) throw ConfigError("out_dir must not be empty");
    if (c.year_min > c.year_max) throw ConfigError("year_min exceeds year_max");
    if (!(c.missing_threshold > 0.0 && c.missing_threshold <= 1.0))
        throw ConfigError("missing_threshold must be in (0, 1]");
    if (!(c.nzv_freq_ratio > 0.0)) throw ConfigError("nzv_freq_ratio must be positive");
    if (!(c.nzv_unique_pct > 0.0)) throw ConfigError("nzv_unique_pct must be positive");
    if (!(c.bh_alpha > 0.0 && c.bh_alpha < 1.0)) throw ConfigError("bh_alpha must be in (0, 1)");
    if (!(c.ladder_alpha > 0.0 && c.ladder_alpha < 1.0))
        throw ConfigError("ladder_alpha must be in (0, 1)");
    if (!(c.network_threshold >= 0.0 && c.network_threshold <= 1.0))
        throw ConfigError("network_threshold must be in [0, 1]");
    if (c.quantiles < 2) throw ConfigError("quantiles must be at least 2");
    if (c.year_spline_df < 1) throw ConfigError("year_spline_df must be at least 1");
    if (c.n_lags < 1) throw ConfigError("n_lags must be at least 1");
    if (c.n_leads < 1) throw ConfigError("n_leads must be at least 1");
    if (c.gam_knots < 1) throw ConfigError("gam_knots must be at least 1");
    if (c.gam_degree < 1) throw ConfigError("gam_degree must be at least 1");
    if (c.gam_grid_points < 2) throw ConfigError("gam_grid_points must be at least 2");
    if (c.lambda_count < 1) throw ConfigError("lambda_count must be at least 1");
    if (!(c.lambda_min > 0.0)) throw ConfigError("lambda_min must be positive");
    if (c.lambda_max < c.lambda_min) throw ConfigError("lambda_max must be >= lambda_min");
    if (c.threads < 0) throw ConfigError("threads must be >= 0");
    if (c.synth_zips < 2) throw ConfigError("synth_zips must be at least 2");
    if (c.synth_years < 2) throw ConfigError("synth_years must be at least 2");
    if (c.synth_analytes < 1) throw ConfigError("synth_analytes must be at least 1");
    if (!(c.synth_missing_rate >= 0.0 && c.synth_missing_rate < 1.0))
        throw ConfigError("synth_missing_rate must be in [0, 1)");
    if (c.synth_censor_threshold < 0) throw ConfigError("synth_censor_threshold must be >= 0");
    if (c.synth_beta_index >= c.synth_analytes)
        throw ConfigError("synth_beta_index exceeds synth_analytes");
}

class StageTimer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string report_path(const RunConfig& cfg) { return opath(cfg, "report.json"); }

json load_report(const RunConfig& cfg) {
    std::string path = report_path(cfg);
    if (file_exists(path)) {
        std::ifstream is(path);
        if (is) {
            json j = json::parse(is, nullptr, false);
            if (!j.is_discarded() && j.is_object()) {
                if (!j.contains("stages") || !j["stages"].is_object()) j["stages"] = json::object();
                return j;
            }
        }
    }
    json j = json::object();
    j["stages"] = json::object();
    return j;
}

void save_report(const RunConfig& cfg, json& j) {
    json echo = json::object();
    for (const auto& [k, v] : config_to_kv(cfg)) echo[k] = v;
    j["config"] = std::move(echo);
    std::string path = report_path(cfg);
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << j.dump(2) << '\n';
    if (!os) throw IoError("write failure on " + path);
    write_config_echo(cfg, opath(cfg, "run_config.cfg"));
}

// Downstream stages whose inputs a rerun of the key stage would refresh.
// Staleness propagates transitively even when an intermediate stage entry is
// absent from the report.
const std::map<std::string, std::vector<std::string>>& stage_dependents() {
    static const std::map<std::string, std::vector<std::string>> deps = {
        {"synth", {"build-panel"}},
        {"build-panel", {"screen", "dlm", "mixtures", "doseresponse"}},
        {"screen", {"dlm", "doseresponse"}},
    };
    return deps;
}

void mark_stale(json& stages, const std::string& stage) {
    auto it = stage_dependents().find(stage);
    if (it == stage_dependents().end()) return;
    for (const std::string& dep : it->second) {
        if (stages.contains(dep) && stages[dep].value("status", std::string()) == "ok") {
            stages[dep]["status"] = "stale";
        }
        mark_stale(stages, dep);
    }
}

std::string relative_output(const RunConfig& cfg, const std::string& path) {
    std::error_code ec;
    fs::path rel = fs::relative(path, cfg.out_dir, ec);
    if (ec || rel.empty()) return path;
    return rel.generic_string();
}

void finish_stage(const RunConfig& cfg, const std::string& stage, double wall,
                  const json& details, const std::vector<std::string>& outputs) {
    json j = load_report(cfg);
    json entry = json::object();
    entry["status"] = "ok";
    entry["wall_seconds"] = wall;
    json outs = json::object();
    for (const std::string& f : outputs) outs[relative_output(cfg, f)] = hash_file_hex(f);
    entry["outputs"] = std::move(outs);
    if (details.is_object()) entry.update(details);
    j["stages"][stage] = std::move(entry);
    mark_stale(j["stages"], stage);
    save_report(cfg, j);
}

void record_failure(const RunConfig& cfg, const std::string& stage, const std::string& message) {
    try {
        json j = load_report(cfg);
        json entry = json::object();
        entry["status"] = "failed";
        entry["error"] = message;
        j["stages"][stage] = std::move(entry);
        mark_stale(j["stages"], stage);
        save_report(cfg, j);
    } catch (...) {
        // The original failure is the one worth reporting.
    }
}

void need_stage_file(const std::string& path, const char* stage, const char* producer) {
    if (!file_exists(path)) {
        throw DependencyError(std::string("stage '") + stage + "' requires output of stage '" +
                              producer + "' (missing " + path + ")");
    }
}

double jd(const json& o, const char* key) {
    const auto it = o.find(key);
    if (it == o.end() || !it->is_number()) return std::nan("");
    return it->get<double>();
}

std::string analyte_slug(const std::string& name) {
    std::string s;
    s.reserve(name.size());
    for (char c : name) {
        if (std::isalnum(static_cast<unsigned char>(c))) s.push_back(c);
        else s.push_back('_');
    }
    return s;
}

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(s);
    while (std::getline(ss, cur, ',')) {
        std::string t = trim(cur);
        if (!t.empty() && std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    return out;
}

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

} // namespace

RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: " + t);
        }
        apply_config_kv(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

void apply_config_kv(RunConfig& c, const std::string& key, const std::string& value) {
    if (key == "samples") { c.samples = value; return; }
    if (key == "lods") { c.lods = value; return; }
    if (key == "crosswalk") { c.crosswalk = value; return; }
    if (key == "sources") { c.sources = value; return; }
    if (key == "demographics") { c.demographics = value; return; }
    if (key == "deaths") { c.deaths = value; return; }
    if (key == "classes") { c.classes = value; return; }
    if (key == "mcl") { c.mcl = value; return; }
    if (key == "out_dir") { c.out_dir = value; return; }
    if (key == "year_min") { c.year_min = parse_int(key, value); return; }
    if (key == "year_max") { c.year_max = parse_int(key, value); return; }
    if (key == "drop_censored") { c.drop_censored = parse_bool(key, value); return; }
    if (key == "missing_threshold") { c.missing_threshold = parse_dbl(key, value); return; }
    if (key == "nzv_freq_ratio") { c.nzv_freq_ratio = parse_dbl(key, value); return; }
    if (key == "nzv_unique_pct") { c.nzv_unique_pct = parse_dbl(key, value); return; }
    if (key == "bh_alpha") { c.bh_alpha = parse_dbl(key, value); return; }
    if (key == "ladder_alpha") { c.ladder_alpha = parse_dbl(key, value); return; }
    if (key == "clip_negative") { c.clip_negative = parse_bool(key, value); return; }
    if (key == "network_threshold") { c.network_threshold = parse_dbl(key, value); return; }
    if (key == "quantiles") { c.quantiles = parse_int(key, value); return; }
    if (key == "year_spline_df") { c.year_spline_df = parse_int(key, value); return; }
    if (key == "qgcomp_clustered") { c.qgcomp_clustered = parse_bool(key, value); return; }
    if (key == "mixtures_file") { c.mixtures_file = value; return; }
    if (key == "n_lags") { c.n_lags = parse_int(key, value); return; }
    if (key == "n_leads") { c.n_leads = parse_int(key, value); return; }
    if (key == "gam_knots") { c.gam_knots = parse_int(key, value); return; }
    if (key == "gam_degree") { c.gam_degree = parse_int(key, value); return; }
    if (key == "gam_lambda") { c.gam_lambda = parse_dbl(key, value); return; }
    if (key == "lambda_min") { c.lambda_min = parse_dbl(key, value); return; }
    if (key == "lambda_max") { c.lambda_max = parse_dbl(key, value); return; }
    if (key == "lambda_count") { c.lambda_count = parse_int(key, value); return; }
    if (key == "gam_grid_points") { c.gam_grid_points = parse_int(key, value); return; }
    if (key == "doseresponse_analytes") { c.doseresponse_analytes = value; return; }
    if (key == "seed") { c.seed = parse_ll(key, value); return; }
    if (key == "threads") { c.threads = parse_int(key, value); return; }
    if (key == "synth_zips") { c.synth_zips = parse_int(key, value); return; }
    if (key == "synth_years") { c.synth_years = parse_int(key, value); return; }
    if (key == "synth_analytes") { c.synth_analytes = parse_int(key, value); return; }
    if (key == "synth_beta_index") { c.synth_beta_index = parse_int(key, value); return; }
    if (key == "synth_beta_value") { c.synth_beta_value = parse_dbl(key, value); return; }
    if (key == "synth_missing_rate") { c.synth_missing_rate = parse_dbl(key, value); return; }
    if (key == "synth_censor_threshold") { c.synth_censor_threshold = parse_int(key, value); return; }
    throw ConfigError("unknown config key: " + key);
}

std::vector<std::pair<std::string, std::string>> config_to_kv(const RunConfig& c) {
    std::vector<std::pair<std::string, std::string>> kv;
    auto S = [&](const char* k, const std::string& v) { kv.emplace_back(k, v); };
    auto I = [&](const char* k, long long v) { S(k, std::to_string(v)); };
    auto D = [&](const char* k, double v) { S(k, fmt_exact(v)); };
    auto B = [&](const char* k, bool v) { S(k, v ? "true" : "false"); };
    S("samples", c.samples);
    S("lods", c.lods);
    S("crosswalk", c.crosswalk);
    S("sources", c.sources);
    S("demographics", c.demographics);
    S("deaths", c.deaths);
    S("classes", c.classes);
    S("mcl", c.mcl);
    S("out_dir", c.out_dir);
    I("year_min", c.year_min);
    I("year_max", c.year_max);
    B("drop_censored", c.drop_censored);
    D("missing_threshold", c.missing_threshold);
    D("nzv_freq_ratio", c.nzv_freq_ratio);
    D("nzv_unique_pct", c.nzv_unique_pct);
    D("bh_alpha", c.bh_alpha);
    D("ladder_alpha", c.ladder_alpha);
    B("clip_negative", c.clip_negative);
    D("network_threshold", c.network_threshold);
    I("quantiles", c.quantiles);
    I("year_spline_df", c.year_spline_df);
    B("qgcomp_clustered", c.qgcomp_clustered);
    S("mixtures_file", c.mixtures_file);
    I("n_lags", c.n_lags);
    I("n_leads", c.n_leads);
    I("gam_knots", c.gam_knots);
    I("gam_degree", c.gam_degree);
    D("gam_lambda", c.gam_lambda);
    D("lambda_min", c.lambda_min);
    D("lambda_max", c.lambda_max);
    I("lambda_count", c.lambda_count);
    I("gam_grid_points", c.gam_grid_points);
    S("doseresponse_analytes", c.doseresponse_analytes);
    I("seed", c.seed);
    I("threads", c.threads);
    I("synth_zips", c.synth_zips);
    I("synth_years", c.synth_years);
    I("synth_analytes", c.synth_analytes);
    I("synth_beta_index", c.synth_beta_index);
    D("synth_beta_value", c.synth_beta_value);
    D("synth_missing_rate", c.synth_missing_rate);
    I("synth_censor_threshold", c.synth_censor_threshold);
    return kv;
}

void write_config_echo(const RunConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    for (const auto& [k, v] : config_to_kv(cfg)) os << k << '=' << v << '\n';
    if (!os) throw IoError("write failure on " + path);
}

int resolve_threads(const RunConfig& cfg) {
    if (cfg.threads > 0) return cfg.threads;
    if (const char* env = std::getenv("WATERSCREEN_THREADS")) {
        errno = 0;
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || errno == ERANGE || v <= 0 || v > INT_MAX) {
            throw ConfigError("WATERSCREEN_THREADS must be a positive integer");
        }
        return static_cast<int>(v);
    }
    return 1;
}

void save_panel(const ZipYearPanel& p, const std::string& csv_path, const std::string& meta_path) {
    std::vector<int> kept = p.kept_analytes();

    CsvWriter w(csv_path);
    std::vector<std::string> header = {"zip",        "year",          "deaths",
                                       "censored",   "population",    "median_income",
                                       "age_under5", "age_5_14",      "age_15_24",
                                       "age_25_64",  "age_65_plus",   "groundwater"};
    if (p.has_age_adjusted) header.push_back("age_adjusted_rate");
    for (int j : kept) header.push_back(p.analyte_info[j].name);
    w.write_row(header);
    std::vector<std::string> row;
    for (std::size_t r = 0; r < p.n_rows(); ++r) {
        row.clear();
        row.push_back(p.zip_ids[p.zip_idx[r]]);
        row.push_back(CsvWriter::format_int(p.year_values[p.year_idx[r]]));
        row.push_back(fmt_exact(p.deaths[r]));
        row.push_back(p.censored[r] ? "1" : "0");
        row.push_back(fmt_exact(p.population[r]));
        row.push_back(fmt_exact(p.median_income[r]));
        row.push_back(fmt_exact(p.age_u5[r]));
        row.push_back(fmt_exact(p.age_5_14[r]));
        row.push_back(fmt_exact(p.age_15_24[r]));
        row.push_back(fmt_exact(p.age_25_64[r]));
        row.push_back(fmt_exact(p.age_65p[r]));
        row.push_back(fmt_exact(p.groundwater[r]));
        if (p.has_age_adjusted) row.push_back(fmt_exact(p.age_adjusted_rate[r]));
        for (int j : kept) row.push_back(fmt_exact(p.analytes(r, j)));
        w.write_row(row);
    }
    w.close();

    json meta = json::object();
    meta["zip_ids"] = p.zip_ids;
    meta["year_values"] = p.year_values;
    meta["has_age_adjusted"] = p.has_age_adjusted;
    meta["n_rows"] = p.n_rows();
    json arr = json::array();
    for (const AnalyteInfo& info : p.analyte_info) {
        json a = json::object();
        a["name"] = info.name;
        a["chem_class"] = info.chem_class;
        a["n_nonmissing"] = info.n_nonmissing;
        a["missing_pct"] = info.missing_pct;
        a["freq_ratio"] = info.freq_ratio;
        a["unique_pct"] = info.unique_pct;
        a["kept"] = info.kept;
        a["standardized"] = info.standardized;
        a["mean"] = info.mean;
        a["sd"] = info.sd;
        arr.push_back(std::move(a));
    }
    meta["analytes"] = std::move(arr);
    std::ofstream os(meta_path);
    if (!os) throw IoError("cannot write " + meta_path);
    os << meta.dump(2) << '\n';
    if (!os) throw IoError("write failure on " + meta_path);
}

ZipYearPanel load_panel(const std::string& csv_path, const std::string& meta_path) {
    std::ifstream is(meta_path);
    if (!is) throw IoError("cannot open " + meta_path);
    json meta;
    try {
        is >> meta;
    } catch (const std::exception& e) {
        throw ParseError("invalid JSON in " + meta_path + ": " + e.what());
    }

    ZipYearPanel p;
    std::vector<AnalyteInfo> kept_info;
    std::size_t meta_rows = 0;
    try {
        meta.at("zip_ids").get_to(p.zip_ids);
        meta.at("year_values").get_to(p.year_values);
        p.has_age_adjusted = meta.at("has_age_adjusted").get<bool>();
        meta_rows = meta.at("n_rows").get<std::size_t>();
        for (const json& a : meta.at("analytes")) {
            if (!a.at("kept").get<bool>()) continue;
            AnalyteInfo info;
            info.name = a.at("name").get<std::string>();
            info.chem_class = a.at("chem_class").get<std::string>();
            info.n_nonmissing = a.at("n_nonmissing").get<std::size_t>();
            info.missing_pct = jd(a, "missing_pct");
            info.freq_ratio = jd(a, "freq_ratio");
            info.unique_pct = jd(a, "unique_pct");
            info.kept = true;
            info.standardized = a.at("standardized").get<bool>();
            info.mean = jd(a, "mean");
            info.sd = jd(a, "sd");
            kept_info.push_back(std::move(info));
        }
    } catch (const json::exception& e) {
        throw ParseError("panel metadata " + meta_path + " is malformed: " + e.what());
    }

    CsvTable t = CsvTable::read_file(csv_path);
    std::size_t n = t.rows();
    if (n != meta_rows) {
        throw ParseError(csv_path + " has " + std::to_string(n) + " rows but metadata says " +
                         std::to_string(meta_rows));
    }

    std::unordered_map<std::string, int> zip_code;
    for (std::size_t i = 0; i < p.zip_ids.size(); ++i) zip_code[p.zip_ids[i]] = static_cast<int>(i);
    std::unordered_map<int, int> year_code;
    for (std::size_t i = 0; i < p.year_values.size(); ++i)
        year_code[p.year_values[i]] = static_cast<int>(i);

    std::size_t c_zip = t.col("zip");
    std::size_t c_year = t.col("year");
    std::size_t c_deaths = t.col("deaths");
    std::size_t c_cens = t.col("censored");
    std::size_t c_pop = t.col("population");
    std::size_t c_inc = t.col("median_income");
    std::size_t c_a0 = t.col("age_under5");
    std::size_t c_a1 = t.col("age_5_14");
    std::size_t c_a2 = t.col("age_15_24");
    std::size_t c_a3 = t.col("age_25_64");
    std::size_t c_a4 = t.col("age_65_plus");
    std::size_t c_gw = t.col("groundwater");
    std::size_t c_rate = p.has_age_adjusted ? t.col("age_adjusted_rate") : 0;

    std::vector<std::size_t> acol(kept_info.size());
    for (std::size_t j = 0; j < kept_info.size(); ++j) acol[j] = t.col(kept_info[j].name);

    p.zip_idx.resize(n);
    p.year_idx.resize(n);
    p.deaths.resize(n);
    p.censored.resize(n);
    p.population.resize(n);
    p.median_income.resize(n);
    p.age_u5.resize(n);
    p.age_5_14.resize(n);
    p.age_15_24.resize(n);
    p.age_25_64.resize(n);
    p.age_65p.resize(n);
    p.groundwater.resize(n);
    if (p.has_age_adjusted) p.age_adjusted_rate.resize(n);
    p.analytes = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n),
                                           static_cast<Eigen::Index>(kept_info.size()),
                                           std::nan(""));

    for (std::size_t r = 0; r < n; ++r) {
        const std::string& z = t.cell(r, c_zip);
        auto zit = zip_code.find(z);
        if (zit == zip_code.end()) throw ParseError("unknown zip in " + csv_path + ": " + z);
        p.zip_idx[r] = zit->second;
        long long yr = t.integer(r, c_year);
        auto yit = year_code.find(static_cast<int>(yr));
        if (yit == year_code.end())
            throw ParseError("unknown year in " + csv_path + ": " + std::to_string(yr));
        p.year_idx[r] = yit->second;
        p.deaths[r] = t.num(r, c_deaths);
        long long cens = t.integer(r, c_cens);
        if (cens != 0 && cens != 1)
            throw ParseError("censored flag must be 0/1 in " + csv_path);
        p.censored[r] = static_cast<unsigned char>(cens);
        p.population[r] = t.num(r, c_pop);
        p.median_income[r] = t.num(r, c_inc);
        p.age_u5[r] = t.num(r, c_a0);
        p.age_5_14[r] = t.num(r, c_a1);
        p.age_15_24[r] = t.num(r, c_a2);
        p.age_25_64[r] = t.num(r, c_a3);
        p.age_65p[r] = t.num(r, c_a4);
        p.groundwater[r] = t.num(r, c_gw);
        if (p.has_age_adjusted) p.age_adjusted_rate[r] = t.num(r, c_rate);
        for (std::size_t j = 0; j < acol.size(); ++j)
            p.analytes(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
                t.num(r, acol[j]);
    }

    p.analyte_info = std::move(kept_info);
    return p;
}

void stage_synth(const RunConfig& cfg) {
    validate_config(cfg);
    StageTimer timer;
    std::string dir = opath(cfg, "synthetic");
    ensure_dir(dir);

    SynthSpec spec;
    spec.n_zips = cfg.synth_zips;
    spec.n_years = cfg.synth_years;
    spec.n_analytes = cfg.synth_analytes;
    spec.start_year = cfg.year_min;
    spec.seed = cfg.seed;
    spec.missing_rate = cfg.synth_missing_rate;
    spec.censor_threshold = cfg.synth_censor_threshold;
    if (cfg.synth_beta_index >= 0) {
        spec.beta.assign(static_cast<std::size_t>(cfg.synth_analytes), 0.0);
        spec.beta[static_cast<std::size_t>(cfg.synth_beta_index)] = cfg.synth_beta_value;
    }

    SynthResult result = generate_panel(spec);
    write_raw_csvs(result.raw, dir);
    write_truth_json(spec, result.truth, synth_path(cfg, "truth.json"));

    json details = json::object();
    details["n_zips"] = spec.n_zips;
    details["n_years"] = spec.n_years;
    details["n_analytes"] = spec.n_analytes;
    details["n_samples"] = result.raw.samples.size();
    details["seed"] = spec.seed;
    std::vector<std::string> outputs = {
        synth_path(cfg, "samples.csv"),     synth_path(cfg, "lods.csv"),
        synth_path(cfg, "crosswalk.csv"),   synth_path(cfg, "sources.csv"),
        synth_path(cfg, "demographics.csv"), synth_path(cfg, "deaths.csv"),
        synth_path(cfg, "classes.csv"),     synth_path(cfg, "truth.json")};
    finish_stage(cfg, "synth", timer.seconds(), details, outputs);
}

void stage_build_panel(const RunConfig& cfg) {
    validate_config(cfg);
    StageTimer timer;
    ensure_dir(cfg.out_dir);

    auto pick = [&](const std::string& explicit_path, const char* synth_name) {
        if (!explicit_path.empty()) return explicit_path;
        std::string alt = synth_path(cfg, synth_name);
        if (file_exists(alt)) return alt;
        throw DependencyError(std::string("stage 'build-panel' needs input '") + synth_name +
                              "': set the config path or run the synth stage first");
    };
    std::string samples = pick(cfg.samples, "samples.csv");
    std::string lods = pick(cfg.lods, "lods.csv");
    std::string crosswalk = pick(cfg.crosswalk, "crosswalk.csv");
    std::string sources = pick(cfg.sources, "sources.csv");
    std::string demographics = pick(cfg.demographics, "demographics.csv");
    std::string deaths = pick(cfg.deaths, "deaths.csv");
    std::string classes = cfg.classes;
    if (classes.empty()) {
        std::string alt = synth_path(cfg, "classes.csv");
        if (file_exists(alt)) classes = alt;
    }

    IngestConfig ic;
    ic.year_min = cfg.year_min;
    ic.year_max = cfg.year_max;
    ic.drop_censored = cfg.drop_censored;

    IngestReport rep;
    RawData raw = read_raw_files(samples, lods, crosswalk, sources, demographics, deaths, classes,
                                 ic, rep);
    ZipYearPanel panel = build_panel(raw, ic, rep);

    PrepConfig pc;
    pc.missing_threshold = cfg.missing_threshold;
    pc.nzv_freq_ratio = cfg.nzv_freq_ratio;
    pc.nzv_unique_pct = cfg.nzv_unique_pct;
    prepare_panel(panel, pc);

    save_panel(panel, opath(cfg, "panel.csv"), opath(cfg, "panel_meta.json"));
    write_panel_summary(panel, opath(cfg, "panel_summary.csv"));

    json details = json::object();
    details["n_rows"] = panel.n_rows();
    details["n_zips"] = panel.zip_ids.size();
    details["n_years"] = panel.year_values.size();
    details["n_analytes_total"] = panel.n_analytes();
    details["n_analytes_kept"] = panel.kept_analytes().size();
    json ing = json::object();
    ing["samples_total"] = rep.samples_total;
    ing["samples_outside_window"] = rep.samples_outside_window;
    ing["samples_unmapped"] = rep.samples_unmapped;
    ing["zero_population_rows"] = rep.zero_population_rows;
    ing["age_excess_flagged"] = rep.age_excess_flagged;
    ing["censored_rows_kept"] = rep.censored_rows_kept;
    ing["censored_rows_dropped"] = rep.censored_rows_dropped;
    ing["zips_without_pws"] = rep.zips_without_pws;
    ing["pws_without_source"] = rep.pws_without_source;
    ing["unmapped_pws"] = rep.unmapped_pws;
    ing["warnings"] = rep.warnings;
    details["ingest"] = std::move(ing);
    finish_stage(cfg, "build-panel", timer.seconds(), details,
                 {opath(cfg, "panel.csv"), opath(cfg, "panel_meta.json"),
                  opath(cfg, "panel_summary.csv")});
}

void stage_screen(const RunConfig& cfg) {
    validate_config(cfg);
    StageTimer timer;
    ensure_dir(cfg.out_dir);
    need_stage_file(opath(cfg, "panel.csv"), "screen", "build-panel");
    need_stage_file(opath(cfg, "panel_meta.json"), "screen", "build-panel");
    ZipYearPanel panel = load_panel(opath(cfg, "panel.csv"), opath(cfg, "panel_meta.json"));

    ScreenConfig sc;
    sc.alpha = cfg.bh_alpha;
    sc.ladder_alpha = cfg.ladder_alpha;
    sc.clip_negative = cfg.clip_negative;
    sc.n_threads = resolve_threads(cfg);

    std::vector<ScreenRow> rows = run_screen(panel, sc);
    write_screen_results(opath(cfg, "screen_results.csv"), rows);

    std::vector<AttributionResult> attributions;
    for (const ScreenRow& row : rows) {
        if (row.status == "retained") attributions.push_back(run_attribution(panel, row.analyte, sc));
    }
    write_attribution(opath(cfg, "attribution.csv"), panel, attributions);

    std::size_t n_failed = 0, n_not_sig = 0, n_excluded = 0, n_retained = 0;
    json retained = json::array();
    for (const ScreenRow& row : rows) {
        if (row.status == "fit_failed") ++n_failed;
        else if (row.status == "not_significant") ++n_not_sig;
        else if (row.status == "excluded_after_checks") ++n_excluded;
        else if (row.status == "retained") {
            ++n_retained;
            retained.push_back(row.analyte);
        }
    }
    json att = json::object();
    for (const AttributionResult& a : attributions) {
        json one = json::object();
        one["total"] = a.total;
        one["lo"] = a.lo;
        one["hi"] = a.hi;
        att[a.analyte] = std::move(one);
    }
    json details = json::object();
    details["n_analytes"] = rows.size();
    details["n_fit_failed"] = n_failed;
    details["n_not_significant"] = n_not_sig;
    details["n_excluded_after_checks"] = n_excluded;
    details["n_retained"] = n_retained;
    details["retained"] = std::move(retained);
    details["attribution"] = std::move(att);
    details["threads"] = sc.n_threads;
    finish_stage(cfg, "screen", timer.seconds(), details,
                 {opath(cfg, "screen_results.csv"), opath(cfg, "attribution.csv")});
}

void stage_dlm(const RunConfig& cfg) {
    validate_config(cfg);
    StageTimer timer;
    ensure_dir(cfg.out_dir);
    need_stage_file(opath(cfg, "panel.csv"), "dlm", "build-panel");
    need_stage_file(opath(cfg, "panel_meta.json"), "dlm", "build-panel");
    need_stage_file(opath(cfg, "screen_results.csv"), "dlm", "screen");
    ZipYearPanel panel = load_panel(opath(cfg, "panel.csv"), opath(cfg, "panel_meta.json"));

    CsvTable screen = CsvTable::read_file(opath(cfg, "screen_results.csv"));
    std::size_t c_name = screen.col("analyte");
    std::size_t c_coef = screen.col("coefficient");
    std::unordered_map<std::string, double> primary_coef;
    for (std::size_t r = 0; r < screen.rows(); ++r) {
        primary_coef[screen.cell(r, c_name)] = screen.num(r, c_coef);
    }

    std::vector<std::string> names;
    for (int j : panel.kept_analytes()) names.push_back(panel.analyte_info[j].name);
    std::sort(names.begin(), names.end());

    FitOptions fopts;
    std::vector<DlmResult> results;
    json skipped = json::array();
    for (const std::string& name : names) {
        try {
            DlmResult d = run_dlm(panel, name, fopts, cfg.n_lags, cfg.n_leads);
            auto it = primary_coef.find(name);
            if (it != primary_coef.end() && std::isfinite(it->second)) {
                bool sign_ok = sign_of(d.cum) != 0 && sign_of(d.cum) == sign_of(it->second);
                bool excludes_zero = d.cum_lo > 0.0 || d.cum_hi < 0.0;
                d.pass_m5 = (sign_ok && excludes_zero) ? 1 : 0;
                d.pass_m6 = (d.lead_lo <= 0.0 && d.lead_hi >= 0.0) ? 1 : 0;
            }
            results.push_back(std::move(d));
        } catch (const Error& e) {
            json s = json::object();
            s["analyte"] = name;
            s["reason"] = e.what();
            skipped.push_back(std::move(s));
        }
    }
    write_dlm_results(opath(cfg, "dlm_results.csv"), results);

    json details = json::object();
    details["n_fit"] = results.size();
    details["n_skipped"] = skipped.size();
    details["skipped"] = std::move(skipped);
    details["n_lags"] = cfg.n_lags;
    details["n_leads"] = cfg.n_leads;
    finish_stage(cfg, "dlm", timer.seconds(), details, {opath(cfg, "dlm_results.csv")});
}

void stage_mixtures(const RunConfig& cfg) {
    validate_config(cfg);
    StageTimer timer;
    ensure_dir(cfg.out_dir);
    need_stage_file(opath(cfg, "panel.csv"), "mixtures", "build-panel");
    need_stage_file(opath(cfg, "panel_meta.json"), "mixtures", "build-panel");
    ZipYearPanel panel = load_panel(opath(cfg, "panel.csv"), opath(cfg, "panel_meta.json"));

    CorrelationMatrix corr = correlation_matrix(panel);
    write_correlations(opath(cfg, "correlations.csv"), corr);
    std::vector<NetworkEdge> edges = correlation_network(corr, cfg.network_threshold);
    write_network_edges(opath(cfg, "network_edges.csv"), corr, edges);
    int n_imputed = 0;
    Eigen::MatrixXd dissim = dissimilarity_from_correlation(corr, &n_imputed);
    MdsResult mds = mds_embed(dissim);
    write_mds_coords(opath(cfg, "mds_coords.csv"), corr, mds, panel);

    std::vector<MixtureSpec> specs;
    if (cfg.mixtures_file.empty()) {
        specs = builtin_mixtures();
    } else {
        std::ifstream is(cfg.mixtures_file);
        if (!is) throw IoError("cannot open mixtures file: " + cfg.mixtures_file);
        json spec_json;
        try {
            is >> spec_json;
        } catch (const std::exception& e) {
            throw ParseError("invalid JSON in " + cfg.mixtures_file + ": " + e.what());
        }
        if (!spec_json.is_object() || !spec_json.contains("mixtures") ||
            !spec_json["mixtures"].is_array()) {
            throw ConfigError("mixtures file must contain a 'mixtures' array");
        }
        for (const json& m : spec_json["mixtures"]) {
            MixtureSpec s;
            if (!m.is_object() || !m.contains("name") || !m.contains("analytes") ||
                !m["analytes"].is_array()) {
                throw ConfigError("each mixture needs a name and an analytes array");
            }
            s.name = m["name"].get<std::string>();
            for (const json& a : m["analytes"]) s.analytes.push_back(a.get<std::string>());
            if (s.name.empty() || s.analytes.empty()) {
                throw ConfigError("each mixture needs a name and an analytes array");
            }
            specs.push_back(std::move(s));
        }
    }

    QgcompConfig qc;
    qc.q = cfg.quantiles;
    qc.year_spline_df = cfg.year_spline_df;
    qc.clustered = cfg.qgcomp_clustered;

    std::vector<MixtureResult> results;
    json mixj = json::array();
    std::size_t n_failed = 0;
    for (const MixtureSpec& spec : specs) {
        json entry = json::object();
        entry["name"] = spec.name;
        entry["requested"] = spec.analytes;
        try {
            MixtureResult r = qgcomp_fit(spec, panel, qc);
            entry["used"] = r.analytes_used;
            entry["missing"] = r.analytes_missing;
            entry["psi"] = r.psi;
            entry["std_err"] = r.std_err;
            entry["p_value"] = r.p_value;
            entry["increase_pct"] = r.pct.pct;
            entry["ci_lo"] = r.pct.lo;
            entry["ci_hi"] = r.pct.hi;
            entry["n_obs"] = r.n_obs;
            entry["converged"] = r.converged;
            results.push_back(std::move(r));
        } catch (const Error& e) {
            entry["error"] = e.what();
            ++n_failed;
        }
        mixj.push_back(std::move(entry));
    }

    json mixfile = json::object();
    mixfile["mixtures"] = std::move(mixj);
    {
        std::string path = opath(cfg, "mixtures.json");
        std::ofstream os(path);
        if (!os) throw IoError("cannot write " + path);
        os << mixfile.dump(2) << '\n';
        if (!os) throw IoError("write failure on " + path);
    }
    write_mixture_results(opath(cfg, "mixture_results.csv"), results);

    json details = json::object();
    details["n_analytes"] = corr.names.size();
    details["n_edges"] = edges.size();
    details["n_imputed_dissimilarities"] = n_imputed;
    details["mds_dims"] = mds.dims;
    details["mds_eigen1"] = mds.eigen1;
    details["mds_eigen2"] = mds.eigen2;
    details["mds_warnings"] = mds.warnings;
    details["n_mixtures_fit"] = results.size();
    details["n_mixtures_failed"] = n_failed;
    finish_stage(cfg, "mixtures", timer.seconds(), details,
                 {opath(cfg, "correlations.csv"), opath(cfg, "network_edges.csv"),
                  opath(cfg, "mds_coords.csv"), opath(cfg, "mixtures.json"),
                  opath(cfg, "mixture_results.csv")});
}

void stage_doseresponse(const RunConfig& cfg) {
    validate_config(cfg);
    StageTimer timer;
    ensure_dir(cfg.out_dir);
    need_stage_file(opath(cfg, "panel.csv"), "doseresponse", "build-panel");
    need_stage_file(opath(cfg, "panel_meta.json"), "doseresponse", "build-panel");
    ZipYearPanel panel = load_panel(opath(cfg, "panel.csv"), opath(cfg, "panel_meta.json"));

    std::vector<std::string> analytes;
    if (!cfg.doseresponse_analytes.empty()) {
        analytes = split_csv_list(cfg.doseresponse_analytes);
    } else {
        std::string screen_path = opath(cfg, "screen_results.csv");
        if (!file_exists(screen_path)) {
            throw DependencyError("stage 'doseresponse' needs " + screen_path +
                                  " for the retained set; run the screen stage or set "
                                  "doseresponse_analytes");
        }
        CsvTable screen = CsvTable::read_file(screen_path);
        std::size_t c_name = screen.col("analyte");
        std::size_t c_status = screen.col("status");
        for (std::size_t r = 0; r < screen.rows(); ++r) {
            if (screen.cell(r, c_status) == "retained") analytes.push_back(screen.cell(r, c_name));
        }
    }

    GamConfig gc;
    gc.k_interior = cfg.gam_knots;
    gc.degree = cfg.gam_degree;
    gc.lambda = cfg.gam_lambda;
    gc.grid_points = cfg.gam_grid_points;
    gc.lambda_grid.resize(static_cast<std::size_t>(cfg.lambda_count));
    double lo = std::log10(cfg.lambda_min), hi = std::log10(cfg.lambda_max);
    for (int i = 0; i < cfg.lambda_count; ++i) {
        double t = cfg.lambda_count == 1 ? 0.0 : static_cast<double>(i) / (cfg.lambda_count - 1);
        gc.lambda_grid[static_cast<std::size_t>(i)] = std::pow(10.0, lo + t * (hi - lo));
    }

    json fitted = json::array();
    json skipped = json::array();
    std::vector<std::string> outputs;
    std::set<std::string> used_slugs;
    std::string first_error;
    for (const std::string& name : analytes) {
        try {
            DoseResponseCurve curve = run_doseresponse(panel, name, gc);
            std::string slug = analyte_slug(name);
            while (used_slugs.count(slug)) slug += "_2";
            used_slugs.insert(slug);
            std::string curve_path = opath(cfg, ("doseresponse_" + slug + ".csv").c_str());
            std::string density_path = opath(cfg, ("density_" + slug + ".csv").c_str());
            write_doseresponse(curve_path, curve);
            write_density(density_path, curve, gc.density_bins);
            outputs.push_back(curve_path);
            outputs.push_back(density_path);
            json f = json::object();
            f["analyte"] = name;
            f["lambda"] = curve.fit.lambda;
            f["edf"] = curve.fit.edf;
            f["gcv"] = curve.fit.gcv;
            f["endpoint_selected"] = curve.fit.endpoint_selected;
            f["converged"] = curve.fit.converged;
            f["n_obs"] = curve.fit.n_obs;
            fitted.push_back(std::move(f));
        } catch (const Error& e) {
            if (first_error.empty()) first_error = e.what();
            json s = json::object();
            s["analyte"] = name;
            s["reason"] = e.what();
            skipped.push_back(std::move(s));
        }
    }
    if (!analytes.empty() && fitted.empty()) {
        throw NumericError("dose-response failed for all " + std::to_string(analytes.size()) +
                           " analytes; first error: " + first_error);
    }

    json details = json::object();
    details["n_requested"] = analytes.size();
    details["n_fit"] = fitted.size();
    details["fits"] = std::move(fitted);
    details["skipped"] = std::move(skipped);
    finish_stage(cfg, "doseresponse", timer.seconds(), details, outputs);
}

void stage_report(const RunConfig& cfg) {
    validate_config(cfg);
    StageTimer timer;
    ensure_dir(cfg.out_dir);

    json j = load_report(cfg);
    for (auto& [stage, entry] : j["stages"].items()) {
        (void)stage;
        if (!entry.is_object() || !entry.contains("outputs") || !entry["outputs"].is_object())
            continue;
        for (auto& [rel, hash] : entry["outputs"].items()) {
            std::string full = (fs::path(cfg.out_dir) / rel).string();
            hash = file_exists(full) ? json(hash_file_hex(full)) : json("missing");
        }
    }
    json entry = json::object();
    entry["status"] = "ok";
    entry["wall_seconds"] = timer.seconds();
    entry["outputs"] = json::object();
    entry["n_stages"] = j["stages"].size();
    j["stages"]["report"] = std::move(entry);
    save_report(cfg, j);
}

void run_pipeline(const RunConfig& cfg, const std::vector<std::string>& stages) {
    static const std::vector<std::string> order = {"synth",    "build-panel",  "screen", "dlm",
                                                   "mixtures", "doseresponse", "report"};
    for (const std::string& s : stages) {
        if (std::find(order.begin(), order.end(), s) == order.end()) {
            throw ConfigError("unknown stage: " + s);
        }
    }
    for (const std::string& name : order) {
        if (std::find(stages.begin(), stages.end(), name) == stages.end()) continue;
        try {
            if (name == "synth") stage_synth(cfg);
            else if (name == "build-panel") stage_build_panel(cfg);
            else if (name == "screen") stage_screen(cfg);
            else if (name == "dlm") stage_dlm(cfg);
            else if (name == "mixtures") stage_mixtures(cfg);
            else if (name == "doseresponse") stage_doseresponse(cfg);
            else stage_report(cfg);
        } catch (const std::exception& e) {
            record_failure(cfg, name, e.what());
            throw;
        }
    }
}

} // namespace waterscreen
