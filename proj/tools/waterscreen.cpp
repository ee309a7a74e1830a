// Command line front end. Every stage is a subcommand; configuration comes
// from an optional key=value file plus per-key flags, and flags win. Errors
// leave as one JSON object on stderr with the exit code of their category.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "waterscreen/errors.hpp"
#include "waterscreen/pipeline.hpp"

namespace {

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        waterscreen::RunConfig defaults;
        for (const auto& [key, value] : waterscreen::config_to_kv(defaults)) k.push_back(key);
        return k;
    }();
    return keys;
}

struct CliState {
    std::string config_path;
    // Insertion order preserved so later flags of the same key overwrite.
    std::map<std::string, std::string> overrides;
};

void add_config_options(CLI::App* cmd, CliState& st) {
    cmd->add_option("--config", st.config_path, "key=value configuration file");
    for (const std::string& key : config_keys()) {
        cmd->add_option_function<std::string>(
            "--" + key, [&st, key](const std::string& v) { st.overrides[key] = v; });
    }
}

int fail(const waterscreen::Error& e) {
    nlohmann::json err = {{"error", e.kind_name()}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return e.exit_code();
}

int fail_internal(const std::exception& e) {
    nlohmann::json err = {{"error", "internal"}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return static_cast<int>(waterscreen::ErrorKind::Internal);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"zip-by-year drinking water exposure and mortality pipeline"};
    app.require_subcommand(1);

    CliState st;
    const std::vector<std::pair<std::string, std::string>> stage_cmds = {
        {"synth", "generate a synthetic raw-data bundle with known truth"},
        {"build-panel", "ingest raw files into the analysis panel"},
        {"screen", "per-analyte screening, BH correction, ladder, attribution"},
        {"dlm", "distributed lag and lead models per analyte"},
        {"mixtures", "correlation structure, MDS map, quantile g-computation"},
        {"doseresponse", "penalized spline exposure-response curves"},
        {"report", "refresh output hashes and finalize report.json"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, desc] : stage_cmds) {
        CLI::App* cmd = app.add_subcommand(name, desc);
        add_config_options(cmd, st);
        subs[name] = cmd;
    }
    std::vector<std::string> run_stages;
    CLI::App* run_cmd = app.add_subcommand("run", "run several stages in pipeline order");
    run_cmd->add_option("stages", run_stages, "stage names, any order")->required();
    add_config_options(run_cmd, st);

    CLI11_PARSE(app, argc, argv);

    try {
        waterscreen::RunConfig cfg;
        if (!st.config_path.empty()) cfg = waterscreen::parse_config_file(st.config_path);
        for (const auto& [key, value] : st.overrides) {
            waterscreen::apply_config_kv(cfg, key, value);
        }
        std::vector<std::string> stages;
        if (run_cmd->parsed()) {
            stages = run_stages;
        } else {
            for (const auto& [name, cmd] : subs) {
                if (cmd->parsed()) stages.push_back(name);
            }
        }
        waterscreen::run_pipeline(cfg, stages);
        return 0;
    } catch (const waterscreen::Error& e) {
        return fail(e);
    } catch (const std::exception& e) {
        return fail_internal(e);
    }
}
