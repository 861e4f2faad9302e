// Command-line front end: run a scenario, sweep the cell size, or analyse
// probe CSVs written by an earlier run.
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include "curvetlm/scenario.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace curvetlm;

struct ProbeCsv {
    std::vector<double> time;
    std::vector<double> value;

    [[nodiscard]] double dt() const {
        if (time.size() < 2) throw ConfigError("probe csv", "needs at least two rows");
        return (time.back() - time.front()) / static_cast<double>(time.size() - 1);
    }
};

ProbeCsv read_probe_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("probe csv", "cannot open " + path);
    ProbeCsv csv;
    std::string line;
    std::getline(in, line);
    if (line.rfind("step,time_s,value", 0) != 0) throw ConfigError("probe csv", path + " lacks the step,time_s,value header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string step, t, v;
        if (!std::getline(row, step, ',') || !std::getline(row, t, ',') || !std::getline(row, v)) {
            throw ConfigError("probe csv", "malformed row in " + path + ": " + line);
        }
        try {
            csv.time.push_back(std::stod(t));
            csv.value.push_back(std::stod(v));
        } catch (const std::exception&) {
            throw ConfigError("probe csv", "non-numeric row in " + path + ": " + line);
        }
    }
    return csv;
}

Window window_of(const std::string& w) {
    if (w == "hann") return Window::Hann;
    if (w == "rectangular") return Window::Rectangular;
    throw ConfigError("--window", "must be rectangular or hann");
}

void print_resonances(const ResonanceTable& table) {
    std::cout << "f_Hz,mag\n";
    std::cout.precision(10);
    for (const auto& r : table) std::cout << r.frequency << ',' << r.amplitude << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-domain TLM solver with embedded thin curved panels"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(curvetlm::version));

    std::string config_path;
    std::string out_dir;
    bool quiet = false;
    auto* run_cmd = app.add_subcommand("run", "Run a scenario file");
    run_cmd->add_option("config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("-o,--out", out_dir, "Output directory (default: results/<name>)");
    run_cmd->add_flag("-q,--quiet", quiet, "Suppress progress output");

    std::vector<double> dls;
    auto* sweep_cmd = app.add_subcommand("sweep", "Rerun a scenario over several cell sizes");
    sweep_cmd->add_option("config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--dl", dls, "Cell sizes in metres (default: the sweep.dl list of the config)");
    sweep_cmd->add_option("-o,--out", out_dir, "Output directory (default: results/<name>_sweep)");
    sweep_cmd->add_flag("-q,--quiet", quiet, "Suppress progress output");

    std::string probe_path;
    std::vector<std::string> se_paths;
    std::string window = "rectangular";
    int padding = 1;
    ResonanceOptions options;
    auto* analyze_cmd = app.add_subcommand("analyze", "Spectrum, resonances or shielding of probe CSVs");
    analyze_cmd->add_option("probe", probe_path, "Probe CSV (step,time_s,value)")->check(CLI::ExistingFile);
    analyze_cmd->add_option("--se", se_paths, "Shielding effectiveness from <with.csv> <without.csv>")
        ->expected(2)
        ->check(CLI::ExistingFile);
    analyze_cmd->add_option("--window", window, "rectangular or hann");
    analyze_cmd->add_option("--padding", padding, "Zero-padding factor")->check(CLI::PositiveNumber);
    analyze_cmd->add_option("--peaks", options.n_peaks, "Maximum number of resonances");
    analyze_cmd->add_option("--f-min", options.f_min, "Lower band edge in Hz");
    analyze_cmd->add_option("--f-max", options.f_max, "Upper band edge in Hz");
    analyze_cmd->add_option("--prominence", options.min_prominence_db, "Minimum prominence in dB");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        std::ostream* log = quiet ? nullptr : &std::cerr;
        if (*run_cmd) {
            const auto cfg = load_config(config_path);
            const fs::path dir = out_dir.empty() ? fs::path("results") / cfg.name : fs::path(out_dir);
            const auto result = run_scenario(cfg, dir, log);
            for (const auto& p : result.probes) {
                std::cout << p.config.name << ':';
                for (const auto& r : p.resonances) std::cout << ' ' << r.frequency / 1e9;
                std::cout << " GHz\n";
            }
            std::cout << "wrote " << result.outputs.size() << " files and manifest.json to " << dir.string() << '\n';
        } else if (*sweep_cmd) {
            const auto cfg = load_config(config_path);
            if (dls.empty()) dls = cfg.sweep_dl;
            const fs::path dir = out_dir.empty() ? fs::path("results") / (cfg.name + "_sweep") : fs::path(out_dir);
            const auto s = sweep(cfg, dls, dir, log);
            write_sweep_csv(std::cout, s);
        } else if (*analyze_cmd) {
            const Window w = window_of(window);
            if (!se_paths.empty()) {
                const auto with = read_probe_csv(se_paths[0]);
                const auto without = read_probe_csv(se_paths[1]);
                if (with.value.size() != without.value.size()) {
                    throw ConfigError("--se", "the two records have different lengths");
                }
                const auto s_with = spectrum(with.value, with.dt(), w, padding, "cli");
                const auto s_without = spectrum(without.value, without.dt(), w, padding, "cli");
                const auto se = shielding_effectiveness(s_without, s_with);
                write_se_csv(std::cout, se, options.f_min, options.f_max);
            } else if (!probe_path.empty()) {
                const auto csv = read_probe_csv(probe_path);
                print_resonances(find_resonances(spectrum(csv.value, csv.dt(), w, padding, "cli"), options));
            } else {
                throw ConfigError("analyze", "give a probe CSV or --se <with.csv> <without.csv>");
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
