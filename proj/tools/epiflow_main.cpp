/* epiflow command-line interface.
 *
 * Subcommands:
 *   validate <scenario>   check a scenario document, exit 0 iff it passes
 *   run      <scenario>   simulate and write the CSV table + summary sidecar
 *   sweep    <scenario>   run an (eta, xi) grid of proportional controllers
 *   builtin  four-city    print the built-in four-city scenario document
 *
 * Exit codes: 0 success, 1 validation failure, 2 runtime model violation,
 * 3 I/O error, 64 usage error.
 */
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "epiflow/analysis.hpp"
#include "epiflow/dynamics.hpp"
#include "epiflow/scenario_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitModelViolation = 2;
constexpr int kExitIo = 3;
constexpr int kExitUsage = 64;

std::vector<double> parse_value_list(const std::string& text, const std::string& flag) {
    std::vector<double> values;
    std::stringstream stream(text);
    std::string token;
    while (std::getline(stream, token, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(token, &used));
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw epiflow::ScenarioError(flag + ": cannot parse \"" + token + "\" as a number");
        }
    }
    if (values.empty()) throw epiflow::ScenarioError(flag + ": empty value list");
    return values;
}

int do_validate(const std::string& scenario_path) {
    epiflow::LoadedScenario loaded;
    try {
        loaded = epiflow::load_scenario_file(scenario_path);
    } catch (const epiflow::ParseError& e) {
        std::cout << "invalid: " << e.what() << "\n";
        return kExitValidation;
    }
    // load_scenario already rejects invalid documents; rerun the checks to
    // print the full report including notes.
    const epiflow::ValidationReport report =
        epiflow::validate_params(loaded.scenario, loaded.run.horizon);
    std::cout << (report.passed() ? "valid" : "invalid") << ": " << scenario_path << "\n"
              << report.summary();
    return report.passed() ? kExitOk : kExitValidation;
}

int do_run(const std::string& scenario_path, int horizon_override, const std::string& out_path,
           bool permissive) {
    epiflow::LoadedScenario loaded = epiflow::load_scenario_file(scenario_path);
    if (horizon_override >= 0) loaded.run.horizon = horizon_override;
    if (permissive) loaded.run.mode = epiflow::ProbabilityMode::permissive;

    const epiflow::ValidationReport report =
        epiflow::validate_params(loaded.scenario, loaded.run.horizon);
    if (!report.passed()) {
        std::cout << report.summary();
        return kExitValidation;
    }

    epiflow::SimulateOptions opts;
    opts.step.mode = loaded.run.mode;
    opts.stop = loaded.run.stop;
    const epiflow::Trajectory traj =
        epiflow::simulate(loaded.scenario, loaded.policy, loaded.run.horizon, opts);
    const epiflow::EquilibriumReport eq =
        epiflow::analyze(traj, loaded.scenario.params, loaded.run.extinction_threshold);

    const epiflow::json echo = epiflow::scenario_document(loaded);
    if (!out_path.empty()) {
        epiflow::write_run_output(traj, eq, out_path, &echo);
        std::cerr << "wrote " << out_path << " and " << out_path << ".summary.json\n";
    }
    std::cout << epiflow::summary_json(traj, eq).dump(2) << "\n";
    return kExitOk;
}

int do_sweep(const std::string& scenario_path, const std::string& eta_list,
             const std::string& xi_list, bool vaccine, const std::string& out_dir,
             int horizon_override) {
    const std::vector<double> etas = parse_value_list(eta_list, "--eta");
    const std::vector<double> xis = parse_value_list(xi_list, "--xi");
    epiflow::LoadedScenario loaded = epiflow::load_scenario_file(scenario_path);

    epiflow::SweepOptions opts;
    opts.vaccine = vaccine;
    if (horizon_override >= 0) opts.horizon = horizon_override;
    if (!out_dir.empty()) opts.out_dir = out_dir;

    const std::vector<epiflow::SweepCell> cells = epiflow::run_sweep(loaded, etas, xis, opts);
    std::printf("%12s %12s %14s %14s %12s %s\n", "eta", "xi", "burden", "r_bar_final",
                "peak_x_bar", "extinction");
    bool any_failed = false;
    for (const epiflow::SweepCell& cell : cells) {
        if (!cell.ok) {
            any_failed = true;
            std::printf("%12s %12s failed: %s\n", epiflow::format_double(cell.eta).c_str(),
                        epiflow::format_double(cell.xi).c_str(), cell.error.c_str());
            continue;
        }
        std::printf("%12s %12s %14.8f %14.8f %12.3e %s\n",
                    epiflow::format_double(cell.eta).c_str(),
                    epiflow::format_double(cell.xi).c_str(), cell.burden, cell.r_bar_final,
                    cell.peak_x_bar,
                    cell.extinction_step ? std::to_string(*cell.extinction_step).c_str() : "-");
    }
    if (!out_dir.empty())
        std::cout << "wrote per-cell tables and index.json under " << out_dir << "\n";
    return any_failed ? kExitValidation : kExitOk;
}

int do_builtin(const std::string& name, double xi) {
    if (name != "four-city")
        throw epiflow::ScenarioError("unknown built-in scenario \"" + name +
                                     "\" (available: four-city)");
    std::cout << epiflow::scenario_document(epiflow::builtin_four_city_loaded(xi)).dump(2)
              << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Networked SEIR epidemic simulator with traveler flows"};
    app.require_subcommand(1);

    std::string scenario_path;
    auto* validate = app.add_subcommand("validate", "Check a scenario document");
    validate->add_option("scenario", scenario_path, "Scenario document (JSON)")->required();

    std::string run_scenario, run_out;
    int run_horizon = -1;
    bool run_permissive = false;
    auto* run = app.add_subcommand("run", "Simulate a scenario");
    run->add_option("scenario", run_scenario, "Scenario document (JSON)")->required();
    run->add_option("--horizon", run_horizon, "Override the configured horizon");
    run->add_option("--out", run_out, "CSV output path (summary goes to <out>.summary.json)");
    run->add_flag("--permissive", run_permissive,
                  "Clamp probability degeneracies with warnings instead of aborting");

    std::string sweep_scenario, sweep_etas, sweep_xis, sweep_out;
    bool sweep_vaccine = false;
    int sweep_horizon = -1;
    auto* sweep = app.add_subcommand("sweep", "Run an (eta, xi) controller grid");
    sweep->add_option("scenario", sweep_scenario, "Scenario document (JSON)")->required();
    sweep->add_option("--eta", sweep_etas, "Comma-separated controller sensitivities (0 = off)")
        ->required();
    sweep->add_option("--xi", sweep_xis, "Comma-separated flow scale factors")->required();
    sweep->add_flag("--vaccine", sweep_vaccine, "Enable the vaccine roll-out in every cell");
    sweep->add_option("--out", sweep_out, "Directory for per-cell tables and index.json");
    sweep->add_option("--horizon", sweep_horizon, "Override the configured horizon");

    std::string builtin_name;
    double builtin_xi = 100.0;
    auto* builtin = app.add_subcommand("builtin", "Print a built-in scenario document");
    builtin->add_option("name", builtin_name, "Built-in scenario name (four-city)")->required();
    builtin->add_option("--xi", builtin_xi, "Flow scale factor");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*validate) return do_validate(scenario_path);
        if (*run) return do_run(run_scenario, run_horizon, run_out, run_permissive);
        if (*sweep)
            return do_sweep(sweep_scenario, sweep_etas, sweep_xis, sweep_vaccine, sweep_out,
                            sweep_horizon);
        if (*builtin) return do_builtin(builtin_name, builtin_xi);
    } catch (const epiflow::ModelViolation& e) {
        std::cerr << "model violation: " << e.what() << "\n";
        return kExitModelViolation;
    } catch (const epiflow::ParseError& e) {
        std::cerr << "invalid scenario: " << e.what() << "\n";
        return kExitValidation;
    } catch (const epiflow::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const epiflow::ScenarioError& e) {
        std::cerr << "invalid scenario: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}
