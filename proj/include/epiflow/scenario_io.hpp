/* Scenario documents, built-in scenarios, run output, and parameter sweeps.
 *
 * Scenario documents are JSON with explicit keys; unknown keys are rejected
 * so typos surface as errors instead of silently ignored settings. The full
 * schema is documented in the repository README. Flow matrices follow the
 * library-wide convention: entry [i][j] is the flow from node j into node i,
 * and every matrix is multiplied by the document's flow.scale factor.
 *
 * Run output is a CSV table (one row per step and node, floats in shortest
 * round-trip form) plus a JSON summary sidecar; both are byte-identical
 * across repeated runs of the same scenario.
 */
#pragma once

#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "epiflow/analysis.hpp"
#include "epiflow/control.hpp"
#include "epiflow/dynamics.hpp"
#include "epiflow/errors.hpp"

namespace epiflow {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double value) {
    std::array<char, 32> buffer{};
    auto [end, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
    return std::string(buffer.data(), end);
}

struct RunSettings {
    int horizon = 1000;
    double extinction_threshold = 1e-4;
    ProbabilityMode mode = ProbabilityMode::strict;
    std::optional<StopRule> stop{};
};

/// A parsed scenario document. `scenario` carries flows already multiplied
/// by flow_scale; the unscaled matrices are kept so sweeps can rebuild the
/// schedule at other scale factors exactly.
struct LoadedScenario {
    Scenario scenario;
    ControlPolicy policy;
    RunSettings run;
    double flow_scale = 1.0;
    Matrix base_flow;
    std::vector<std::pair<int, Matrix>> base_overrides;

    Scenario scaled(double scale) const {
        Scenario out = scenario;
        out.flows.default_matrix = FlowMatrix(base_flow).scaled(scale);
        out.flows.overrides.clear();
        for (const auto& [step, matrix] : base_overrides)
            out.flows.overrides.emplace(step, FlowMatrix(matrix).scaled(scale));
        return out;
    }
};

namespace detail {

inline void reject_unknown_keys(const json& object, const std::string& path,
                                std::initializer_list<const char*> allowed) {
    if (!object.is_object()) throw ParseError(path, "expected an object");
    for (const auto& [key, value] : object.items()) {
        bool known = false;
        for (const char* name : allowed) known = known || key == name;
        if (!known) throw ParseError(path + "." + key, "unknown field");
    }
}

inline const json& require(const json& object, const std::string& path, const char* key) {
    if (!object.is_object()) throw ParseError(path, "expected an object");
    auto it = object.find(key);
    if (it == object.end()) throw ParseError(path + "." + key, "missing required field");
    return *it;
}

inline double as_number(const json& value, const std::string& path) {
    if (!value.is_number()) throw ParseError(path, "expected a number");
    return value.get<double>();
}

inline int as_int(const json& value, const std::string& path) {
    if (!value.is_number_integer()) throw ParseError(path, "expected an integer");
    return value.get<int>();
}

inline std::string as_string(const json& value, const std::string& path) {
    if (!value.is_string()) throw ParseError(path, "expected a string");
    return value.get<std::string>();
}

inline std::vector<double> as_number_array(const json& value, const std::string& path,
                                           std::size_t expected) {
    if (!value.is_array() || value.size() != expected)
        throw ParseError(path, "expected an array of " + std::to_string(expected) + " numbers");
    std::vector<double> out;
    out.reserve(expected);
    for (std::size_t i = 0; i < expected; ++i)
        out.push_back(as_number(value[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

/// Scalar-or-array parameter: a scalar is broadcast to every node.
inline std::vector<double> as_per_node(const json& value, const std::string& path,
                                       std::size_t n) {
    if (value.is_number()) return std::vector<double>(n, value.get<double>());
    return as_number_array(value, path, n);
}

inline Matrix as_matrix(const json& value, const std::string& path, std::size_t n) {
    if (!value.is_array() || value.size() != n)
        throw ParseError(path, "expected " + std::to_string(n) + " rows");
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string row_path = path + "[" + std::to_string(i) + "]";
        const auto row = as_number_array(value[i], row_path, n);
        for (std::size_t j = 0; j < n; ++j) m(i, j) = row[j];
    }
    return m;
}

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Scalar when every node agrees, array otherwise.
inline json per_node_to_json(const std::vector<double>& values) {
    bool uniform = true;
    for (double v : values) uniform = uniform && v == values.front();
    if (uniform && !values.empty()) return values.front();
    return json(values);
}

} // namespace detail

/// Parses and fully validates a scenario document. Parse errors and
/// validation errors carry the offending field path.
inline LoadedScenario load_scenario(const json& document) {
    using namespace detail;
    if (!document.is_object()) throw ParseError("$", "document must be a JSON object");
    reject_unknown_keys(document, "$",
                        {"format_version", "nodes", "flow", "params", "initial", "control",
                         "vaccine", "run"});

    const int version = as_int(require(document, "$", "format_version"), "$.format_version");
    if (version != kFormatVersion)
        throw ParseError("$.format_version",
                         "unsupported version " + std::to_string(version) + " (expected " +
                             std::to_string(kFormatVersion) + ")");

    const json& nodes = require(document, "$", "nodes");
    if (!nodes.is_array() || nodes.empty())
        throw ParseError("$.nodes", "expected a non-empty array");
    LoadedScenario loaded;
    Scenario& sc = loaded.scenario;
    const std::size_t n = nodes.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::string path = "$.nodes[" + std::to_string(i) + "]";
        if (!nodes[i].is_object()) throw ParseError(path, "expected an object");
        reject_unknown_keys(nodes[i], path, {"label", "population"});
        sc.labels.push_back(as_string(require(nodes[i], path, "label"), path + ".label"));
        const double population =
            as_number(require(nodes[i], path, "population"), path + ".population");
        if (!(population > 0.0))
            throw ParseError(path + ".population", "must be strictly positive");
        sc.populations.push_back(population);
    }

    const json& flow = require(document, "$", "flow");
    reject_unknown_keys(flow, "$.flow", {"scale", "matrix", "overrides"});
    loaded.flow_scale =
        flow.contains("scale") ? as_number(flow["scale"], "$.flow.scale") : 1.0;
    if (!(loaded.flow_scale >= 0.0))
        throw ParseError("$.flow.scale", "must be non-negative");
    loaded.base_flow = as_matrix(require(flow, "$.flow", "matrix"), "$.flow.matrix", n);
    try {
        sc.flows.default_matrix = FlowMatrix(loaded.base_flow).scaled(loaded.flow_scale);
    } catch (const ScenarioError& e) {
        throw ParseError("$.flow.matrix", e.what());
    }
    if (flow.contains("overrides")) {
        const json& overrides = flow["overrides"];
        if (!overrides.is_array()) throw ParseError("$.flow.overrides", "expected an array");
        for (std::size_t i = 0; i < overrides.size(); ++i) {
            const std::string path = "$.flow.overrides[" + std::to_string(i) + "]";
            reject_unknown_keys(overrides[i], path, {"step", "matrix"});
            const int step = as_int(require(overrides[i], path, "step"), path + ".step");
            if (step < 0) throw ParseError(path + ".step", "must be non-negative");
            Matrix base = as_matrix(require(overrides[i], path, "matrix"), path + ".matrix", n);
            try {
                sc.flows.overrides.emplace(step,
                                           FlowMatrix(base).scaled(loaded.flow_scale));
            } catch (const ScenarioError& e) {
                throw ParseError(path + ".matrix", e.what());
            }
            loaded.base_overrides.emplace_back(step, std::move(base));
        }
    }

    const json& params = require(document, "$", "params");
    reject_unknown_keys(params, "$.params", {"beta", "sigma", "delta", "p_x", "h"});
    sc.params.beta = as_per_node(require(params, "$.params", "beta"), "$.params.beta", n);
    sc.params.sigma = as_per_node(require(params, "$.params", "sigma"), "$.params.sigma", n);
    sc.params.delta = as_per_node(require(params, "$.params", "delta"), "$.params.delta", n);
    sc.params.p_x = as_per_node(require(params, "$.params", "p_x"), "$.params.p_x", n);
    sc.params.h = as_number(require(params, "$.params", "h"), "$.params.h");

    const json& initial = require(document, "$", "initial");
    reject_unknown_keys(initial, "$.initial", {"s", "e", "x", "r"});
    sc.initial.s = as_number_array(require(initial, "$.initial", "s"), "$.initial.s", n);
    sc.initial.e = as_number_array(require(initial, "$.initial", "e"), "$.initial.e", n);
    sc.initial.x = as_number_array(require(initial, "$.initial", "x"), "$.initial.x", n);
    sc.initial.r = as_number_array(require(initial, "$.initial", "r"), "$.initial.r", n);

    if (document.contains("control")) {
        const json& control = document["control"];
        const std::string kind = as_string(require(control, "$.control", "kind"),
                                           "$.control.kind");
        if (kind == "none") {
            reject_unknown_keys(control, "$.control", {"kind"});
            loaded.policy.kind = RestrictionKind::none;
        } else if (kind == "proportional") {
            reject_unknown_keys(control, "$.control", {"kind", "eta"});
            const double eta = as_number(require(control, "$.control", "eta"), "$.control.eta");
            if (eta < 0.0) throw ParseError("$.control.eta", "must be non-negative");
            loaded.policy.kind = RestrictionKind::proportional;
            loaded.policy.eta = eta;
        } else if (kind == "binary") {
            reject_unknown_keys(control, "$.control", {"kind", "shutdown_step", "reopen"});
            loaded.policy.kind = RestrictionKind::binary;
            loaded.policy.binary.shutdown_step =
                as_int(require(control, "$.control", "shutdown_step"),
                       "$.control.shutdown_step");
            if (loaded.policy.binary.shutdown_step < 0)
                throw ParseError("$.control.shutdown_step", "must be non-negative");
            const json& reopen = require(control, "$.control", "reopen");
            reject_unknown_keys(reopen, "$.control.reopen", {"rule", "value"});
            const std::string rule =
                as_string(require(reopen, "$.control.reopen", "rule"), "$.control.reopen.rule");
            if (rule == "threshold") {
                loaded.policy.binary.rule = ReopenRule::threshold;
                loaded.policy.binary.level = as_number(
                    require(reopen, "$.control.reopen", "value"), "$.control.reopen.value");
            } else if (rule == "zero") {
                loaded.policy.binary.rule = ReopenRule::zero;
                loaded.policy.binary.level =
                    reopen.contains("value")
                        ? as_number(reopen["value"], "$.control.reopen.value")
                        : 1e-9;
            } else {
                throw ParseError("$.control.reopen.rule", "expected \"threshold\" or \"zero\"");
            }
            if (!(loaded.policy.binary.level > 0.0 && loaded.policy.binary.level < 1.0))
                throw ParseError("$.control.reopen.value", "must lie in (0,1)");
        } else {
            throw ParseError("$.control.kind",
                             "expected \"none\", \"proportional\", or \"binary\"");
        }
    }

    if (document.contains("vaccine")) {
        const json& vaccine = document["vaccine"];
        reject_unknown_keys(vaccine, "$.vaccine", {"start_step", "rate", "s_bar_floor"});
        VaccinePolicy policy;
        policy.start_step =
            as_int(require(vaccine, "$.vaccine", "start_step"), "$.vaccine.start_step");
        policy.rate = as_number(require(vaccine, "$.vaccine", "rate"), "$.vaccine.rate");
        policy.s_bar_floor =
            as_number(require(vaccine, "$.vaccine", "s_bar_floor"), "$.vaccine.s_bar_floor");
        if (policy.start_step < 0) throw ParseError("$.vaccine.start_step", "must be non-negative");
        if (!(policy.rate >= 0.0 && policy.rate <= 1.0))
            throw ParseError("$.vaccine.rate", "must lie in [0,1]");
        if (!(policy.s_bar_floor >= 0.0 && policy.s_bar_floor <= 1.0))
            throw ParseError("$.vaccine.s_bar_floor", "must lie in [0,1]");
        loaded.policy.vaccine = policy;
    }

    if (document.contains("run")) {
        const json& run = document["run"];
        reject_unknown_keys(run, "$.run", {"horizon", "extinction_threshold", "mode", "stop"});
        if (run.contains("horizon")) {
            loaded.run.horizon = as_int(run["horizon"], "$.run.horizon");
            if (loaded.run.horizon < 0) throw ParseError("$.run.horizon", "must be non-negative");
        }
        if (run.contains("extinction_threshold")) {
            loaded.run.extinction_threshold =
                as_number(run["extinction_threshold"], "$.run.extinction_threshold");
            if (!(loaded.run.extinction_threshold > 0.0))
                throw ParseError("$.run.extinction_threshold", "must be strictly positive");
        }
        if (run.contains("mode")) {
            const std::string mode = as_string(run["mode"], "$.run.mode");
            if (mode == "strict")
                loaded.run.mode = ProbabilityMode::strict;
            else if (mode == "permissive")
                loaded.run.mode = ProbabilityMode::permissive;
            else
                throw ParseError("$.run.mode", "expected \"strict\" or \"permissive\"");
        }
        if (run.contains("stop")) {
            const json& stop = run["stop"];
            reject_unknown_keys(stop, "$.run.stop", {"x_bar_below", "consecutive"});
            StopRule rule;
            rule.x_bar_below =
                as_number(require(stop, "$.run.stop", "x_bar_below"), "$.run.stop.x_bar_below");
            if (!(rule.x_bar_below > 0.0))
                throw ParseError("$.run.stop.x_bar_below", "must be strictly positive");
            if (stop.contains("consecutive")) {
                rule.consecutive = as_int(stop["consecutive"], "$.run.stop.consecutive");
                if (rule.consecutive < 1)
                    throw ParseError("$.run.stop.consecutive", "must be at least 1");
            }
            loaded.run.stop = rule;
        }
    }

    // Static validation against the configured horizon; first error wins.
    const ValidationReport report = validate_params(loaded.scenario, loaded.run.horizon);
    if (!report.passed()) {
        const ValidationIssue& first = report.errors.front();
        std::string where = "$." + first.check;
        throw ParseError(where, first.message +
                                    (first.node >= 0 ? " (node " + std::to_string(first.node) + ")"
                                                     : std::string()));
    }
    return loaded;
}

inline LoadedScenario parse_scenario(const std::string& text) {
    json document;
    try {
        document = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("$", e.what());
    }
    return load_scenario(document);
}

inline LoadedScenario load_scenario_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario file " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_scenario(text);
}

/// Serializes a loaded scenario back to document form. Loading the result
/// reproduces the original scenario exactly.
inline json scenario_document(const LoadedScenario& loaded) {
    using namespace detail;
    json document;
    document["format_version"] = kFormatVersion;
    json nodes = json::array();
    for (std::size_t i = 0; i < loaded.scenario.size(); ++i)
        nodes.push_back({{"label", loaded.scenario.labels[i]},
                         {"population", loaded.scenario.populations[i]}});
    document["nodes"] = std::move(nodes);
    document["flow"] = {{"scale", loaded.flow_scale},
                        {"matrix", matrix_to_json(loaded.base_flow)}};
    if (!loaded.base_overrides.empty()) {
        json overrides = json::array();
        for (const auto& [step, matrix] : loaded.base_overrides)
            overrides.push_back({{"step", step}, {"matrix", matrix_to_json(matrix)}});
        document["flow"]["overrides"] = std::move(overrides);
    }
    document["params"] = {{"beta", per_node_to_json(loaded.scenario.params.beta)},
                          {"sigma", per_node_to_json(loaded.scenario.params.sigma)},
                          {"delta", per_node_to_json(loaded.scenario.params.delta)},
                          {"p_x", per_node_to_json(loaded.scenario.params.p_x)},
                          {"h", loaded.scenario.params.h}};
    document["initial"] = {{"s", loaded.scenario.initial.s},
                           {"e", loaded.scenario.initial.e},
                           {"x", loaded.scenario.initial.x},
                           {"r", loaded.scenario.initial.r}};
    switch (loaded.policy.kind) {
        case RestrictionKind::none:
            document["control"] = {{"kind", "none"}};
            break;
        case RestrictionKind::proportional:
            document["control"] = {{"kind", "proportional"}, {"eta", loaded.policy.eta}};
            break;
        case RestrictionKind::binary:
            document["control"] = {
                {"kind", "binary"},
                {"shutdown_step", loaded.policy.binary.shutdown_step},
                {"reopen",
                 {{"rule",
                   loaded.policy.binary.rule == ReopenRule::threshold ? "threshold" : "zero"},
                  {"value", loaded.policy.binary.level}}}};
            break;
    }
    if (loaded.policy.vaccine) {
        document["vaccine"] = {{"start_step", loaded.policy.vaccine->start_step},
                               {"rate", loaded.policy.vaccine->rate},
                               {"s_bar_floor", loaded.policy.vaccine->s_bar_floor}};
    }
    document["run"] = {{"horizon", loaded.run.horizon},
                       {"extinction_threshold", loaded.run.extinction_threshold},
                       {"mode", loaded.run.mode == ProbabilityMode::strict ? "strict"
                                                                           : "permissive"}};
    if (loaded.run.stop)
        document["run"]["stop"] = {{"x_bar_below", loaded.run.stop->x_bar_below},
                                   {"consecutive", loaded.run.stop->consecutive}};
    return document;
}

/// Four US cities (ATL, LAX, ORD, DFW) coupled by median daily flight counts,
/// scaled by xi travelers per flight count unit. The infection starts in LAX.
inline Scenario builtin_four_city(double xi = 100.0) {
    if (!(xi > 0.0)) throw ScenarioError("four-city scale factor must be strictly positive");
    Scenario sc;
    sc.labels = {"ATL", "LAX", "ORD", "DFW"};
    sc.populations = {0.5e6, 4.0e6, 2.7e6, 1.3e6};
    sc.flows.default_matrix = FlowMatrix(Matrix::from_rows({{0, 15, 23, 19},
                                                            {15, 0, 22, 21},
                                                            {23, 22, 0, 23},
                                                            {19, 21, 23, 0}}))
                                  .scaled(xi);
    sc.params = SpreadParams::homogeneous(4, 0.5, 0.19, 0.34, 0.005, 0.14);
    sc.initial = CompartmentState{{1.0, 0.99, 1.0, 1.0},
                                  {0.0, 0.005, 0.0, 0.0},
                                  {0.0, 0.005, 0.0, 0.0},
                                  {0.0, 0.0, 0.0, 0.0}};
    return sc;
}

inline LoadedScenario builtin_four_city_loaded(double xi = 100.0) {
    LoadedScenario loaded;
    loaded.flow_scale = xi;
    loaded.base_flow = Matrix::from_rows(
        {{0, 15, 23, 19}, {15, 0, 22, 21}, {23, 22, 0, 23}, {19, 21, 23, 0}});
    loaded.scenario = builtin_four_city(xi);
    loaded.policy = ControlPolicy::none();
    loaded.run = RunSettings{20000, 1e-4, ProbabilityMode::strict, {}};
    return loaded;
}

/// CSV table of the whole run: header row, then one row per (step, node).
/// theta and gamma_effective are blank on the final row block, where no
/// further step was taken.
inline std::string run_table_csv(const Trajectory& traj) {
    std::string out = "k,node,s,e,x,r,theta,gamma_effective\n";
    const std::size_t n = traj.nodes();
    for (int k = 0; k <= traj.steps(); ++k) {
        const CompartmentState& state = traj.states[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < n; ++i) {
            out += std::to_string(k);
            out += ',';
            out += traj.labels[i];
            out += ',';
            out += format_double(state.s[i]);
            out += ',';
            out += format_double(state.e[i]);
            out += ',';
            out += format_double(state.x[i]);
            out += ',';
            out += format_double(state.r[i]);
            out += ',';
            if (k < traj.steps()) {
                out += format_double(traj.thetas[static_cast<std::size_t>(k)]);
                out += ',';
                out += format_double(
                    traj.gammas_effective[static_cast<std::size_t>(k)][i]);
            } else {
                out += ',';
            }
            out += '\n';
        }
    }
    return out;
}

inline json summary_json(const Trajectory& traj, const EquilibriumReport& report,
                         const json* scenario_echo = nullptr) {
    json summary;
    summary["format_version"] = kFormatVersion;
    summary["nodes"] = traj.labels;
    summary["steps"] = traj.steps();
    if (report.extinction_step)
        summary["extinction_step"] = *report.extinction_step;
    else
        summary["extinction_step"] = nullptr;
    summary["alpha"] = report.alpha;
    summary["consensus_error"] = report.consensus_error;
    summary["burden"] = report.burden;
    summary["final"] = {{"s_bar", report.final_mean_s},
                        {"e_bar", report.final_mean_e},
                        {"x_bar", report.final_mean_x},
                        {"r_bar", report.final_mean_r}};
    json events = json::array();
    for (const Event& event : traj.events)
        events.push_back(
            {{"step", event.step}, {"kind", to_string(event.kind)}, {"message", event.message}});
    summary["events"] = std::move(events);
    if (scenario_echo) summary["scenario"] = *scenario_echo;
    return summary;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed while writing " + path.string());
}

/// Writes the CSV table to `csv_path` and the summary to
/// `<csv_path>.summary.json`.
inline void write_run_output(const Trajectory& traj, const EquilibriumReport& report,
                             const std::filesystem::path& csv_path,
                             const json* scenario_echo = nullptr) {
    write_text_file(csv_path, run_table_csv(traj));
    std::filesystem::path sidecar = csv_path;
    sidecar += ".summary.json";
    write_text_file(sidecar, summary_json(traj, report, scenario_echo).dump(2) + "\n");
}

struct SweepCell {
    double eta = 0.0;
    double xi = 1.0;
    bool ok = false;
    std::string error;
    std::optional<int> extinction_step;
    double burden = 0.0;
    double r_bar_final = 0.0;
    double peak_x_bar = 0.0;
    std::string csv_file;
    std::string summary_file;
};

struct SweepOptions {
    bool vaccine = false;
    std::optional<int> horizon{};
    std::filesystem::path out_dir{}; // empty: keep results in memory only
    unsigned threads = 0;            // 0: hardware concurrency
};

/// Default roll-out used when a sweep asks for a vaccine but the scenario
/// document does not configure one.
inline VaccinePolicy default_vaccine_policy() { return VaccinePolicy{500, 0.001, 0.01}; }

/// Runs the (eta, xi) grid. eta = 0 disables the proportional controller
/// entirely, so that column is the no-control baseline. Cells run
/// concurrently; every cell writes only its own files and the index is
/// assembled after all cells finish.
inline std::vector<SweepCell> run_sweep(const LoadedScenario& base,
                                        const std::vector<double>& etas,
                                        const std::vector<double>& xis,
                                        const SweepOptions& opts = {}) {
    std::vector<SweepCell> cells;
    for (double eta : etas) {
        for (double xi : xis) {
            SweepCell cell;
            cell.eta = eta;
            cell.xi = xi;
            cells.push_back(std::move(cell));
        }
    }

    const int horizon = opts.horizon.value_or(base.run.horizon);
    const bool write_files = !opts.out_dir.empty();
    if (write_files) std::filesystem::create_directories(opts.out_dir);

    auto run_cell = [&](SweepCell& cell) {
        try {
            Scenario scenario = base.scaled(cell.xi);
            ControlPolicy policy = cell.eta == 0.0 ? ControlPolicy::none()
                                                   : ControlPolicy::proportional(cell.eta);
            if (opts.vaccine)
                policy.vaccine = base.policy.vaccine ? *base.policy.vaccine
                                                     : default_vaccine_policy();
            const ValidationReport report = validate_params(scenario, horizon);
            if (!report.passed()) {
                cell.error = report.errors.front().message;
                return;
            }
            SimulateOptions sim_opts;
            sim_opts.step.mode = base.run.mode;
            sim_opts.stop = base.run.stop;
            const Trajectory traj = simulate(scenario, policy, horizon, sim_opts);
            const EquilibriumReport eq =
                analyze(traj, scenario.params, base.run.extinction_threshold);
            cell.extinction_step = eq.extinction_step;
            cell.burden = eq.burden;
            cell.r_bar_final = eq.final_mean_r;
            for (const auto& state : traj.states)
                cell.peak_x_bar = std::max(cell.peak_x_bar, state.mean_x());
            if (write_files) {
                const std::string stem =
                    "cell_eta" + format_double(cell.eta) + "_xi" + format_double(cell.xi);
                cell.csv_file = stem + ".csv";
                cell.summary_file = stem + ".csv.summary.json";
                write_run_output(traj, eq, opts.out_dir / cell.csv_file);
            }
            cell.ok = true;
        } catch (const Error& e) {
            cell.error = e.what();
        }
    };

    const unsigned workers = std::max(
        1u, opts.threads ? opts.threads
                         : std::min<unsigned>(std::thread::hardware_concurrency(),
                                              static_cast<unsigned>(cells.size())));
    if (workers <= 1 || cells.size() <= 1) {
        for (SweepCell& cell : cells) run_cell(cell);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::future<void>> tasks;
        for (unsigned w = 0; w < workers; ++w) {
            tasks.push_back(std::async(std::launch::async, [&] {
                for (std::size_t i = next.fetch_add(1); i < cells.size();
                     i = next.fetch_add(1))
                    run_cell(cells[i]);
            }));
        }
        for (auto& task : tasks) task.get();
    }

    if (write_files) {
        json index;
        index["format_version"] = kFormatVersion;
        index["vaccine"] = opts.vaccine;
        index["horizon"] = horizon;
        json rows = json::array();
        for (const SweepCell& cell : cells) {
            json row = {{"eta", cell.eta},       {"xi", cell.xi},
                        {"ok", cell.ok},         {"burden", cell.burden},
                        {"r_bar_final", cell.r_bar_final}, {"peak_x_bar", cell.peak_x_bar},
                        {"csv", cell.csv_file},  {"summary", cell.summary_file}};
            if (cell.extinction_step)
                row["extinction_step"] = *cell.extinction_step;
            else
                row["extinction_step"] = nullptr;
            if (!cell.error.empty()) row["error"] = cell.error;
            rows.push_back(std::move(row));
        }
        index["cells"] = std::move(rows);
        write_text_file(opts.out_dir / "index.json", index.dump(2) + "\n");
    }
    return cells;
}

} // namespace epiflow
