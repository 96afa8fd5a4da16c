#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include "epiflow/scenario_io.hpp"

using namespace epiflow;

namespace {

json builtin_document(double xi = 100.0) {
    return scenario_document(builtin_four_city_loaded(xi));
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream stream(text);
    std::string token;
    while (std::getline(stream, token, sep)) out.push_back(token);
    return out;
}

} // namespace

TEST(BuiltinFourCity, MatchesTheDocumentedSetup) {
    const Scenario sc = builtin_four_city(100.0);
    EXPECT_EQ(sc.labels, (std::vector<std::string>{"ATL", "LAX", "ORD", "DFW"}));
    EXPECT_EQ(sc.populations, (std::vector<double>{0.5e6, 4.0e6, 2.7e6, 1.3e6}));
    EXPECT_DOUBLE_EQ(sc.flows.default_matrix.flow(1, 0), 1500.0);
    const auto gamma = outflow_fraction(sc.flows.default_matrix, sc.populations);
    EXPECT_DOUBLE_EQ(gamma[0], 0.0114);
    EXPECT_DOUBLE_EQ(sc.params.beta[0], 0.5);
    EXPECT_DOUBLE_EQ(sc.params.delta[1], 0.34);
    EXPECT_DOUBLE_EQ(sc.params.sigma[2], 0.19);
    EXPECT_DOUBLE_EQ(sc.params.p_x[3], 0.005);
    EXPECT_DOUBLE_EQ(sc.params.h, 0.14);
    EXPECT_DOUBLE_EQ(sc.initial.s[1], 0.99);
    EXPECT_DOUBLE_EQ(sc.initial.e[1], 0.005);
    EXPECT_DOUBLE_EQ(sc.initial.x[1], 0.005);
    // Symmetric flight counts balance exactly.
    EXPECT_TRUE(check_balance(sc.flows.default_matrix, 0.0).balanced);
}

TEST(BuiltinFourCity, RejectsNonPositiveScale) {
    EXPECT_THROW(builtin_four_city(0.0), ScenarioError);
    EXPECT_THROW(builtin_four_city(-3.0), ScenarioError);
}

TEST(ScenarioDocument, BuiltinRoundTripsExactly) {
    const json document = builtin_document();
    const LoadedScenario reloaded = load_scenario(document);
    EXPECT_EQ(scenario_document(reloaded), document);

    const Scenario& original = builtin_four_city_loaded().scenario;
    EXPECT_EQ(reloaded.scenario.labels, original.labels);
    EXPECT_EQ(reloaded.scenario.populations, original.populations);
    EXPECT_EQ(reloaded.scenario.flows.default_matrix, original.flows.default_matrix);
    EXPECT_EQ(reloaded.scenario.initial, original.initial);
    EXPECT_EQ(reloaded.scenario.params.beta, original.params.beta);
    EXPECT_EQ(reloaded.scenario.params.h, original.params.h);
    EXPECT_EQ(reloaded.run.horizon, 20000);
}

TEST(ScenarioDocument, TextRoundTripSurvivesDumpAndParse) {
    const json document = builtin_document(250.0);
    const LoadedScenario reloaded = parse_scenario(document.dump());
    EXPECT_EQ(scenario_document(reloaded), document);
}

TEST(LoadScenario, NegativeBetaIsAFieldAddressedError) {
    json document = builtin_document();
    document["params"]["beta"] = -0.5;
    try {
        load_scenario(document);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(e.field().find("params"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
    }
}

TEST(LoadScenario, UnbalancedMatrixNamesTheCheck) {
    json document = builtin_document();
    document["flow"]["matrix"][0][1] = 40.0; // breaks symmetry
    try {
        load_scenario(document);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(e.field().find("flow-balance"), std::string::npos);
    }
}

TEST(LoadScenario, UnknownFieldsAreRejected) {
    json document = builtin_document();
    document["surprise"] = 1;
    try {
        load_scenario(document);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.field(), "$.surprise");
    }

    json nested = builtin_document();
    nested["params"]["bta"] = 0.5;
    try {
        load_scenario(nested);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.field(), "$.params.bta");
    }
}

TEST(LoadScenario, MissingFieldsAreRejected) {
    json document = builtin_document();
    document["params"].erase("h");
    try {
        load_scenario(document);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.field(), "$.params.h");
    }
}

TEST(LoadScenario, ScalarParametersBroadcast) {
    json document = builtin_document();
    document["params"]["beta"] = json::array({0.5, 0.6, 0.7, 0.8});
    const LoadedScenario loaded = load_scenario(document);
    EXPECT_EQ(loaded.scenario.params.beta, (std::vector<double>{0.5, 0.6, 0.7, 0.8}));
    EXPECT_EQ(loaded.scenario.params.sigma, std::vector<double>(4, 0.19));
}

TEST(LoadScenario, ControlAndVaccineSectionsParse) {
    json document = builtin_document();
    document["control"] = {{"kind", "binary"},
                           {"shutdown_step", 50},
                           {"reopen", {{"rule", "threshold"}, {"value", 0.001}}}};
    document["vaccine"] = {{"start_step", 500}, {"rate", 0.001}, {"s_bar_floor", 0.01}};
    document["run"]["mode"] = "permissive";
    const LoadedScenario loaded = load_scenario(document);
    EXPECT_EQ(loaded.policy.kind, RestrictionKind::binary);
    EXPECT_EQ(loaded.policy.binary.shutdown_step, 50);
    EXPECT_EQ(loaded.policy.binary.rule, ReopenRule::threshold);
    EXPECT_DOUBLE_EQ(loaded.policy.binary.level, 0.001);
    ASSERT_TRUE(loaded.policy.vaccine.has_value());
    EXPECT_EQ(loaded.policy.vaccine->start_step, 500);
    EXPECT_EQ(loaded.run.mode, ProbabilityMode::permissive);
}

TEST(LoadScenario, ZeroReopenRuleDefaultsToNumericalZero) {
    json document = builtin_document();
    document["control"] = {{"kind", "binary"},
                           {"shutdown_step", 0},
                           {"reopen", {{"rule", "zero"}}}};
    const LoadedScenario loaded = load_scenario(document);
    EXPECT_EQ(loaded.policy.binary.rule, ReopenRule::zero);
    EXPECT_DOUBLE_EQ(loaded.policy.binary.level, 1e-9);
}

TEST(LoadScenario, StopRuleParses) {
    json document = builtin_document();
    document["run"]["stop"] = {{"x_bar_below", 1e-4}, {"consecutive", 5}};
    const LoadedScenario loaded = load_scenario(document);
    ASSERT_TRUE(loaded.run.stop.has_value());
    EXPECT_DOUBLE_EQ(loaded.run.stop->x_bar_below, 1e-4);
    EXPECT_EQ(loaded.run.stop->consecutive, 5);
}

TEST(RunTable, ZeroHorizonHasHeaderPlusOneRowPerNode) {
    const Trajectory traj = simulate(builtin_four_city(), ControlPolicy::none(), 0);
    const std::string csv = run_table_csv(traj);
    const auto lines = split(csv, '\n');
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_EQ(lines[0], "k,node,s,e,x,r,theta,gamma_effective");
    for (std::size_t row = 1; row < lines.size(); ++row)
        EXPECT_EQ(split(lines[row] + "|", ',').size(), 8u);
}

TEST(RunTable, RowCountAndColumnOrder) {
    const Trajectory traj = simulate(builtin_four_city(), ControlPolicy::none(), 7);
    const std::string csv = run_table_csv(traj);
    const auto lines = split(csv, '\n');
    ASSERT_EQ(lines.size(), 1u + 8u * 4u);
    const auto first = split(lines[1], ',');
    EXPECT_EQ(first[0], "0");
    EXPECT_EQ(first[1], "ATL");
    EXPECT_EQ(first[2], "1");
    // theta column carries the applied penalty for stepped rows.
    EXPECT_EQ(first[6], "1");
    // Final block has no step, so theta and gamma_effective are blank.
    const auto last = split(lines[lines.size() - 1] + "|", ',');
    EXPECT_EQ(last[0], "7");
    EXPECT_EQ(last[6], "");
    EXPECT_EQ(last[7], "|");
}

TEST(RunTable, FloatsRoundTripThroughTheShortestForm) {
    std::mt19937 rng(12);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const double value = uniform(rng);
        EXPECT_EQ(std::stod(format_double(value)), value);
    }
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(1.0), "1");
}

TEST(RunTable, ByteIdenticalAcrossRepeatedRuns) {
    const std::string a =
        run_table_csv(simulate(builtin_four_city(), ControlPolicy::none(), 50));
    const std::string b =
        run_table_csv(simulate(builtin_four_city(), ControlPolicy::none(), 50));
    EXPECT_EQ(a, b);
}

TEST(SummaryJson, CarriesTheEquilibriumReport) {
    const Scenario sc = builtin_four_city();
    const Trajectory traj = simulate(sc, ControlPolicy::none(), 2000);
    const EquilibriumReport report = analyze(traj, sc.params);
    const json summary = summary_json(traj, report);
    EXPECT_EQ(summary["steps"], 2000);
    EXPECT_EQ(summary["extinction_step"], 1690);
    EXPECT_DOUBLE_EQ(summary["alpha"].get<double>(), report.alpha);
    EXPECT_DOUBLE_EQ(summary["burden"].get<double>(), report.burden);
}

TEST(WriteRunOutput, ProducesTableAndSidecar) {
    const auto dir = std::filesystem::temp_directory_path() / "epiflow_io_test";
    std::filesystem::create_directories(dir);
    const auto csv_path = dir / "run.csv";
    const Scenario sc = builtin_four_city();
    const Trajectory traj = simulate(sc, ControlPolicy::none(), 3);
    const EquilibriumReport report = analyze(traj, sc.params);
    write_run_output(traj, report, csv_path);
    EXPECT_TRUE(std::filesystem::exists(csv_path));
    EXPECT_TRUE(std::filesystem::exists(dir / "run.csv.summary.json"));
    std::ifstream in(dir / "run.csv.summary.json");
    json parsed;
    in >> parsed;
    EXPECT_EQ(parsed["steps"], 3);
    std::filesystem::remove_all(dir);
}

TEST(Sweep, EtaZeroColumnIsTheUncontrolledBaseline) {
    const LoadedScenario base = builtin_four_city_loaded();
    SweepOptions opts;
    opts.horizon = 300;
    opts.threads = 2;
    const auto cells = run_sweep(base, {0.0, 5.0}, {100.0}, opts);
    ASSERT_EQ(cells.size(), 2u);
    ASSERT_TRUE(cells[0].ok);
    ASSERT_TRUE(cells[1].ok);

    const Trajectory baseline = simulate(base.scenario, ControlPolicy::none(), 300);
    EXPECT_DOUBLE_EQ(cells[0].burden, infection_burden(baseline, base.scenario.params));
    EXPECT_NE(cells[0].burden, cells[1].burden);
}

TEST(Sweep, WritesPerCellFilesAndAnIndex) {
    const auto dir = std::filesystem::temp_directory_path() / "epiflow_sweep_test";
    std::filesystem::remove_all(dir);
    const LoadedScenario base = builtin_four_city_loaded();
    SweepOptions opts;
    opts.horizon = 50;
    opts.out_dir = dir;
    const auto cells = run_sweep(base, {0.0, 2.0}, {50.0, 100.0}, opts);
    ASSERT_EQ(cells.size(), 4u);
    for (const auto& cell : cells) {
        EXPECT_TRUE(cell.ok) << cell.error;
        EXPECT_TRUE(std::filesystem::exists(dir / cell.csv_file));
        EXPECT_TRUE(std::filesystem::exists(dir / cell.summary_file));
    }
    std::ifstream in(dir / "index.json");
    ASSERT_TRUE(in.good());
    json index;
    in >> index;
    EXPECT_EQ(index["cells"].size(), 4u);
    EXPECT_EQ(index["cells"][0]["eta"], 0.0);
    std::filesystem::remove_all(dir);
}

TEST(Sweep, InvalidCellsAreReportedNotThrown) {
    const LoadedScenario base = builtin_four_city_loaded();
    SweepOptions opts;
    opts.horizon = 10;
    // xi large enough to push gamma past 1 at ATL.
    const auto cells = run_sweep(base, {0.0}, {100.0, 1e5}, opts);
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_TRUE(cells[0].ok);
    EXPECT_FALSE(cells[1].ok);
    EXPECT_FALSE(cells[1].error.empty());
}
