/* End-to-end checks of the command-line surface: subcommands, exit codes,
 * and output files. Each test shells out to the built binary.
 */
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "epiflow/scenario_io.hpp"

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
    const std::string command = std::string(EPIFLOW_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(command.c_str());
    return WEXITSTATUS(status);
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        // One directory per test: ctest may run the cases concurrently.
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("epiflow_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        scenario_path_ = dir_ / "four_city.json";
        std::ofstream out(scenario_path_);
        out << epiflow::scenario_document(epiflow::builtin_four_city_loaded()).dump(2);
    }

    void TearDown() override { fs::remove_all(dir_); }

    void write_scenario(const epiflow::json& document, const fs::path& path) {
        std::ofstream out(path);
        out << document.dump(2);
    }

    fs::path dir_;
    fs::path scenario_path_;
};

TEST_F(CliTest, ValidateAcceptsTheBuiltinScenario) {
    EXPECT_EQ(run_cli("validate " + scenario_path_.string()), 0);
}

TEST_F(CliTest, ValidateRejectsABrokenScenarioWithExitOne) {
    epiflow::json document = epiflow::scenario_document(epiflow::builtin_four_city_loaded());
    document["params"]["h"] = 3.0;
    const fs::path path = dir_ / "bad_h.json";
    write_scenario(document, path);
    EXPECT_EQ(run_cli("validate " + path.string()), 1);
}

TEST_F(CliTest, RunRejectsABrokenScenarioWithExitOne) {
    epiflow::json document = epiflow::scenario_document(epiflow::builtin_four_city_loaded());
    document["params"]["h"] = 3.0;
    const fs::path path = dir_ / "bad_h.json";
    write_scenario(document, path);
    EXPECT_EQ(run_cli("run " + path.string()), 1);
}

TEST_F(CliTest, RunWritesTableAndSummary) {
    const fs::path out = dir_ / "out.csv";
    EXPECT_EQ(run_cli("run " + scenario_path_.string() + " --horizon 5 --out " + out.string()),
              0);
    EXPECT_TRUE(fs::exists(out));
    EXPECT_TRUE(fs::exists(dir_ / "out.csv.summary.json"));
    std::ifstream csv(out);
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "k,node,s,e,x,r,theta,gamma_effective");
}

TEST_F(CliTest, RunIsByteDeterministic) {
    const fs::path out_a = dir_ / "a.csv";
    const fs::path out_b = dir_ / "b.csv";
    ASSERT_EQ(run_cli("run " + scenario_path_.string() + " --horizon 40 --out " +
                      out_a.string()),
              0);
    ASSERT_EQ(run_cli("run " + scenario_path_.string() + " --horizon 40 --out " +
                      out_b.string()),
              0);
    auto read = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    EXPECT_EQ(read(out_a), read(out_b));
}

TEST_F(CliTest, RuntimeModelViolationExitsTwo) {
    // Passes the static checks (h*sigma = 0.99, h*(sigma+gamma) < 1) but the
    // state-dependent travel probability breaks the exposed-rate bound at
    // step 0.
    epiflow::json document = {
        {"format_version", 1},
        {"nodes",
         {{{"label", "A"}, {"population", 1000.0}}, {{"label", "B"}, {"population", 1000.0}}}},
        {"flow", {{"matrix", {{0.0, 5.0}, {5.0, 0.0}}}}},
        {"params",
         {{"beta", 0.3}, {"sigma", 1.0}, {"delta", 0.3}, {"p_x", 0.0}, {"h", 0.99}}},
        {"initial",
         {{"s", {0.4, 0.4}}, {"e", {0.0, 0.0}}, {"x", {0.6, 0.6}}, {"r", {0.0, 0.0}}}},
        {"run", {{"horizon", 10}}}};
    const fs::path path = dir_ / "runtime_violation.json";
    write_scenario(document, path);
    EXPECT_EQ(run_cli("run " + path.string()), 2);
}

TEST_F(CliTest, MissingScenarioFileExitsThree) {
    EXPECT_EQ(run_cli("run " + (dir_ / "nope.json").string()), 3);
}

TEST_F(CliTest, UsageErrorsExitSixtyFour) {
    EXPECT_EQ(run_cli("frobnicate"), 64);
    EXPECT_EQ(run_cli("run"), 64);
    EXPECT_EQ(run_cli("run x.json --frobnicate"), 64);
    EXPECT_EQ(run_cli(""), 64);
}

TEST_F(CliTest, RunStdoutIsPureSummaryJson) {
    const fs::path out = dir_ / "piped.csv";
    const fs::path captured = dir_ / "stdout.json";
    const std::string command = std::string(EPIFLOW_CLI_PATH) + " run " +
                                scenario_path_.string() + " --horizon 5 --out " + out.string() +
                                " > " + captured.string() + " 2>/dev/null";
    ASSERT_EQ(WEXITSTATUS(std::system(command.c_str())), 0);
    std::ifstream in(captured);
    epiflow::json summary;
    in >> summary; // throws if anything non-JSON leaked onto stdout
    EXPECT_EQ(summary["steps"], 5);
}

TEST_F(CliTest, BuiltinPrintsALoadableDocument) {
    const fs::path out = dir_ / "printed.json";
    const std::string command = std::string(EPIFLOW_CLI_PATH) + " builtin four-city --xi 50 > " +
                                out.string() + " 2>/dev/null";
    ASSERT_EQ(WEXITSTATUS(std::system(command.c_str())), 0);
    const epiflow::LoadedScenario loaded = epiflow::load_scenario_file(out);
    EXPECT_DOUBLE_EQ(loaded.flow_scale, 50.0);
    EXPECT_DOUBLE_EQ(loaded.scenario.flows.default_matrix.flow(1, 0), 750.0);
}

TEST_F(CliTest, SweepWritesGridAndIndex) {
    const fs::path out_dir = dir_ / "sweep";
    EXPECT_EQ(run_cli("sweep " + scenario_path_.string() +
                      " --eta 0,10 --xi 100 --horizon 50 --out " + out_dir.string()),
              0);
    EXPECT_TRUE(fs::exists(out_dir / "index.json"));
    EXPECT_TRUE(fs::exists(out_dir / "cell_eta0_xi100.csv"));
    EXPECT_TRUE(fs::exists(out_dir / "cell_eta10_xi100.csv"));
}

TEST_F(CliTest, SweepVaccineFlagChangesTheGrid) {
    const fs::path plain_dir = dir_ / "plain";
    const fs::path dosed_dir = dir_ / "dosed";
    ASSERT_EQ(run_cli("sweep " + scenario_path_.string() +
                      " --eta 0 --xi 100 --horizon 700 --out " + plain_dir.string()),
              0);
    ASSERT_EQ(run_cli("sweep " + scenario_path_.string() +
                      " --eta 0 --xi 100 --horizon 700 --vaccine --out " + dosed_dir.string()),
              0);
    auto final_r_bar = [](const fs::path& index_path) {
        std::ifstream in(index_path);
        epiflow::json index;
        in >> index;
        return index["cells"][0]["r_bar_final"].get<double>();
    };
    // The default roll-out starts at step 500, so by step 700 the recovered
    // share includes vaccinated mass.
    EXPECT_GT(final_r_bar(dosed_dir / "index.json"), final_r_bar(plain_dir / "index.json"));
}

TEST_F(CliTest, PermissiveFlagIsAccepted) {
    EXPECT_EQ(run_cli("run " + scenario_path_.string() + " --horizon 5 --permissive"), 0);
}

} // namespace
