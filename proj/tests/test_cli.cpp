#include "support/fixtures.hpp"
#include "support/oracle.hpp"
#include "trqsim/report_io.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>

namespace fs = std::filesystem;
using namespace trq;

namespace {

int run(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + TRQSIM_BIN + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path mlp_dir() {
    support::mlp();  // builds the files on first use
    return support::fixture_dir() / "mlp";
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string model_args() {
    return "--model " + q(mlp_dir() / "model.json") + " --calib-set " + q(mlp_dir() / "train.json");
}

// eval subset file so calibrate runs stay short
fs::path small_eval() {
    const fs::path p = support::fixture_dir() / "mlp_eval200" / "eval.json";
    if (!fs::exists(p)) {
        fs::create_directories(p.parent_path());
        save_dataset(support::head(support::mlp().eval, 200), p);
    }
    return p;
}

std::size_t count_files(const fs::path& dir, const std::string& prefix) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        n += e.path().filename().string().rfind(prefix, 0) == 0 ? 1 : 0;
    }
    return n;
}

}  // namespace

TEST(Cli, ProfileWritesOneFilePerWeightedLayer) {
    const auto dir = support::scratch("cli_profile");
    ASSERT_EQ(run("profile " + model_args() + " --out " + q(dir / "a"), dir / "log"), 0) << read_text(dir / "log");
    EXPECT_EQ(count_files(dir / "a", "profile_"), 2u);
    EXPECT_TRUE(fs::exists(dir / "a" / "profiles.csv"));
    const auto p = parse_profile(read_text(dir / "a" / "profile_1_fc1.json"));
    EXPECT_EQ(p.layer, 1);
    EXPECT_GT(p.count, 0u);
}

TEST(Cli, ProfileRerunIsByteIdentical) {
    const auto dir = support::scratch("cli_profile_rerun");
    const std::string args = "profile " + model_args() + " --seed 5 --dump-bl ";
    ASSERT_EQ(run(args + q(dir / "a.bl") + " --out " + q(dir / "a"), dir / "log"), 0);
    ASSERT_EQ(run(args + q(dir / "b.bl") + " --out " + q(dir / "b"), dir / "log"), 0);
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        EXPECT_EQ(read_text(e.path()), read_text(dir / "b" / e.path().filename())) << e.path();
    }
    EXPECT_EQ(read_text(dir / "a.bl"), read_text(dir / "b.bl"));
    // a different seed draws a different subset
    ASSERT_EQ(run("profile " + model_args() + " --seed 6 --out " + q(dir / "c"), dir / "log"), 0);
    EXPECT_NE(read_text(dir / "a" / "profiles.csv"), read_text(dir / "c" / "profiles.csv"));
}

TEST(Cli, MissingDatasetFlagIsValidationError) {
    const auto dir = support::scratch("cli_missing_flag");
    EXPECT_EQ(run("profile --model " + q(mlp_dir() / "model.json") + " --out " + q(dir / "out"), dir / "log"), 2);
    EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Cli, MissingFilesAreIoErrors) {
    const auto dir = support::scratch("cli_missing_file");
    EXPECT_EQ(run("profile --model " + q(mlp_dir() / "model.json") + " --calib-set " + q(dir / "nope.json") +
                      " --out " + q(dir / "out"),
                  dir / "log"),
              3);
    EXPECT_FALSE(fs::exists(dir / "out"));
    EXPECT_EQ(run("profile --model " + q(dir / "nope.json") + " --calib-set " + q(mlp_dir() / "train.json") +
                      " --out " + q(dir / "out"),
                  dir / "log"),
              3);
}

TEST(Cli, BadArgumentsAreValidationErrors) {
    const auto dir = support::scratch("cli_bad_args");
    EXPECT_EQ(run("", dir / "log"), 2);
    EXPECT_EQ(run("profile --bogus 1", dir / "log"), 2);
    EXPECT_EQ(run("profile " + model_args() + " --r-adc banana --out " + q(dir / "o"), dir / "log"), 2);
    EXPECT_EQ(run("sweep " + model_args() + " --eval-set " + q(small_eval()) + " --bits 0:8 --out " + q(dir / "o"),
                  dir / "log"),
              2);
}

TEST(Cli, CalibrateLooseThresholdAndRerun) {
    const auto dir = support::scratch("cli_calibrate");
    const std::string args = "calibrate " + model_args() + " --eval-set " + q(small_eval()) + " --acc-threshold 1.0";
    ASSERT_EQ(run(args + " --out " + q(dir / "a"), dir / "log"), 0) << read_text(dir / "log");
    const auto r = parse_calibration(read_text(dir / "a" / "calibration.json"));
    EXPECT_EQ(r.n_max, 1);
    EXPECT_FALSE(r.warning);
    ASSERT_EQ(run(args + " --out " + q(dir / "b"), dir / "log"), 0);
    EXPECT_EQ(read_text(dir / "a" / "calibration.json"), read_text(dir / "b" / "calibration.json"));
    EXPECT_EQ(read_text(dir / "a" / "calibration_energy.csv"), read_text(dir / "b" / "calibration_energy.csv"));
}

TEST(Cli, CalibrateThenSimulateOnCalibrationData) {
    const auto dir = support::scratch("cli_calibrate_simulate");
    ASSERT_EQ(run("calibrate " + model_args() + " --eval-set " + q(small_eval()) + " --out " + q(dir / "cal"),
                  dir / "log"),
              0)
        << read_text(dir / "log");
    const auto r = parse_calibration(read_text(dir / "cal" / "calibration.json"));
    EXPECT_LE(r.baseline_accuracy - r.accuracy, 0.01 + 1e-12);
    bool any_trq = false;
    for (const auto& l : r.layers) {
        any_trq = any_trq || std::holds_alternative<TrqParams>(l.mode);
    }
    EXPECT_TRUE(any_trq);

    // the exact calibration subset, written out as its own dataset
    const auto calib = support::calib_subset(support::mlp());
    fs::create_directories(dir / "calib");
    save_dataset(calib, dir / "calib" / "set.json");
    ASSERT_EQ(run("simulate --model " + q(mlp_dir() / "model.json") + " --eval-set " + q(dir / "calib" / "set.json") +
                      " --config " + q(dir / "cal" / "calibration.json") + " --out " + q(dir / "sim"),
                  dir / "log"),
              0)
        << read_text(dir / "log");
    const auto sim = nlohmann::json::parse(read_text(dir / "sim" / "simulation.json"));
    EXPECT_TRUE(sim.at("discrepancies").empty()) << sim.dump();
    EXPECT_EQ(sim.at("predicted_ops").get<std::uint64_t>(), sim.at("configured_ops").get<std::uint64_t>());
    std::uint64_t expected = 0;
    for (const auto& l : r.layers) {
        expected += l.expected_ops;
    }
    EXPECT_EQ(sim.at("configured_ops").get<std::uint64_t>(), expected);
}

TEST(Cli, LosslessSimulateMatchesReferenceExecutor) {
    const auto dir = support::scratch("cli_simulate");
    ASSERT_EQ(run("simulate --model " + q(mlp_dir() / "model.json") + " --eval-set " + q(small_eval()) +
                      " --baseline --dump-trace " + q(dir / "trace.txt") + " --trace-limit 4 --out " + q(dir / "sim"),
                  dir / "log"),
              0)
        << read_text(dir / "log");
    const auto sim = nlohmann::json::parse(read_text(dir / "sim" / "simulation.json"));
    const double want = oracle::reference_accuracy(support::mlp().model, load_dataset(small_eval()), nullptr);
    EXPECT_EQ(sim.at("accuracy").get<double>(), want);
    EXPECT_EQ(sim.at("baseline_accuracy").get<double>(), want);
    EXPECT_EQ(sim.at("reduction_ratio").get<double>(), 1.0);
    const auto trace = read_text(dir / "trace.txt");
    EXPECT_EQ(std::count(trace.begin(), trace.end(), '#'), 4);
    EXPECT_EQ(parse_energy(read_text(dir / "sim" / "energy.json")).reduction_ratio(), 1.0);
}

TEST(Cli, SimulateRejectsEmptyEvalAndForeignConfig) {
    const auto dir = support::scratch("cli_simulate_errors");
    Dataset empty;
    empty.inputs = make_tensor<float>({0, 1, 28, 28}, {});
    fs::create_directories(dir / "empty");
    save_dataset(empty, dir / "empty" / "set.json");
    EXPECT_EQ(run("simulate --model " + q(mlp_dir() / "model.json") + " --eval-set " + q(dir / "empty" / "set.json") +
                      " --out " + q(dir / "sim"),
                  dir / "log"),
              2);
    EXPECT_FALSE(fs::exists(dir / "sim"));

    CalibrationResult foreign;
    foreign.layers.push_back({2, "relu1", DistributionClass::Other, UniformAdc{4, 1.0}, 0.0, 0, 0});
    write_text(dir / "foreign.json", calibration_json(foreign));
    EXPECT_EQ(run("simulate --model " + q(mlp_dir() / "model.json") + " --eval-set " + q(small_eval()) +
                      " --config " + q(dir / "foreign.json") + " --out " + q(dir / "sim"),
                  dir / "log"),
              2);
    EXPECT_FALSE(fs::exists(dir / "sim"));
}

TEST(Cli, SweepRows) {
    const auto dir = support::scratch("cli_sweep");
    ASSERT_EQ(run("sweep " + model_args() + " --eval-set " + q(small_eval()) + " --bits 8:6 --out " + q(dir / "s"),
                  dir / "log"),
              0)
        << read_text(dir / "log");
    const auto csv = read_text(dir / "s" / "sweep.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    EXPECT_EQ(csv.rfind("bits,uniform_accuracy,trq_accuracy,uniform_ops,trq_ops\n", 0), 0u);
    // 8-bit row: both columns are the lossless accuracy
    std::istringstream is(csv);
    std::string header, row8;
    std::getline(is, header);
    std::getline(is, row8);
    std::vector<std::string> f;
    std::stringstream rs(row8);
    for (std::string c; std::getline(rs, c, ',');) {
        f.push_back(c);
    }
    ASSERT_EQ(f.size(), 5u);
    EXPECT_EQ(f[0], "8");
    EXPECT_EQ(f[1], f[2]);
    EXPECT_EQ(f[3], f[4]);
}
