// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks against the built binary: exit codes, output files, and
// byte-level determinism of the results tables.

#include <gtest/gtest.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "rpcc/io.hpp"
#include "rpcc/solver.hpp"
#include "rpcc/synthetic.hpp"

namespace rpcc {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct CommandResult {
    int exit_code = -1;
    std::string stdout_text;
    std::string stderr_text;
};

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("rpcc_cli_test_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }

    CommandResult run_cli(const std::string& args) const {
        const fs::path out = dir_ / "stdout.log";
        const fs::path err = dir_ / "stderr.log";
        const std::string cmd = std::string(RPCC_CLI_PATH) + " " + args + " >" + out.string() +
                                " 2>" + err.string();
        const int status = std::system(cmd.c_str());
        CommandResult res;
        res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        res.stdout_text = slurp(out);
        res.stderr_text = slurp(err);
        return res;
    }

    fs::path dir_;
};

TEST_F(CliTest, DecomposeWritesAllOutputs) {
    const std::vector<std::size_t> dims = {10, 10, 10};
    const auto layout = BlockLayout::create(dims, {2, 2, 2});
    const SyntheticInstance inst = generate_instance(dims, layout, 3, 0.05, 404);
    write_tensor_file(dir_ / "y.tnsr", inst.Y);

    const fs::path cfg = dir_ / "run.cfg";
    write_text_file(cfg,
                    "input = " + (dir_ / "y.tnsr").string() + "\n" +
                    "output_dir = " + (dir_ / "out").string() + "\n" +
                    "block_dims = 2,2,2\n"
                    "rank = 6\n"
                    "sigma = 1e-4\n"
                    "seed = 405\n");

    const CommandResult res = run_cli("decompose --config " + cfg.string());
    EXPECT_EQ(res.exit_code, 0) << res.stderr_text;
    EXPECT_TRUE(fs::exists(dir_ / "out" / "lhat.tnsr"));
    EXPECT_TRUE(fs::exists(dir_ / "out" / "shat.tnsr"));
    EXPECT_TRUE(fs::exists(dir_ / "out" / "mask.txt"));
    EXPECT_TRUE(fs::exists(dir_ / "out" / "summary.txt"));

    // The recovered mask matches the planted support.
    const BlockSupport mask = read_mask(dir_ / "out" / "mask.txt");
    EXPECT_EQ(mask, inst.support);

    // Shat on disk equals the projection of the input onto the mask.
    const DenseTensor shat = read_tensor_file(dir_ / "out" / "shat.tnsr");
    const DenseTensor expected = block_project(inst.Y, layout, mask);
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(shat[i], expected[i]);

    const std::string summary = slurp(dir_ / "out" / "summary.txt");
    EXPECT_NE(summary.find("iterations = "), std::string::npos);
    EXPECT_NE(summary.find("converged = true"), std::string::npos);
    EXPECT_NE(summary.find("hardness = "), std::string::npos);
}

TEST_F(CliTest, TruncatedTensorFileExitsTwoWithByteCounts) {
    const DenseTensor t({4, 4}, 1.0);
    write_tensor_file(dir_ / "y.tnsr", t);
    fs::resize_file(dir_ / "y.tnsr", 64);

    const fs::path cfg = dir_ / "run.cfg";
    write_text_file(cfg,
                    "input = " + (dir_ / "y.tnsr").string() + "\n" +
                    "output_dir = " + (dir_ / "out").string() + "\n" +
                    "block_dims = 2,2\nrank = 2\n");

    const CommandResult res = run_cli("decompose --config " + cfg.string());
    EXPECT_EQ(res.exit_code, 2);
    EXPECT_EQ(res.stderr_text.rfind("error:", 0), 0u) << res.stderr_text;
    EXPECT_NE(res.stderr_text.find("expected"), std::string::npos);
}

TEST_F(CliTest, ZeroSigmaExitsTwoNamingTheKey) {
    const DenseTensor t({4, 4}, 1.0);
    write_tensor_file(dir_ / "y.tnsr", t);
    const fs::path cfg = dir_ / "run.cfg";
    write_text_file(cfg,
                    "input = " + (dir_ / "y.tnsr").string() + "\n" +
                    "output_dir = " + (dir_ / "out").string() + "\n" +
                    "block_dims = 2,2\nrank = 2\nsigma = 0\n");

    const CommandResult res = run_cli("decompose --config " + cfg.string());
    EXPECT_EQ(res.exit_code, 2);
    EXPECT_EQ(res.stderr_text.rfind("error:", 0), 0u);
    EXPECT_NE(res.stderr_text.find("sigma"), std::string::npos) << res.stderr_text;
}

TEST_F(CliTest, UnknownConfigKeyExitsTwo) {
    const fs::path cfg = dir_ / "run.cfg";
    write_text_file(cfg, "bogus = 1\n");
    const CommandResult res = run_cli("decompose --config " + cfg.string());
    EXPECT_EQ(res.exit_code, 2);
    EXPECT_NE(res.stderr_text.find("bogus"), std::string::npos);
}

TEST_F(CliTest, SynthBenchWritesRowsAndIsDeterministic) {
    const fs::path cfg = dir_ / "grid.cfg";
    write_text_file(cfg,
                    "output = " + (dir_ / "grid.csv").string() + "\n" +
                    "dims = 10,10,10\n"
                    "block_dims = 2,2,2\n"
                    "r0_set = 3\n"
                    "rho_set = 0.05\n"
                    "trials = 2\n"
                    "sigma = 1e-4\n"
                    "seed = 7\n"
                    "timing = false\n");

    const CommandResult first = run_cli("synth-bench --config " + cfg.string());
    EXPECT_EQ(first.exit_code, 0) << first.stderr_text;
    const std::string csv_first = slurp(dir_ / "grid.csv");

    std::istringstream lines(csv_first);
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "R0,rho,trial,rrse,iou,iterations,seconds");
    int data_rows = 0;
    while (std::getline(lines, line)) {
        if (!line.empty()) ++data_rows;
    }
    EXPECT_EQ(data_rows, 2);

    const CommandResult second = run_cli("synth-bench --config " + cfg.string());
    EXPECT_EQ(second.exit_code, 0);
    EXPECT_EQ(slurp(dir_ / "grid.csv"), csv_first);  // byte-identical
}

TEST_F(CliTest, EvalPrintsMetrics) {
    write_text_file(dir_ / "pred.txt", "1\n2\n");
    write_text_file(dir_ / "truth.txt", "2\n3\n");
    const CommandResult res =
        run_cli("eval --pred " + (dir_ / "pred.txt").string() + " --truth " +
                (dir_ / "truth.txt").string() + " --k 10");
    EXPECT_EQ(res.exit_code, 0) << res.stderr_text;
    EXPECT_NE(res.stdout_text.find("IoU = 0.33333333333333331"), std::string::npos)
        << res.stdout_text;
}

TEST_F(CliTest, EvalIdenticalMasks) {
    write_text_file(dir_ / "mask.txt", "0\n4\n7\n");
    const CommandResult res =
        run_cli("eval --pred " + (dir_ / "mask.txt").string() + " --truth " +
                (dir_ / "mask.txt").string() + " --k 9");
    EXPECT_EQ(res.exit_code, 0);
    EXPECT_NE(res.stdout_text.find("F1 = 1"), std::string::npos);
    EXPECT_NE(res.stdout_text.find("Fa = 0"), std::string::npos);
}

TEST_F(CliTest, EvalRejectsOutOfRangeIndices) {
    write_text_file(dir_ / "pred.txt", "11\n");
    write_text_file(dir_ / "truth.txt", "1\n");
    const CommandResult res =
        run_cli("eval --pred " + (dir_ / "pred.txt").string() + " --truth " +
                (dir_ / "truth.txt").string() + " --k 10");
    EXPECT_EQ(res.exit_code, 2);
    EXPECT_EQ(res.stderr_text.rfind("error:", 0), 0u);
}

TEST_F(CliTest, EvalScoresFromConvergedRunGiveConstantCurves) {
    // Solve a small instance in-process, hand zbar to eval as scores.
    const std::vector<std::size_t> dims = {10, 10, 10};
    const auto layout = BlockLayout::create(dims, {2, 2, 2});
    const SyntheticInstance inst = generate_instance(dims, layout, 3, 0.05, 11);
    Hyperparams hp;
    hp.rank = 6;
    hp.sigma = 1e-4;
    hp.seed = 12;
    const SolveResult solved = run(inst.Y, layout, hp);
    ASSERT_TRUE(solved.converged);

    write_mask(dir_ / "pred.txt", solved.support);
    write_mask(dir_ / "truth.txt", inst.support);
    std::string scores;
    for (Eigen::Index k = 0; k < solved.zbar.size(); ++k) {
        scores += format_double(solved.zbar[k]);
        scores += '\n';
    }
    write_text_file(dir_ / "scores.txt", scores);

    const CommandResult res = run_cli(
        "eval --pred " + (dir_ / "pred.txt").string() + " --truth " +
        (dir_ / "truth.txt").string() + " --k 125 --scores " + (dir_ / "scores.txt").string() +
        " --curves " + (dir_ / "curves.csv").string());
    EXPECT_EQ(res.exit_code, 0) << res.stderr_text;
    EXPECT_TRUE(fs::exists(dir_ / "curves.csv"));

    // A hard classifier's curves are constant on (0,1], so each AUC matches
    // the constant metric up to the tau = 0 grid cell.
    EXPECT_NE(res.stdout_text.find("F1 = 1"), std::string::npos) << res.stdout_text;
    const auto auc_pos = res.stdout_text.find("AUC_F1 = ");
    ASSERT_NE(auc_pos, std::string::npos);
    const double auc_f1 = std::stod(res.stdout_text.substr(auc_pos + 9));
    EXPECT_NEAR(auc_f1, 1.0, 2e-3);
}

TEST_F(CliTest, MissingSubcommandFails) {
    const CommandResult res = run_cli("");
    EXPECT_EQ(res.exit_code, 2);
    EXPECT_EQ(res.stderr_text.rfind("error:", 0), 0u);
}

}  // namespace
}  // namespace rpcc
