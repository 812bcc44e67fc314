// SPDX-License-Identifier: Apache-2.0
//
// rpcc: blockwise robust principal component completion at the command line.
//
//   rpcc decompose   --config cfg   recover background/foreground/support
//   rpcc synth-bench --config cfg   run the synthetic experiment grid
//   rpcc eval ...                   score predicted masks against truth
//
// Exit codes: 0 success, 2 I/O or configuration failure, 3 numerical failure.

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "rpcc/io.hpp"
#include "rpcc/metrics.hpp"
#include "rpcc/solver.hpp"
#include "rpcc/synthetic.hpp"

namespace {

namespace fs = std::filesystem;

int cmd_decompose(const std::string& config_path) {
    rpcc::ConfigDoc doc = rpcc::ConfigDoc::parse_file(config_path);
    std::set<std::string> allowed = rpcc::hyperparam_keys();
    allowed.insert({"input", "output_dir", "block_dims"});
    doc.require_known(allowed);

    const rpcc::Hyperparams hp = rpcc::hyperparams_from_config(doc);
    if (!doc.has("rank")) throw rpcc::ConfigError("missing required config key 'rank'");
    const fs::path input = doc.get_string("input");
    const fs::path out_dir = doc.get_string("output_dir");
    const auto block_dims = doc.get_size_list("block_dims");

    const rpcc::DenseTensor y = rpcc::read_tensor_file(input);
    rpcc::BlockLayout layout;
    try {
        layout = rpcc::BlockLayout::create(y.dims(), block_dims);
    } catch (const std::invalid_argument& e) {
        throw rpcc::ConfigError(std::string("config key 'block_dims': ") + e.what());
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);

    const auto start = std::chrono::steady_clock::now();
    const rpcc::SolveResult res = rpcc::run(y, layout, hp);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    rpcc::write_tensor_file(out_dir / "lhat.tnsr", res.lhat);
    rpcc::write_tensor_file(out_dir / "shat.tnsr", res.shat);
    rpcc::write_mask(out_dir / "mask.txt", res.support);

    char buf[64];
    std::string summary;
    summary += "iterations = " + std::to_string(res.iterations) + "\n";
    summary += std::string("converged = ") + (res.converged ? "true" : "false") + "\n";
    summary += "hardness = " + rpcc::format_double(res.hardness) + "\n";
    summary += "support_size = " + std::to_string(res.support.size()) + "\n";
    std::snprintf(buf, sizeof(buf), "%.3f", seconds);
    summary += std::string("wall_seconds = ") + buf + "\n";
    rpcc::write_text_file(out_dir / "summary.txt", summary);

    std::cout << "wrote " << (out_dir / "lhat.tnsr").string() << ", "
              << (out_dir / "shat.tnsr").string() << ", "
              << (out_dir / "mask.txt").string() << ", "
              << (out_dir / "summary.txt").string() << "\n"
              << "iterations=" << res.iterations << " converged=" << res.converged
              << " support_size=" << res.support.size() << "\n";
    return 0;
}

int cmd_synth_bench(const std::string& config_path) {
    rpcc::ConfigDoc doc = rpcc::ConfigDoc::parse_file(config_path);
    std::set<std::string> allowed = rpcc::hyperparam_keys();
    allowed.erase("rank");  // the grid pins R = 2 * R0
    allowed.insert({"output", "dims", "block_dims", "r0_set", "rho_set", "trials", "threads",
                    "timing"});
    doc.require_known(allowed);

    const rpcc::Hyperparams hp = rpcc::hyperparams_from_config(doc);
    const fs::path output = doc.get_string("output");
    const auto dims = doc.get_size_list("dims");
    const auto block_dims = doc.get_size_list("block_dims");
    const auto r0_set = doc.get_int_list("r0_set");
    const auto rho_set = doc.get_double_list("rho_set");
    const int trials = static_cast<int>(doc.get_int("trials"));
    if (trials < 1) throw rpcc::ConfigError("config key 'trials': must be at least 1");
    for (int r0 : r0_set) {
        if (r0 < 1) throw rpcc::ConfigError("config key 'r0_set': ranks must be at least 1");
    }
    for (double rho : rho_set) {
        if (!(rho >= 0.0 && rho <= 1.0)) {
            throw rpcc::ConfigError("config key 'rho_set': ratios must lie in [0,1]");
        }
    }
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const auto threads = static_cast<unsigned>(doc.get_int("threads", hw));
    const bool timing = doc.get_bool("timing", true);

    rpcc::BlockLayout layout;
    try {
        layout = rpcc::BlockLayout::create(dims, block_dims);
    } catch (const std::invalid_argument& e) {
        throw rpcc::ConfigError(std::string("config key 'block_dims': ") + e.what());
    }

    const auto rows = rpcc::run_grid(r0_set, rho_set, trials, dims, layout, hp, threads);
    rpcc::write_text_file(output, rpcc::grid_csv(rows, timing));

    std::size_t failures = 0;
    for (const auto& row : rows) failures += row.failed ? 1 : 0;
    std::cout << "wrote " << output.string() << " (" << rows.size() << " rows, " << failures
              << " failed)\n";
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& truth_path, std::size_t block_count,
             const std::string& scores_path, const std::string& curves_path) {
    const rpcc::BlockSupport pred = rpcc::read_mask(pred_path);
    const rpcc::BlockSupport truth = rpcc::read_mask(truth_path);
    try {
        pred.require_within(block_count);
        truth.require_within(block_count);
    } catch (const std::out_of_range& e) {
        throw rpcc::IoError(e.what());
    }

    const rpcc::F1FaResult ff = rpcc::f1_fa(pred, truth, block_count);
    const double overlap = rpcc::iou(pred, truth);
    std::cout << "F1 = " << rpcc::format_double(ff.f1) << "\n"
              << "IoU = " << rpcc::format_double(overlap) << "\n"
              << "Fa = " << rpcc::format_double(ff.fa) << "\n";

    if (scores_path.empty()) return 0;

    std::ifstream in(scores_path);
    if (!in) throw rpcc::IoError("cannot open '" + scores_path + "' for reading");
    std::vector<double> scores;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            std::size_t pos = 0;
            scores.push_back(std::stod(line, &pos));
            if (pos != line.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw rpcc::IoError("'" + scores_path + "' line " + std::to_string(line_no) +
                                ": not a score");
        }
    }
    if (scores.size() != block_count) {
        throw rpcc::IoError("'" + scores_path + "': expected " + std::to_string(block_count) +
                            " scores, got " + std::to_string(scores.size()));
    }
    Eigen::VectorXd score_vec(static_cast<Eigen::Index>(scores.size()));
    for (std::size_t i = 0; i < scores.size(); ++i) {
        score_vec[static_cast<Eigen::Index>(i)] = scores[i];
    }

    rpcc::SweepCurves curves;
    try {
        curves = rpcc::threshold_sweep(score_vec, truth);
    } catch (const std::invalid_argument& e) {
        throw rpcc::IoError(e.what());
    }
    const double auc_f1 = rpcc::auc(curves.f1);
    const double auc_iou = rpcc::auc(curves.iou);
    const double auc_fa = rpcc::auc(curves.fa);

    std::string table = "# auc_f1=" + rpcc::format_double(auc_f1) +
                        " auc_iou=" + rpcc::format_double(auc_iou) +
                        " auc_fa=" + rpcc::format_double(auc_fa) + "\n";
    table += "tau,f1,iou,fa\n";
    for (std::size_t i = 0; i < curves.f1.tau.size(); ++i) {
        table += rpcc::format_double(curves.f1.tau[i]);
        table += ',';
        table += rpcc::format_double(curves.f1.value[i]);
        table += ',';
        table += rpcc::format_double(curves.iou.value[i]);
        table += ',';
        table += rpcc::format_double(curves.fa.value[i]);
        table += '\n';
    }
    const std::string out_path = curves_path.empty() ? "curves.csv" : curves_path;
    rpcc::write_text_file(out_path, table);

    std::cout << "AUC_F1 = " << rpcc::format_double(auc_f1) << "\n"
              << "AUC_IoU = " << rpcc::format_double(auc_iou) << "\n"
              << "AUC_Fa = " << rpcc::format_double(auc_fa) << "\n"
              << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blockwise robust principal component completion"};
    app.require_subcommand(1);

    std::string decompose_config;
    auto* decompose = app.add_subcommand("decompose", "Recover L, S, and the block support");
    decompose->add_option("--config", decompose_config, "key = value configuration file")
        ->required();

    std::string synth_config;
    auto* synth = app.add_subcommand("synth-bench", "Run the synthetic experiment grid");
    synth->add_option("--config", synth_config, "key = value configuration file")->required();

    std::string pred_path, truth_path, scores_path, curves_path;
    std::size_t block_count = 0;
    auto* eval = app.add_subcommand("eval", "Score a predicted mask against ground truth");
    eval->add_option("--pred", pred_path, "predicted mask file")->required();
    eval->add_option("--truth", truth_path, "ground-truth mask file")->required();
    eval->add_option("--k", block_count, "total number of blocks")->required();
    eval->add_option("--scores", scores_path, "optional soft scores, one per block");
    eval->add_option("--curves", curves_path, "output path for the threshold-curve table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (decompose->parsed()) return cmd_decompose(decompose_config);
        if (synth->parsed()) return cmd_synth_bench(synth_config);
        return cmd_eval(pred_path, truth_path, block_count, scores_path, curves_path);
    } catch (const rpcc::SolverError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
