// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rpcc/metrics.hpp"
#include "rpcc/rng.hpp"
#include "rpcc/solver.hpp"
#include "rpcc/tensor.hpp"

namespace rpcc {

/// A generated problem with known ground truth: Y equals the background
/// projected off the support plus the sparse component, exactly.
struct SyntheticInstance {
    DenseTensor L;          // low-rank background
    DenseTensor S;          // blockwise-sparse foreground
    BlockSupport support;   // ground-truth support of S
    DenseTensor Y;          // observation
    int ground_rank = 0;    // R0
    double rho = 0.0;       // blockwise sampling ratio
    std::uint64_t seed = 0;
};

namespace detail {
inline constexpr std::uint64_t kFactorSalt = 0x66616374;
inline constexpr std::uint64_t kSparseSalt = 0x73707273;
inline constexpr std::uint64_t kSupportSalt = 0x73757070;
}  // namespace detail

/// Draws a rank-R0 background from standard-Gaussian CP factor rows, a
/// standard-Gaussian foreground on a uniform support of round(K * rho)
/// blocks, and assembles the occluded observation. Bit-reproducible under
/// the seed.
inline SyntheticInstance generate_instance(const std::vector<std::size_t>& dims,
                                           const BlockLayout& layout, int ground_rank,
                                           double rho, std::uint64_t seed) {
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw std::invalid_argument("generate_instance: rho must lie in [0,1]");
    }
    if (ground_rank < 1) {
        throw std::invalid_argument("generate_instance: ground rank must be at least 1");
    }
    if (layout.dims() != dims) {
        throw std::invalid_argument("generate_instance: layout incompatible with dims");
    }

    SyntheticInstance inst;
    inst.ground_rank = ground_rank;
    inst.rho = rho;
    inst.seed = seed;

    CpFactors cp;
    cp.factors.resize(dims.size());
    {
        std::mt19937_64 engine(derive_seed(seed, detail::kFactorSalt));
        std::normal_distribution<double> unit(0.0, 1.0);
        for (std::size_t n = 0; n < dims.size(); ++n) {
            Eigen::MatrixXd f(static_cast<Eigen::Index>(dims[n]), ground_rank);
            for (Eigen::Index i = 0; i < f.rows(); ++i) {
                for (Eigen::Index c = 0; c < f.cols(); ++c) f(i, c) = unit(engine);
            }
            cp.factors[n] = std::move(f);
        }
    }
    inst.L = cp_compose(cp);

    DenseTensor sparse_full(dims);
    {
        std::mt19937_64 engine(derive_seed(seed, detail::kSparseSalt));
        std::normal_distribution<double> unit(0.0, 1.0);
        for (std::size_t i = 0; i < sparse_full.size(); ++i) sparse_full[i] = unit(engine);
    }

    const std::size_t k_total = layout.block_count();
    const auto target = static_cast<std::size_t>(std::llround(rho * static_cast<double>(k_total)));
    {
        // Partial Fisher-Yates: the first `target` slots are an exact uniform
        // sample without replacement.
        std::vector<std::size_t> pool(k_total);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        std::mt19937_64 engine(derive_seed(seed, detail::kSupportSalt));
        for (std::size_t i = 0; i < target; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, k_total - 1);
            std::swap(pool[i], pool[pick(engine)]);
        }
        pool.resize(target);
        inst.support = BlockSupport(std::move(pool));
    }

    inst.S = block_project(sparse_full, layout, inst.support);
    inst.Y = block_project(inst.L, layout, inst.support.complement(k_total));
    for (std::size_t k : inst.support.members()) {
        for_each_block_element(layout, k, [&](std::size_t lin, std::span<const std::size_t>) {
            inst.Y[lin] = inst.S[lin];
        });
    }
    return inst;
}

/// One trial of the experiment grid.
struct GridRow {
    int r0 = 0;
    double rho = 0.0;
    int trial = 0;
    double rrse = std::numeric_limits<double>::quiet_NaN();
    double iou = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    double seconds = 0.0;
    // Extra diagnostics, not part of the emitted table.
    bool failed = false;
    std::string error;
    bool converged = false;
    double hardness = std::numeric_limits<double>::quiet_NaN();
};

/// Runs the (R0, rho) grid: each trial generates an instance, solves it with
/// R = 2 * R0, and scores the recovery. Trial randomness derives from
/// (template seed, cell, trial), so rows do not depend on the execution
/// schedule; trials run on `threads` workers. Solver failures mark the row
/// instead of aborting the grid.
inline std::vector<GridRow> run_grid(const std::vector<int>& r0_set,
                                     const std::vector<double>& rho_set, int trials,
                                     const std::vector<std::size_t>& dims,
                                     const BlockLayout& layout, const Hyperparams& hp_template,
                                     unsigned threads = 1) {
    std::vector<GridRow> rows;
    if (r0_set.empty() || rho_set.empty() || trials <= 0) return rows;
    rows.resize(r0_set.size() * rho_set.size() * static_cast<std::size_t>(trials));

    auto run_one = [&](std::size_t flat) {
        const std::size_t cell = flat / static_cast<std::size_t>(trials);
        const int trial = static_cast<int>(flat % static_cast<std::size_t>(trials));
        const int r0 = r0_set[cell / rho_set.size()];
        const double rho = rho_set[cell % rho_set.size()];

        GridRow& row = rows[flat];
        row.r0 = r0;
        row.rho = rho;
        row.trial = trial;
        try {
            const std::uint64_t trial_tag = (static_cast<std::uint64_t>(cell) << 24) |
                                            static_cast<std::uint64_t>(trial);
            const SyntheticInstance inst = generate_instance(
                dims, layout, r0, rho, derive_seed(hp_template.seed, trial_tag * 2));

            Hyperparams hp = hp_template;
            hp.rank = 2 * r0;
            hp.seed = derive_seed(hp_template.seed, trial_tag * 2 + 1);

            const auto start = std::chrono::steady_clock::now();
            const SolveResult res = run(inst.Y, layout, hp);
            row.seconds = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - start).count();
            row.rrse = rrse(res.lhat, inst.L);
            row.iou = iou(res.support, inst.support);
            row.iterations = res.iterations;
            row.converged = res.converged;
            row.hardness = res.hardness;
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
    };

    if (threads <= 1) {
        for (std::size_t flat = 0; flat < rows.size(); ++flat) run_one(flat);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const unsigned count = std::min<unsigned>(threads, static_cast<unsigned>(rows.size()));
        pool.reserve(count);
        for (unsigned t = 0; t < count; ++t) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t flat = next.fetch_add(1);
                    if (flat >= rows.size()) return;
                    run_one(flat);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    return rows;
}

}  // namespace rpcc
