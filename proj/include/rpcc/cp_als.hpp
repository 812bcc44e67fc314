// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "rpcc/rng.hpp"
#include "rpcc/tensor.hpp"

namespace rpcc {

inline constexpr int kCpAlsDefaultSweeps = 100;
inline constexpr double kCpAlsDamping = 1e-9;
inline constexpr double kCpAlsStagnationTol = 1e-6;

/// Deterministic alternating-least-squares CP fit. Factors start from
/// seeded standard-Gaussian entries; each mode solve is damped by
/// kCpAlsDamping * I so rank-deficient normal equations never fail. Stops
/// after `max_sweeps` sweeps or when the relative fit stagnates below
/// kCpAlsStagnationTol.
inline CpFactors cp_als_init(const DenseTensor& y, int rank, int max_sweeps,
                             std::uint64_t seed) {
    if (rank < 1) throw std::invalid_argument("cp_als_init: rank must be at least 1");
    const std::size_t n_modes = y.order();
    const Eigen::Index r = rank;

    CpFactors cp;
    cp.factors.resize(n_modes);
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::size_t n = 0; n < n_modes; ++n) {
        Eigen::MatrixXd f(static_cast<Eigen::Index>(y.dim(n)), r);
        for (Eigen::Index i = 0; i < f.rows(); ++i) {
            for (Eigen::Index c = 0; c < r; ++c) f(i, c) = unit(engine);
        }
        cp.factors[n] = std::move(f);
    }

    const double norm_y = frobenius_norm(y);
    if (norm_y == 0.0) {
        for (auto& f : cp.factors) f.setZero();
        return cp;
    }

    std::vector<Eigen::MatrixXd> grams(n_modes);
    for (std::size_t n = 0; n < n_modes; ++n) {
        grams[n] = cp.factors[n].transpose() * cp.factors[n];
    }

    double prev_rel = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        Eigen::MatrixXd m_last;
        for (std::size_t n = 0; n < n_modes; ++n) {
            Eigen::MatrixXd g = Eigen::MatrixXd::Ones(r, r);
            for (std::size_t n2 = 0; n2 < n_modes; ++n2) {
                if (n2 != n) g.array() *= grams[n2].array();
            }
            g.diagonal().array() += kCpAlsDamping;
            const Eigen::MatrixXd m = mttkrp(y, cp.factors, n);
            cp.factors[n] = g.ldlt().solve(m.transpose()).transpose();
            grams[n] = cp.factors[n].transpose() * cp.factors[n];
            if (n == n_modes - 1) m_last = m;
        }

        // ||Y - CP||^2 = ||Y||^2 - 2 <Y, CP> + ||CP||^2, all from the sweep's
        // last-mode MTTKRP and the factor Grams.
        const double inner_y_cp = (m_last.array() * cp.factors[n_modes - 1].array()).sum();
        const double cp_norm_sq = generalized_inner(grams);
        const double resid_sq =
            std::max(0.0, norm_y * norm_y - 2.0 * inner_y_cp + cp_norm_sq);
        const double rel = std::sqrt(resid_sq) / norm_y;
        // Stagnation is judged relative to the current fit level, so exactly
        // representable inputs keep sweeping down to the numerical floor
        // while noisy fits stop as soon as they plateau.
        if (std::abs(prev_rel - rel) <= kCpAlsStagnationTol * std::max(rel, 1e-12)) break;
        prev_rel = rel;
    }
    return cp;
}

inline CpFactors cp_als_init(const DenseTensor& y, int rank, std::uint64_t seed) {
    return cp_als_init(y, rank, kCpAlsDefaultSweeps, seed);
}

/// Relative Frobenius residual of a CP fit, for diagnostics and tests.
inline double cp_relative_residual(const DenseTensor& y, const CpFactors& cp) {
    const double norm_y = frobenius_norm(y);
    const DenseTensor composed = cp_compose(cp);
    double resid_sq = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - composed[i];
        resid_sq += d * d;
    }
    if (norm_y == 0.0) return std::sqrt(resid_sq);
    return std::sqrt(resid_sq) / norm_y;
}

}  // namespace rpcc
