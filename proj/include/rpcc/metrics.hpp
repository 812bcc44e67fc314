// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rpcc/tensor.hpp"

namespace rpcc {

/// Relative root squared error ||est - truth||_F / ||truth||_F.
inline double rrse(const DenseTensor& est, const DenseTensor& truth) {
    if (est.dims() != truth.dims()) {
        throw std::invalid_argument("rrse: dimension mismatch");
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const double d = est[i] - truth[i];
        num += d * d;
        den += truth[i] * truth[i];
    }
    if (den == 0.0) throw std::invalid_argument("rrse: truth has zero norm");
    return std::sqrt(num) / std::sqrt(den);
}

/// Intersection over union of two supports; two empty supports agree
/// perfectly and score 1.
inline double iou(const BlockSupport& a, const BlockSupport& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (std::size_t k : a.members()) {
        if (b.contains(k)) ++inter;
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct F1FaResult {
    double f1 = 0.0;
    double fa = 0.0;
    ConfusionCounts counts;
};

/// Blockwise F1 score and false-alarm rate. F1 is 0 when there are no true
/// positives; Fa is 0 when there are no negatives at all.
inline F1FaResult f1_fa(const BlockSupport& pred, const BlockSupport& truth,
                        std::size_t block_count) {
    pred.require_within(block_count);
    truth.require_within(block_count);

    F1FaResult res;
    for (std::size_t k = 0; k < block_count; ++k) {
        const bool p = pred.contains(k);
        const bool t = truth.contains(k);
        if (p && t) ++res.counts.tp;
        else if (p && !t) ++res.counts.fp;
        else if (!p && t) ++res.counts.fn;
        else ++res.counts.tn;
    }
    const auto& c = res.counts;
    if (c.tp > 0) {
        const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
        const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
        res.f1 = 2.0 * precision * recall / (precision + recall);
    }
    if (c.fp + c.tn > 0) {
        res.fa = static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
    }
    return res;
}

/// A metric sampled over a strictly increasing threshold grid in [0,1].
struct ThresholdCurve {
    std::vector<double> tau;
    std::vector<double> value;
};

/// Trapezoidal integral of a curve over tau in [0,1]; the samples must span
/// the full interval.
inline double auc(const ThresholdCurve& curve) {
    if (curve.tau.size() < 2 || curve.tau.size() != curve.value.size()) {
        throw std::invalid_argument("auc: need at least two (tau, value) samples");
    }
    if (curve.tau.front() != 0.0 || curve.tau.back() != 1.0) {
        throw std::invalid_argument("auc: samples must span [0,1]");
    }
    double area = 0.0;
    for (std::size_t i = 1; i < curve.tau.size(); ++i) {
        const double dt = curve.tau[i] - curve.tau[i - 1];
        if (dt <= 0.0) throw std::invalid_argument("auc: thresholds must be strictly increasing");
        if (!std::isfinite(curve.value[i]) || !std::isfinite(curve.value[i - 1])) {
            throw std::invalid_argument("auc: curve values must be finite");
        }
        area += 0.5 * (curve.value[i] + curve.value[i - 1]) * dt;
    }
    return area;
}

inline std::vector<double> uniform_grid(std::size_t points = 1001) {
    if (points < 2) throw std::invalid_argument("uniform_grid: need at least two points");
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i) {
        grid[i] = static_cast<double>(i) / static_cast<double>(points - 1);
    }
    return grid;
}

struct SweepCurves {
    ThresholdCurve f1;
    ThresholdCurve iou;
    ThresholdCurve fa;
};

/// Sweeps a threshold over soft scores: at each tau the predicted support is
/// {k : score_k >= tau}, scored against the truth. Hard {0,1} scores give
/// constant curves on (0,1].
inline SweepCurves threshold_sweep(const Eigen::VectorXd& scores, const BlockSupport& truth,
                                   const std::vector<double>& grid) {
    const auto block_count = static_cast<std::size_t>(scores.size());
    truth.require_within(block_count);
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) {
            throw std::invalid_argument("threshold_sweep: scores must lie in [0,1]");
        }
    }

    SweepCurves curves;
    for (double tau : grid) {
        if (!(tau >= 0.0 && tau <= 1.0)) {
            throw std::invalid_argument("threshold_sweep: grid must lie in [0,1]");
        }
        std::vector<std::size_t> members;
        for (Eigen::Index k = 0; k < scores.size(); ++k) {
            if (scores[k] >= tau) members.push_back(static_cast<std::size_t>(k));
        }
        const BlockSupport pred(std::move(members));
        const F1FaResult ff = f1_fa(pred, truth, block_count);
        curves.f1.tau.push_back(tau);
        curves.f1.value.push_back(ff.f1);
        curves.iou.tau.push_back(tau);
        curves.iou.value.push_back(iou(pred, truth));
        curves.fa.tau.push_back(tau);
        curves.fa.value.push_back(ff.fa);
    }
    return curves;
}

inline SweepCurves threshold_sweep(const Eigen::VectorXd& scores, const BlockSupport& truth) {
    return threshold_sweep(scores, truth, uniform_grid());
}

}  // namespace rpcc
