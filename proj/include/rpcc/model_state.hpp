// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rpcc/special_functions.hpp"

namespace rpcc {

/// Fixed inputs of a solve: hyperprior scales, the manually injected noise
/// variance, the over-parameterized CP rank, and the loop controls.
struct Hyperparams {
    double a0 = 1e-5;      // Gamma shape hyperprior (factor precisions)
    double b0 = 1e-5;      // Gamma rate hyperprior
    double c0 = 1e-5;      // truncated-inverse-Gamma shape hyperprior (block variances)
    double d0 = 1e-5;      // truncated-inverse-Gamma rate hyperprior
    double alpha0 = 1.0;   // Beta hyperprior (mixing weight)
    double beta0 = 1.0;
    double sigma = 1e-4;   // noise scale: modeled as the element variance in
                           // the posterior updates; the injected perturbation
                           // uses it as its standard deviation (see run())
    int rank = 1;          // CP rank R
    double z0 = 0.5;       // initial foreground probability per block
    int max_iters = 500;
    double tol = 1e-6;
    std::uint64_t seed = 0;

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0)) {
                throw std::invalid_argument(std::string(name) + " must be positive");
            }
        };
        positive(a0, "a0");
        positive(b0, "b0");
        positive(c0, "c0");
        positive(d0, "d0");
        positive(alpha0, "alpha0");
        positive(beta0, "beta0");
        positive(sigma, "sigma");
        positive(tol, "tol");
        if (rank < 1) throw std::invalid_argument("rank must be at least 1");
        if (!(z0 >= 0.0 && z0 <= 1.0)) throw std::invalid_argument("z0 must lie in [0,1]");
        if (max_iters < 1) throw std::invalid_argument("max_iters must be at least 1");
    }
};

/// Gaussian posterior over every factor row: mu[n].row(i) is the mean of row
/// i of factor n, sigma[n][i] its R x R covariance.
struct FactorPosterior {
    std::vector<Eigen::MatrixXd> mu;                  // per mode: I_n x R
    std::vector<std::vector<Eigen::MatrixXd>> sigma;  // per mode, per row: R x R
};

/// E[a a^T] = mu mu^T + Sigma for one factor row.
inline Eigen::MatrixXd expected_outer(const FactorPosterior& fp, std::size_t n, std::size_t i) {
    const Eigen::VectorXd m = fp.mu[n].row(static_cast<Eigen::Index>(i)).transpose();
    return m * m.transpose() + fp.sigma[n][i];
}

/// Gamma posterior over the per-component factor precisions.
struct LambdaPosterior {
    Eigen::VectorXd a;  // shapes
    Eigen::VectorXd b;  // rates
};

/// Gamma means a_r / b_r.
inline Eigen::VectorXd expected_lambda(const LambdaPosterior& lp) {
    return lp.a.array() / lp.b.array();
}

/// Truncated-inverse-Gamma posterior over the per-block variances.
struct TauPosterior {
    Eigen::VectorXd c;  // shapes
    Eigen::VectorXd d;  // rates
};

/// Bernoulli posterior means: zbar[k] is the probability block k came from
/// the sparse source.
struct ZPosterior {
    Eigen::VectorXd zbar;
};

/// Beta posterior over the mixing weight.
struct EtaPosterior {
    double alpha = 1.0;
    double beta = 1.0;
};

/// (E[ln eta], E[ln(1 - eta)]) under Beta(alpha, beta).
inline std::pair<double, double> expected_log_eta(const EtaPosterior& ep) {
    const double common = digamma(ep.alpha + ep.beta);
    return {digamma(ep.alpha) - common, digamma(ep.beta) - common};
}

/// The two per-block log-evidence terms behind the indicator update, plus
/// their difference Delta_k = theta1 - theta2 as a separation diagnostic.
struct ZUpdateTerms {
    Eigen::VectorXd theta1;
    Eigen::VectorXd theta2;
    Eigen::VectorXd delta;
};

/// Everything the coordinate-ascent loop mutates.
struct PosteriorState {
    FactorPosterior factors;
    LambdaPosterior lambda;
    TauPosterior tau;
    ZPosterior z;
    EtaPosterior eta;
};

}  // namespace rpcc
