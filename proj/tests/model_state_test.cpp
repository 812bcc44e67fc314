// SPDX-License-Identifier: Apache-2.0
#include "rpcc/model_state.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rpcc/special_functions.hpp"

namespace rpcc {
namespace {

constexpr double kEulerMascheroni = 0.57721566490153286;

// ===========================================================================
// digamma
// ===========================================================================

TEST(DigammaTest, ValueAtOne) {
    EXPECT_NEAR(digamma(1.0), -kEulerMascheroni, 1e-12);
}

TEST(DigammaTest, RecurrenceIdentity) {
    // psi(x+1) = psi(x) + 1/x across the solver's working range.
    for (double x = 0.01; x <= 100.0; x *= 1.17) {
        EXPECT_NEAR(digamma(x + 1.0) - digamma(x), 1.0 / x, 1e-12) << "x = " << x;
    }
}

TEST(DigammaTest, PsiTwoIsPsiOnePlusOne) {
    EXPECT_NEAR(digamma(2.0), digamma(1.0) + 1.0, 1e-13);
}

TEST(DigammaTest, RejectsNonPositive) {
    EXPECT_THROW(digamma(0.0), std::domain_error);
    EXPECT_THROW(digamma(-1.5), std::domain_error);
}

// ===========================================================================
// Hyperparams
// ===========================================================================

TEST(HyperparamsTest, DefaultsAreValid) {
    Hyperparams hp;
    EXPECT_NO_THROW(hp.validate());
    EXPECT_EQ(hp.a0, 1e-5);
    EXPECT_EQ(hp.alpha0, 1.0);
    EXPECT_EQ(hp.z0, 0.5);
}

TEST(HyperparamsTest, ValidationNamesTheField) {
    Hyperparams hp;
    hp.sigma = 0.0;
    try {
        hp.validate();
        FAIL() << "expected invalid_argument";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("sigma"), std::string::npos);
    }
    hp = Hyperparams{};
    hp.z0 = 1.5;
    EXPECT_THROW(hp.validate(), std::invalid_argument);
    hp = Hyperparams{};
    hp.rank = 0;
    EXPECT_THROW(hp.validate(), std::invalid_argument);
}

// ===========================================================================
// expected_lambda
// ===========================================================================

TEST(ExpectedLambdaTest, GammaMean) {
    LambdaPosterior lp;
    lp.a = Eigen::VectorXd::Constant(1, 2.0);
    lp.b = Eigen::VectorXd::Constant(1, 4.0);
    EXPECT_DOUBLE_EQ(expected_lambda(lp)[0], 0.5);
}

TEST(ExpectedLambdaTest, EqualShapeAndRateGivesOnes) {
    LambdaPosterior lp;
    lp.a = Eigen::VectorXd::Constant(3, 0.37);
    lp.b = lp.a;
    EXPECT_TRUE(expected_lambda(lp).isApprox(Eigen::VectorXd::Ones(3)));
}

TEST(ExpectedLambdaTest, MatchesGammaSamplingOracle) {
    const double shape = 3.2;
    const double rate = 0.55;
    LambdaPosterior lp;
    lp.a = Eigen::VectorXd::Constant(1, shape);
    lp.b = Eigen::VectorXd::Constant(1, rate);

    const std::size_t n = 1'000'000;
    std::mt19937_64 engine(12345);
    std::gamma_distribution<double> gamma(shape, 1.0 / rate);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += gamma(engine);
    const double mc_mean = sum / static_cast<double>(n);
    const double se = std::sqrt(shape / (rate * rate) / static_cast<double>(n));
    EXPECT_NEAR(expected_lambda(lp)[0], mc_mean, 3.0 * se);
}

// ===========================================================================
// expected_outer
// ===========================================================================

FactorPosterior single_row_posterior(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
    FactorPosterior fp;
    fp.mu = {mu.transpose()};
    fp.sigma = {{cov}};
    return fp;
}

TEST(ExpectedOuterTest, ZeroMeanIdentityCovariance) {
    const auto fp = single_row_posterior(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3));
    EXPECT_TRUE(expected_outer(fp, 0, 0).isApprox(Eigen::MatrixXd::Identity(3, 3)));
}

TEST(ExpectedOuterTest, ZeroCovarianceGivesOuterProduct) {
    Eigen::VectorXd mu(2);
    mu << 1.5, -0.5;
    const auto fp = single_row_posterior(mu, Eigen::MatrixXd::Zero(2, 2));
    EXPECT_TRUE(expected_outer(fp, 0, 0).isApprox(mu * mu.transpose()));
}

TEST(ExpectedOuterTest, OutputIsSymmetricPsd) {
    std::mt19937_64 engine(77);
    std::normal_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd a(3, 3);
    Eigen::VectorXd mu(3);
    for (Eigen::Index i = 0; i < 3; ++i) {
        mu[i] = unit(engine);
        for (Eigen::Index j = 0; j < 3; ++j) a(i, j) = unit(engine);
    }
    const Eigen::MatrixXd cov = a * a.transpose();
    const auto fp = single_row_posterior(mu, cov);
    const Eigen::MatrixXd outer = expected_outer(fp, 0, 0);
    EXPECT_LT((outer - outer.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    const Eigen::VectorXd eig = outer.selfadjointView<Eigen::Lower>().eigenvalues();
    EXPECT_GE(eig.minCoeff(), -1e-10);
}

TEST(ExpectedOuterTest, MatchesGaussianSamplingOracle) {
    Eigen::VectorXd mu(2);
    mu << 0.8, -1.1;
    Eigen::MatrixXd cov(2, 2);
    cov << 1.3, 0.4,
           0.4, 0.9;
    const auto fp = single_row_posterior(mu, cov);
    const Eigen::MatrixXd expected = expected_outer(fp, 0, 0);

    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
    const std::size_t n = 1'000'000;
    std::mt19937_64 engine(4242);
    std::normal_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, 2);
    Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(2, 2);
    Eigen::VectorXd z(2);
    for (std::size_t i = 0; i < n; ++i) {
        z << unit(engine), unit(engine);
        const Eigen::VectorXd x = mu + chol * z;
        const Eigen::MatrixXd xx = x * x.transpose();
        sum += xx;
        sum_sq += xx.cwiseProduct(xx);
    }
    const Eigen::MatrixXd mean = sum / static_cast<double>(n);
    for (Eigen::Index i = 0; i < 2; ++i) {
        for (Eigen::Index j = 0; j < 2; ++j) {
            const double var =
                sum_sq(i, j) / static_cast<double>(n) - mean(i, j) * mean(i, j);
            const double se = std::sqrt(var / static_cast<double>(n));
            EXPECT_NEAR(mean(i, j), expected(i, j), 3.0 * se);
        }
    }
}

// ===========================================================================
// expected_log_eta
// ===========================================================================

TEST(ExpectedLogEtaTest, SymmetricWhenShapesMatch) {
    const auto [ln_eta, ln_one_minus] = expected_log_eta({2.7, 2.7});
    EXPECT_DOUBLE_EQ(ln_eta, ln_one_minus);
}

TEST(ExpectedLogEtaTest, UniformCaseIsMinusOne) {
    const auto [ln_eta, ln_one_minus] = expected_log_eta({1.0, 1.0});
    EXPECT_NEAR(ln_eta, -1.0, 1e-12);
    EXPECT_NEAR(ln_one_minus, -1.0, 1e-12);
}

TEST(ExpectedLogEtaTest, MatchesBetaSamplingOracle) {
    const double alpha = 3.7;
    const double beta = 0.9;
    const auto [expected_ln, expected_ln_1m] = expected_log_eta({alpha, beta});

    const std::size_t n = 1'000'000;
    std::mt19937_64 engine(8888);
    std::gamma_distribution<double> ga(alpha, 1.0);
    std::gamma_distribution<double> gb(beta, 1.0);
    double sum_ln = 0.0, sum_ln_sq = 0.0;
    double sum_ln_1m = 0.0, sum_ln_1m_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ga(engine);
        const double y = gb(engine);
        const double eta = x / (x + y);
        const double l = std::log(eta);
        const double m = std::log1p(-eta);
        sum_ln += l;
        sum_ln_sq += l * l;
        sum_ln_1m += m;
        sum_ln_1m_sq += m * m;
    }
    const double mean_ln = sum_ln / static_cast<double>(n);
    const double se_ln = std::sqrt(
        (sum_ln_sq / static_cast<double>(n) - mean_ln * mean_ln) / static_cast<double>(n));
    EXPECT_NEAR(expected_ln, mean_ln, 3.0 * se_ln);

    const double mean_1m = sum_ln_1m / static_cast<double>(n);
    const double se_1m = std::sqrt(
        (sum_ln_1m_sq / static_cast<double>(n) - mean_1m * mean_1m) / static_cast<double>(n));
    EXPECT_NEAR(expected_ln_1m, mean_1m, 3.0 * se_1m);
}

// ===========================================================================
// stable_logistic
// ===========================================================================

TEST(StableLogisticTest, SaturatesExactly) {
    EXPECT_EQ(stable_logistic(710.0), 1.0);
    EXPECT_EQ(stable_logistic(-710.0), 0.0);
    EXPECT_EQ(stable_logistic(1000.0), 1.0);
    EXPECT_EQ(stable_logistic(-1000.0), 0.0);
}

TEST(StableLogisticTest, MidpointIsHalf) {
    EXPECT_DOUBLE_EQ(stable_logistic(0.0), 0.5);
}

TEST(StableLogisticTest, MatchesExtendedPrecision) {
    std::mt19937_64 engine(99);
    std::uniform_real_distribution<double> range(-60.0, 60.0);
    for (int i = 0; i < 1000; ++i) {
        const double t = range(engine);
        const long double ref = 1.0L / (1.0L + std::exp(static_cast<long double>(-t)));
        EXPECT_NEAR(stable_logistic(t), static_cast<double>(ref), 1e-12);
    }
}

}  // namespace
}  // namespace rpcc
