#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "nkgp/calibration.hpp"
#include "nkgp/ess.hpp"
#include "nkgp/gp_regression.hpp"
#include "nkgp/heuristics.hpp"
#include "nkgp/kernels.hpp"
#include "support/chain_check.hpp"
#include "support/finite_network.hpp"
#include "support/gp_oracles.hpp"
#include "support/mc_stats.hpp"
#include "support/quadrature.hpp"

namespace nkgp {
namespace {

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(std::floor(uniform01(rng) * (hi - lo + 1)));
}

// 1 ----------------------------------------------------------------------

TEST(Criterion01_GprOracle, HundredRandomProblems) {
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = uniform_int(rng, 1, 12), nt = uniform_int(rng, 1, 5);
    const double noise = trial % 2 == 0 ? 0.0 : 0.1;
    const auto p = testing::random_joint_problem(n, nt, rng);
    const Eigen::MatrixXd y = standard_normal(n, 2, rng);

    const auto model = gpr::fit(p.train(), y, noise);
    ASSERT_EQ(model.jitter, 0.0) << "trial " << trial;
    const auto post = gpr::predict(model, p.cross(), p.test_diag());
    const auto ref = testing::condition(p, y, noise);
    for (int t = 0; t < nt; ++t) {
      worst = std::max(worst, (post[t].mean.transpose() - ref.mean.row(t)).cwiseAbs().maxCoeff());
      worst = std::max(worst, std::abs(post[t].variance - ref.covariance(t, t)));
    }
  }
  EXPECT_LE(worst, 1e-8);
}

// 2 ----------------------------------------------------------------------

TEST(Criterion02_Moments, MatchQuadratureOverCovarianceGrid) {
  auto erf = [](double x) { return std::erf(x); };
  double worst[4] = {0, 0, 0, 0};
  for (double kxx : {0.3, 1.0, 2.5}) {
    for (double kyy : {0.3, 1.0, 2.5}) {
      for (int r = 0; r <= 22; ++r) {
        const double rho = -0.99 + 1.98 * r / 22.0;
        const double kxy = rho * std::sqrt(kxx * kyy);
        const double relu = testing::polar_expectation(kxx, kxy, kyy, testing::relu, testing::relu, 1);
        const double relu_d = testing::polar_expectation(kxx, kxy, kyy, testing::step, testing::step, 0);
        const double e = testing::hermite_expectation(kxx, kxy, kyy, erf, erf, 96);
        const double e_d = testing::hermite_expectation(kxx, kxy, kyy, testing::erf_prime, testing::erf_prime, 96);
        worst[0] = std::max(worst[0], std::abs(relu_moment(kxx, kxy, kyy) - relu));
        worst[1] = std::max(worst[1], std::abs(relu_derivative_moment(kxx, kxy, kyy) - relu_d));
        worst[2] = std::max(worst[2], std::abs(erf_moment(kxx, kxy, kyy) - e));
        worst[3] = std::max(worst[3], std::abs(erf_derivative_moment(kxx, kxy, kyy) - e_d));
      }
    }
  }
  EXPECT_LE(worst[0], 1e-6) << "relu_moment";
  EXPECT_LE(worst[1], 1e-6) << "relu_derivative_moment";
  EXPECT_LE(worst[2], 1e-6) << "erf_moment";
  EXPECT_LE(worst[3], 1e-6) << "erf_derivative_moment";
}

// 4 ----------------------------------------------------------------------

struct NtkInstance {
  NtkKernelBlocks blocks;
  Eigen::MatrixXd joint_k;  // NNGP over [train; test]
  Eigen::MatrixXd y;
};

NtkInstance ntk_instance(int n, int nt, Activation a, std::uint64_t seed) {
  Rng rng(seed);
  KernelConfig c;
  c.family = KernelFamily::NTK;
  c.activation = a;
  c.depth = 2;
  c.weight_variance = 1.8;
  c.bias_variance = 0.2;
  const Eigen::MatrixXd x = standard_normal(n + nt, 3, rng);
  const auto joint = ntk_matrix(x, c);
  NtkInstance inst;
  auto block = [](const Eigen::MatrixXd& m, bool square) { return KernelMatrix{m, square}; };
  inst.blocks = {block(joint.nngp.values.topLeftCorner(n, n), true),
                 block(joint.nngp.values.bottomLeftCorner(nt, n), false),
                 block(joint.nngp.values.bottomRightCorner(nt, nt), true),
                 block(joint.ntk.values.topLeftCorner(n, n), true),
                 block(joint.ntk.values.bottomLeftCorner(nt, n), false)};
  inst.joint_k = joint.nngp.values;
  inst.y = standard_normal(n, 1, rng);
  return inst;
}

TEST(Criterion04_NtkDynamics, TimeZeroIsThePriorExactly) {
  const auto inst = ntk_instance(8, 4, Activation::ReLU, 41);
  const auto out = gpr::ntk_predict(inst.blocks, inst.y, {0.7, 0.0});
  EXPECT_EQ(out.covariance, inst.blocks.nngp_test.values);
  for (const auto& p : out.posteriors) EXPECT_EQ(p.mean(0), 0.0);
}

TEST(Criterion04_NtkDynamics, InfiniteTimeIsThetaRegression) {
  const auto inst = ntk_instance(8, 4, Activation::Erf, 42);
  const auto out = gpr::ntk_predict(inst.blocks, inst.y, {0.7, std::numeric_limits<double>::infinity()});
  const Eigen::MatrixXd theta = inst.blocks.ntk_train.values;
  const Eigen::MatrixXd ref = inst.blocks.ntk_cross.values * theta.fullPivLu().solve(inst.y);
  for (int t = 0; t < 4; ++t) EXPECT_NEAR(out.posteriors[t].mean(0), ref(t, 0), 1e-8);
}

// Integrates ∂f/∂t = −ηΘ(f(X) − Y) (and the induced test-point flow) with
// RK4 from prior draws of f₀ ~ N(0, K) over train and test inputs.
TEST(Criterion04_NtkDynamics, FiniteTimeMatchesSimulatedTrajectories) {
  for (auto act : {Activation::ReLU, Activation::Erf}) {
    const int n = 6, nt = 3;
    const auto inst = ntk_instance(n, nt, act, act == Activation::ReLU ? 43 : 44);
    const NtkDynamics dyn{0.5, 0.8};
    const auto out = gpr::ntk_predict(inst.blocks, inst.y, dyn);

    Eigen::MatrixXd g(n + nt, n);  // rows: Θ(train, train) then Θ(test, train)
    g << inst.blocks.ntk_train.values, inst.blocks.ntk_cross.values;
    const Eigen::MatrixXd root = testing::psd_sqrt(inst.joint_k);
    auto rhs = [&](const Eigen::VectorXd& f) -> Eigen::VectorXd {
      return -dyn.learning_rate * g * (f.head(n) - inst.y.col(0));
    };

    Rng rng(45);
    const int n_traj = 5000, steps = 400;
    const double h = dyn.time / steps;
    std::vector<std::vector<double>> ends(nt);
    for (int s = 0; s < n_traj; ++s) {
      Eigen::VectorXd f = root * standard_normal(n + nt, 1, rng);
      for (int k = 0; k < steps; ++k) {
        const Eigen::VectorXd k1 = rhs(f), k2 = rhs(f + 0.5 * h * k1), k3 = rhs(f + 0.5 * h * k2),
                              k4 = rhs(f + h * k3);
        f += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      for (int t = 0; t < nt; ++t) ends[t].push_back(f(n + t));
    }
    for (int t = 0; t < nt; ++t) {
      const auto m = testing::sample_moments(ends[t]);
      EXPECT_LT(std::abs(m.mean - out.posteriors[t].mean(0)), 3.0 * m.mean_se) << "test point " << t;
      EXPECT_LT(std::abs(m.variance - out.posteriors[t].variance), 3.0 * m.variance_se) << "test point " << t;
    }
  }
}

// 5 ----------------------------------------------------------------------

TEST(Criterion05_Ess, GaussianPseudoLikelihoodMatchesConjugatePosterior) {
  Rng rng(51);
  const auto p = testing::random_joint_problem(4, 0, rng);
  const Eigen::MatrixXd k = p.joint;
  const Eigen::MatrixXd lower = cholesky_with_jitter(k).lower;
  const Eigen::Vector4d y(0.9, -0.3, 0.4, 0.1);
  const double noise = 0.25;
  auto loglik = [&](const Eigen::MatrixXd& f) { return -(f.col(0) - y).squaredNorm() / (2.0 * noise); };

  Eigen::Matrix4d a = k;
  a.diagonal().array() += noise;
  const Eigen::Vector4d mu = k * a.inverse() * y;
  const Eigen::Matrix4d sigma = k - k * a.inverse() * k;

  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(4, 1);
  double ll = loglik(f);
  for (int s = 0; s < 1000; ++s) ess_update(f, ll, loglik, lower, rng);
  std::vector<Eigen::VectorXd> draws;
  for (int s = 0; s < 20000; ++s) {
    ess_update(f, ll, loglik, lower, rng);
    draws.push_back(f.col(0));
  }
  testing::expect_chain_matches(draws, mu, sigma);
}

TEST(Criterion05_Ess, ConstantLikelihoodReproducesPrior) {
  Rng rng(52);
  const auto p = testing::random_joint_problem(4, 0, rng);
  const Eigen::MatrixXd lower = cholesky_with_jitter(p.joint).lower;
  Eigen::MatrixXd f = lower * standard_normal(4, 1, rng);
  double ll = 0.0;
  std::vector<Eigen::VectorXd> draws;
  for (int s = 0; s < 20000; ++s) {
    ess_update(f, ll, [](const Eigen::MatrixXd&) { return 0.0; }, lower, rng);
    draws.push_back(f.col(0));
  }
  testing::expect_chain_matches(draws, Eigen::VectorXd::Zero(4), p.joint);
}

// 6 ----------------------------------------------------------------------

TEST(Criterion06_Heuristics, BinaryExactConvergesToNormalCdf) {
  Rng rng(61);
  const int n_mc = 40000;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Vector2d mu = standard_normal(2, 1, rng);
    Eigen::Vector2d var(0.2 + 2.0 * uniform01(rng), 0.2 + 2.0 * uniform01(rng));
    const double p = 0.5 * std::erfc(-(mu(0) - mu(1)) / std::sqrt(var.sum()) / std::numbers::sqrt2);
    const auto c = exact_confidence(mu, var, 1.0, n_mc, rng);
    EXPECT_LE(std::abs(c.confidences(0) - p), 3.0 * std::sqrt(p * (1.0 - p) / n_mc)) << trial;
  }
}

TEST(Criterion06_Heuristics, HandExamples) {
  const auto pw = pairwise_confidence(Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1), 1.0);
  EXPECT_NEAR(pw.confidences(0), 0.76025, 1e-5);  // quoted to five places
  EXPECT_NEAR(pw.confidences(1), 0.23975, 1e-5);
  EXPECT_NEAR(pw.confidences(0), 0.5 * std::erfc(-0.5), 1e-6);
  const auto eq = pairwise_confidence(Eigen::Vector2d(0.3, 0.3), Eigen::Vector2d(1, 2), 1.0);
  EXPECT_NEAR(eq.confidences(0), 0.5, 1e-6);
  const auto sharp = pairwise_confidence(Eigen::Vector3d(0.2, 1.0, -0.5), Eigen::Vector3d::Constant(1e-14), 1.0);
  EXPECT_NEAR(sharp.confidences(1), 1.0, 1e-6);

  const auto sm = softmax_confidence(Eigen::Vector2d(1, 0), 1.0);
  EXPECT_NEAR(sm.confidences(0), 0.731059, 1e-6);
  EXPECT_NEAR(sm.confidences(1), 0.268941, 1e-6);
  const auto flat = softmax_confidence(Eigen::Vector3d(2, 2, 2), 1.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(flat.confidences(i), 1.0 / 3.0, 1e-6);
}

// 7 ----------------------------------------------------------------------

CategoricalPrediction from(std::initializer_list<double> p) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(p.size()));
  Eigen::Index i = 0;
  for (double x : p) v(i++) = x;
  return make_prediction(v);
}

TEST(Criterion07_Metrics, HandChecks) {
  const std::vector preds{from({0.9, 0.1}), from({0.9, 0.1}), from({0.6, 0.4}), from({0.6, 0.4})};
  EXPECT_NEAR(ece(preds, std::vector<int>{0, 0, 0, 1}), 0.1, 1e-9);

  const std::vector uniform{make_prediction(Eigen::VectorXd::Constant(10, 0.1))};
  EXPECT_NEAR(brier(uniform, std::vector<int>{4}), 0.9, 1e-9);

  const std::vector<CategoricalPrediction> many(10000, make_prediction(Eigen::VectorXd::Constant(10, 0.1)));
  const std::vector<int> labels(10000, 2);
  EXPECT_NEAR(categorical_nll(many, labels).sum, 10000.0 * std::log(10.0), 1e-9);
}

}  // namespace
}  // namespace nkgp
