#include <cmath>
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include "nkgp/gp_regression.hpp"
#include "support/gp_oracles.hpp"

namespace nkgp {
namespace {

TEST(GprFit, ScalarSolve) {
  const auto model = gpr::fit({Eigen::MatrixXd::Ones(1, 1), true}, Eigen::MatrixXd::Constant(1, 1, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(model.alpha(0, 0), 2.0);
  EXPECT_EQ(model.jitter, 0.0);
}

TEST(GprFit, DiagonalSolve) {
  Rng rng(1);
  const Eigen::MatrixXd y = standard_normal(3, 2, rng);
  const auto model = gpr::fit({Eigen::MatrixXd::Identity(3, 3), true}, y, 1.0);
  EXPECT_LT((model.alpha - y / 2.0).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GprFit, ReconstructsTargets) {
  Rng rng(2);
  const auto p = testing::random_joint_problem(10, 0, rng);
  const Eigen::MatrixXd y = standard_normal(10, 3, rng);
  const auto model = gpr::fit(p.train(), y, 0.0);
  const auto& l = model.cholesky_factor;
  EXPECT_TRUE((l.diagonal().array() > 0.0).all());
  EXPECT_TRUE(l.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().isZero(0.0));
  const Eigen::MatrixXd rec = l * l.transpose() * model.alpha;
  EXPECT_LT((rec - y).norm() / y.norm(), 1e-8);
}

TEST(GprFit, JitterRescuesSingularKernel) {
  Rng rng(3);
  const auto p = testing::random_joint_problem(8, 0, rng, /*rank=*/3);
  const auto model = gpr::fit(p.train(), standard_normal(8, 1, rng), 0.0);
  EXPECT_GT(model.jitter, 0.0);
}

TEST(GprFit, IndefiniteKernelIsAnError) {
  Eigen::MatrixXd k(2, 2);
  k << 1, 2, 2, 1;
  EXPECT_THROW(gpr::fit({k, true}, Eigen::MatrixXd::Ones(2, 1), 0.0), IndefiniteKernelError);
  EXPECT_THROW(gpr::fit({Eigen::MatrixXd::Identity(2, 2), true}, Eigen::MatrixXd::Ones(3, 1), 0.0),
               DimensionError);
  EXPECT_THROW(gpr::fit({Eigen::MatrixXd::Identity(2, 2), true}, Eigen::MatrixXd::Ones(2, 1), -1.0),
               DomainError);
}

TEST(GprPredict, InterpolatesTrainingPoints) {
  Rng rng(4);
  const auto p = testing::random_joint_problem(6, 0, rng);
  const Eigen::MatrixXd y = standard_normal(6, 2, rng);
  const auto model = gpr::fit(p.train(), y, 0.0);
  const auto post = gpr::predict(model, {p.train().values.topRows(1), false}, p.train().values.diagonal().head(1));
  EXPECT_LT((post[0].mean - y.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(post[0].variance, 0.0, 1e-8);
}

TEST(GprPredict, SingleTrainingPointArithmetic) {
  const auto model = gpr::fit({Eigen::MatrixXd::Ones(1, 1), true}, Eigen::MatrixXd::Constant(1, 1, 2.0), 0.0);
  const auto post = gpr::predict(model, {Eigen::MatrixXd::Constant(1, 1, 0.5), false}, Eigen::VectorXd::Ones(1));
  EXPECT_DOUBLE_EQ(post[0].mean(0), 1.0);
  EXPECT_DOUBLE_EQ(post[0].variance, 0.75);
}

TEST(GprPredict, MatchesBruteForceConditioning) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = testing::random_joint_problem(12, 4, rng);
    const Eigen::MatrixXd y = standard_normal(12, 2, rng);
    const double noise = trial % 2 ? 0.1 : 0.0;
    const auto post = gpr::predict(gpr::fit(p.train(), y, noise), p.cross(), p.test_diag());
    const auto ref = testing::condition(p, y, noise);
    for (int t = 0; t < 4; ++t) {
      EXPECT_LT((post[t].mean - ref.mean.row(t).transpose()).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_NEAR(post[t].variance, ref.covariance(t, t), 1e-8);
    }
  }
}

TEST(GprPredict, ClampsNegativeVarianceAndCounts) {
  const auto model = gpr::fit({Eigen::MatrixXd::Ones(1, 1), true}, Eigen::MatrixXd::Ones(1, 1), 0.0);
  std::size_t clamped = 0;
  const auto post = gpr::predict(model, {Eigen::MatrixXd::Ones(1, 1), false},
                                 Eigen::VectorXd::Constant(1, 1.0 - 1e-14), &clamped);
  EXPECT_EQ(post[0].variance, 0.0);
  EXPECT_EQ(clamped, 1u);
  EXPECT_THROW(gpr::predict(model, {Eigen::MatrixXd::Ones(1, 2), false}, Eigen::VectorXd::Ones(1)),
               DimensionError);
}

TEST(GaussianNll, Examples) {
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<GaussianPosterior> p{{Eigen::VectorXd::Constant(1, 3.0), 1.0 / two_pi - 0.01}};
  EXPECT_NEAR(gpr::gaussian_nll(p, Eigen::MatrixXd::Constant(1, 1, 3.0), 0.01), 0.0, 1e-14);

  p = {{Eigen::VectorXd::Zero(1), 1.0}};
  const double expected = 0.5 * std::log(two_pi) + 0.5;
  EXPECT_NEAR(expected, 1.418939, 1e-6);
  EXPECT_NEAR(gpr::gaussian_nll(p, Eigen::MatrixXd::Ones(1, 1), 0.0), expected, 1e-14);

  const double near = gpr::gaussian_nll(p, Eigen::MatrixXd::Constant(1, 1, 0.5), 0.0);
  const double far = gpr::gaussian_nll(p, Eigen::MatrixXd::Constant(1, 1, 1.0), 0.0);
  EXPECT_GT(far, near);
}

TEST(GaussianNll, ZeroVarianceIsAnError) {
  std::vector<GaussianPosterior> p{{Eigen::VectorXd::Zero(1), 0.0}};
  EXPECT_THROW(gpr::gaussian_nll(p, Eigen::MatrixXd::Ones(1, 1), 0.0), DomainError);
}

// Θ and K over [train; test] from an actual architecture.
NtkKernelBlocks ntk_blocks(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& x_test, KernelConfig c) {
  c.family = KernelFamily::NTK;
  const auto train = ntk_matrix(x_train, c);
  const auto cross = ntk_matrix(x_test, x_train, c);
  const auto test = ntk_matrix(x_test, c);
  return {train.nngp, cross.nngp, test.nngp, train.ntk, cross.ntk};
}

TEST(NtkPredict, TimeZeroIsThePrior) {
  Rng rng(6);
  KernelConfig c;
  c.depth = 2;
  c.weight_variance = 2.0;
  c.bias_variance = 0.1;
  const auto blocks = ntk_blocks(standard_normal(6, 3, rng), standard_normal(3, 3, rng), c);
  const auto out = gpr::ntk_predict(blocks, standard_normal(6, 2, rng), {1.0, 0.0});
  EXPECT_EQ(out.covariance, blocks.nngp_test.values);
  for (const auto& p : out.posteriors) EXPECT_TRUE((p.mean.array() == 0.0).all());
}

TEST(NtkPredict, InfiniteTimeIsThetaRegression) {
  Rng rng(7);
  KernelConfig c;
  c.activation = Activation::Erf;
  c.depth = 3;
  c.weight_variance = 1.5;
  c.bias_variance = 0.2;
  const Eigen::MatrixXd xt = standard_normal(7, 3, rng), xs = standard_normal(4, 3, rng);
  const auto blocks = ntk_blocks(xt, xs, c);
  const Eigen::MatrixXd y = standard_normal(7, 2, rng);
  const auto out = gpr::ntk_predict(blocks, y, {0.5, std::numeric_limits<double>::infinity()});
  const auto ref = gpr::predict(gpr::fit(blocks.ntk_train, y, 0.0), blocks.ntk_cross,
                                Eigen::VectorXd::Zero(4));
  for (int t = 0; t < 4; ++t) EXPECT_LT((out.posteriors[t].mean - ref[t].mean).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(NtkPredict, RejectsBadShapes) {
  Rng rng(8);
  KernelConfig c;
  auto blocks = ntk_blocks(standard_normal(4, 2, rng), standard_normal(2, 2, rng), c);
  EXPECT_THROW(gpr::ntk_predict(blocks, Eigen::MatrixXd::Ones(3, 1), {}), DimensionError);
  EXPECT_THROW(gpr::ntk_predict(blocks, Eigen::MatrixXd::Ones(4, 1), {-1.0, 1.0}), DomainError);
}

}  // namespace
}  // namespace nkgp
