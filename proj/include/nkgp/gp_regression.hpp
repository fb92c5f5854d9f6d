#pragma once

// Exact GP regression with independent outputs sharing one kernel, plus the
// closed-form predictive distribution of infinitely wide networks trained by
// gradient flow on MSE.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "nkgp/error.hpp"
#include "nkgp/kernels.hpp"
#include "nkgp/linalg.hpp"

namespace nkgp {

/// Predictive distribution at one test point. Every output dimension has its
/// own mean but they share the variance.
struct GaussianPosterior {
  Eigen::VectorXd mean;
  double variance = 0.0;
};

struct GprModel {
  Eigen::MatrixXd cholesky_factor;  // lower factor of K + (σ_ε² + jitter)·I
  Eigen::MatrixXd alpha;            // (K + σ_ε²I)⁻¹·Y, one column per output
  double noise_variance = 0.0;
  double jitter = 0.0;
  Eigen::Index n_train = 0;
  Eigen::Index n_outputs = 0;
};

namespace gpr {

inline GprModel fit(const KernelMatrix& k_train, const Eigen::MatrixXd& targets,
                    double noise_variance) {
  detail::require_dims(k_train.rows() == k_train.cols(), "gpr fit: kernel is not square");
  detail::require_dims(k_train.rows() == targets.rows(), "gpr fit: kernel/target row mismatch");
  detail::require(std::isfinite(noise_variance) && noise_variance >= 0.0,
                  "gpr fit: noise variance must be >= 0");
  if (!targets.allFinite()) throw DomainError("gpr fit: non-finite targets");

  Eigen::MatrixXd a = k_train.values;
  a.diagonal().array() += noise_variance;
  auto chol = cholesky_with_jitter(a);

  GprModel model;
  model.alpha = cholesky_solve(chol.lower, targets);
  model.cholesky_factor = std::move(chol.lower);
  model.jitter = chol.jitter;
  model.noise_variance = noise_variance;
  model.n_train = targets.rows();
  model.n_outputs = targets.cols();
  return model;
}

/// μ(x) = k(x, X)·α and σ²(x) = k(x, x) − ‖L⁻¹k(X, x)‖². Negative variances
/// from round-off are clamped to 0 and counted in `n_clamped`.
inline std::vector<GaussianPosterior> predict(const GprModel& model, const KernelMatrix& k_cross,
                                              const Eigen::VectorXd& k_test_diag,
                                              std::size_t* n_clamped = nullptr) {
  detail::require_dims(k_cross.cols() == model.n_train, "gpr predict: cross kernel has wrong width");
  detail::require_dims(k_cross.rows() == k_test_diag.size(), "gpr predict: test diagonal length mismatch");

  const Eigen::MatrixXd means = k_cross.values * model.alpha;
  const Eigen::MatrixXd v =
      model.cholesky_factor.triangularView<Eigen::Lower>().solve(k_cross.values.transpose());
  const Eigen::VectorXd explained = v.colwise().squaredNorm().transpose();

  std::vector<GaussianPosterior> out(static_cast<std::size_t>(k_cross.rows()));
  std::size_t clamped = 0;
  for (Eigen::Index i = 0; i < k_cross.rows(); ++i) {
    double var = k_test_diag(i) - explained(i);
    if (var < 0.0) {
      var = 0.0;
      ++clamped;
    }
    out[static_cast<std::size_t>(i)] = {means.row(i).transpose(), var};
  }
  if (n_clamped) *n_clamped += clamped;
  return out;
}

/// Mean over test points of the Gaussian negative log-likelihood, summed over
/// output dimensions, with σ_ε² added to the predictive variance.
inline double gaussian_nll(const std::vector<GaussianPosterior>& posteriors,
                           const Eigen::MatrixXd& targets, double noise_variance) {
  detail::require_dims(static_cast<Eigen::Index>(posteriors.size()) == targets.rows(),
                       "gaussian_nll: length mismatch");
  detail::require_dims(!posteriors.empty(), "gaussian_nll: empty prediction set");
  double total = 0.0;
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    const auto& p = posteriors[i];
    detail::require_dims(p.mean.size() == targets.cols(), "gaussian_nll: output dimension mismatch");
    const double var = p.variance + noise_variance;
    if (!(var > 0.0)) throw DomainError("gaussian_nll: zero predictive variance");
    const auto resid = targets.row(static_cast<Eigen::Index>(i)).transpose() - p.mean;
    total += 0.5 * static_cast<double>(p.mean.size()) * std::log(2.0 * std::numbers::pi * var) +
             resid.squaredNorm() / (2.0 * var);
  }
  return total / static_cast<double>(posteriors.size());
}

}  // namespace gpr

/// Gradient-flow hyperparameters. `time` may be +infinity.
struct NtkDynamics {
  double learning_rate = 1.0;
  double time = std::numeric_limits<double>::infinity();

  bool converged() const { return std::isinf(time); }
  bool operator==(const NtkDynamics&) const = default;
};

/// Kernel blocks needed by `ntk_predict`. `*_cross` blocks are test × train.
struct NtkKernelBlocks {
  KernelMatrix nngp_train;
  KernelMatrix nngp_cross;
  KernelMatrix nngp_test;
  KernelMatrix ntk_train;
  KernelMatrix ntk_cross;
};

struct NtkPrediction {
  std::vector<GaussianPosterior> posteriors;
  Eigen::MatrixXd covariance;  // full test × test covariance
};

namespace gpr {

/// Distribution of network outputs on test inputs after training for time t:
///   μ = Θ_T·Θ⁻¹(I − e^{−ηΘt})·Y
///   Σ = K_TT + A·K·Aᵀ − (A·K_TXᵀ + h.c.),  A = Θ_T·Θ⁻¹(I − e^{−ηΘt}).
inline NtkPrediction ntk_predict(const NtkKernelBlocks& k, const Eigen::MatrixXd& targets,
                                 const NtkDynamics& dynamics) {
  const Eigen::Index n = k.ntk_train.rows();
  const Eigen::Index nt = k.ntk_cross.rows();
  detail::require_dims(k.ntk_train.cols() == n && k.nngp_train.rows() == n && k.nngp_train.cols() == n,
                       "ntk_predict: train blocks must be n x n");
  detail::require_dims(k.ntk_cross.cols() == n && k.nngp_cross.cols() == n && k.nngp_cross.rows() == nt,
                       "ntk_predict: cross blocks must be n_test x n");
  detail::require_dims(k.nngp_test.rows() == nt && k.nngp_test.cols() == nt,
                       "ntk_predict: test block must be n_test x n_test");
  detail::require_dims(targets.rows() == n, "ntk_predict: target rows mismatch");
  detail::require(dynamics.learning_rate > 0.0, "ntk_predict: learning rate must be > 0");
  detail::require(dynamics.time >= 0.0, "ntk_predict: time must be >= 0");

  NtkPrediction out;
  if (dynamics.time == 0.0) {
    out.covariance = k.nngp_test.values;
    out.posteriors.resize(static_cast<std::size_t>(nt));
    for (Eigen::Index i = 0; i < nt; ++i)
      out.posteriors[static_cast<std::size_t>(i)] = {Eigen::VectorXd::Zero(targets.cols()),
                                                     std::max(0.0, out.covariance(i, i))};
    return out;
  }

  // Jitter is only needed to make Θ invertible.
  const double jitter = cholesky_with_jitter(k.ntk_train.values).jitter;
  Eigen::MatrixXd theta = symmetrized(k.ntk_train.values);
  theta.diagonal().array() += jitter;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(theta);
  if (eig.info() != Eigen::Success) throw IndefiniteKernelError("ntk_predict: eigensolver failed");
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const Eigen::MatrixXd& basis = eig.eigenvectors();

  // g(λ) = (1 − e^{−ηtλ})/λ, continuous at λ = 0.
  Eigen::VectorXd g(n);
  const double eta_t = dynamics.learning_rate * dynamics.time;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double l = lambda(i);
    if (dynamics.converged()) {
      if (!(l > 0.0)) throw IndefiniteKernelError("ntk_predict: Θ is singular at t = ∞");
      g(i) = 1.0 / l;
    } else if (std::abs(l * eta_t) < 1e-12) {
      g(i) = eta_t;
    } else {
      g(i) = -std::expm1(-eta_t * l) / l;
    }
  }

  const Eigen::MatrixXd a = (k.ntk_cross.values * basis) * g.asDiagonal() * basis.transpose();
  const Eigen::MatrixXd mean = a * targets;
  const Eigen::MatrixXd cross_term = a * k.nngp_cross.values.transpose();
  Eigen::MatrixXd cov = k.nngp_test.values + a * k.nngp_train.values * a.transpose() - cross_term -
                        cross_term.transpose();
  out.covariance = symmetrized(cov);
  out.posteriors.resize(static_cast<std::size_t>(nt));
  for (Eigen::Index i = 0; i < nt; ++i)
    out.posteriors[static_cast<std::size_t>(i)] = {mean.row(i).transpose(),
                                                   std::max(0.0, out.covariance(i, i))};
  return out;
}

}  // namespace gpr
}  // namespace nkgp
