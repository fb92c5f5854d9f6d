#pragma once

// Infinite-width kernels of fully-connected networks (NNGP and NTK) and the
// RBF baseline, assembled on dense feature matrices.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "nkgp/error.hpp"

namespace nkgp {

enum class KernelFamily { NNGP, NTK, RBF };
enum class Activation { ReLU, Erf };

inline std::string to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::NNGP: return "nngp";
    case KernelFamily::NTK: return "ntk";
    case KernelFamily::RBF: return "rbf";
  }
  return "?";
}

inline std::string to_string(Activation a) { return a == Activation::ReLU ? "relu" : "erf"; }

/// Hyperparameters of a neural kernel. `depth` counts hidden layers; the
/// readout variances drive the final recursion step.
struct KernelConfig {
  KernelFamily family = KernelFamily::NNGP;
  Activation activation = Activation::ReLU;
  int depth = 1;
  double weight_variance = 1.0;
  double bias_variance = 0.0;
  double readout_weight_variance = 1.0;
  double readout_bias_variance = 0.0;
  double kernel_scale = 1.0;
  double diagonal_regularizer = 0.0;
  double rbf_beta = 1.0;
  double rbf_gamma = 1.0;

  friend bool operator==(const KernelConfig&, const KernelConfig&) = default;

  /// Readout layer shares the body variances.
  KernelConfig& readout_same_as_body() {
    readout_weight_variance = weight_variance;
    readout_bias_variance = bias_variance;
    return *this;
  }

  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    detail::require(depth >= 0, "kernel config: depth must be >= 0");
    detail::require(finite(kernel_scale) && kernel_scale > 0.0, "kernel config: kernel_scale must be > 0");
    detail::require(finite(diagonal_regularizer) && diagonal_regularizer >= 0.0,
                    "kernel config: diagonal_regularizer must be >= 0");
    if (family == KernelFamily::RBF) {
      detail::require(finite(rbf_beta) && rbf_beta > 0.0, "kernel config: rbf_beta must be > 0");
      detail::require(finite(rbf_gamma) && rbf_gamma >= 0.0, "kernel config: rbf_gamma must be >= 0");
    } else {
      detail::require(finite(weight_variance) && weight_variance > 0.0,
                      "kernel config: weight_variance must be > 0");
      detail::require(finite(readout_weight_variance) && readout_weight_variance > 0.0,
                      "kernel config: readout_weight_variance must be > 0");
      detail::require(finite(bias_variance) && bias_variance >= 0.0,
                      "kernel config: bias_variance must be >= 0");
      detail::require(finite(readout_bias_variance) && readout_bias_variance >= 0.0,
                      "kernel config: readout_bias_variance must be >= 0");
    }
  }
};

/// Dense Gram matrix. When `is_square_symmetric` is set the configured
/// diagonal regularizer has already been added.
struct KernelMatrix {
  Eigen::MatrixXd values;
  bool is_square_symmetric = false;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return values(i, j); }
};

// Tolerance on |correlation| - 1 before a covariance triple is rejected.
inline constexpr double kCorrelationClampTolerance = 1e-9;

namespace detail {

inline void check_triple(double kxx, double kxy, double kyy, const char* who) {
  if (!std::isfinite(kxx) || !std::isfinite(kxy) || !std::isfinite(kyy))
    throw DomainError(std::string(who) + ": non-finite covariance");
  if (kxx < 0.0 || kyy < 0.0)
    throw DomainError(std::string(who) + ": negative variance on the diagonal");
  const double bound = std::sqrt(kxx * kyy) * (1.0 + kCorrelationClampTolerance);
  if (std::abs(kxy) > bound + 1e-300)
    throw DomainError(std::string(who) + ": |covariance| exceeds sqrt(kxx*kyy)");
}

inline double clamped_correlation(double kxx, double kxy, double kyy) {
  return std::clamp(kxy / std::sqrt(kxx * kyy), -1.0, 1.0);
}

}  // namespace detail

/// Layer-1 pre-activation covariance σ_w²·⟨x,x′⟩/n0 + σ_b².
inline double base_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& x_prime, const KernelConfig& config) {
  detail::require_dims(x.size() == x_prime.size(), "base_kernel: feature length mismatch");
  detail::require_dims(x.size() >= 1, "base_kernel: empty feature vector");
  if (!x.allFinite() || !x_prime.allFinite())
    throw DomainError("base_kernel: non-finite input");
  const double n0 = static_cast<double>(x.size());
  return config.weight_variance * x.dot(x_prime) / n0 + config.bias_variance;
}

/// E[relu(u)·relu(v)] for (u, v) ~ N(0, [[kxx, kxy], [kxy, kyy]]).
inline double relu_moment(double kxx, double kxy, double kyy) {
  detail::check_triple(kxx, kxy, kyy, "relu_moment");
  if (kxx == 0.0 || kyy == 0.0) return 0.0;
  const double rho = detail::clamped_correlation(kxx, kxy, kyy);
  const double theta = std::acos(rho);
  const double sin_theta = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  return std::sqrt(kxx * kyy) * (sin_theta + (std::numbers::pi - theta) * rho) /
         (2.0 * std::numbers::pi);
}

/// E[erf(u)·erf(v)].
inline double erf_moment(double kxx, double kxy, double kyy) {
  detail::check_triple(kxx, kxy, kyy, "erf_moment");
  const double arg = 2.0 * kxy / std::sqrt((1.0 + 2.0 * kxx) * (1.0 + 2.0 * kyy));
  return 2.0 / std::numbers::pi * std::asin(std::clamp(arg, -1.0, 1.0));
}

/// E[relu′(u)·relu′(v)] = P(u > 0, v > 0).
inline double relu_derivative_moment(double kxx, double kxy, double kyy) {
  detail::check_triple(kxx, kxy, kyy, "relu_derivative_moment");
  if (kxx == 0.0 || kyy == 0.0) return 0.0;
  const double theta = std::acos(detail::clamped_correlation(kxx, kxy, kyy));
  return (std::numbers::pi - theta) / (2.0 * std::numbers::pi);
}

/// E[erf′(u)·erf′(v)].
inline double erf_derivative_moment(double kxx, double kxy, double kyy) {
  detail::check_triple(kxx, kxy, kyy, "erf_derivative_moment");
  const double det = (1.0 + 2.0 * kxx) * (1.0 + 2.0 * kyy) - 4.0 * kxy * kxy;
  if (!(det > 0.0)) throw DomainError("erf_derivative_moment: degenerate covariance");
  return 4.0 / std::numbers::pi / std::sqrt(det);
}

inline double activation_moment(Activation a, double kxx, double kxy, double kyy) {
  return a == Activation::ReLU ? relu_moment(kxx, kxy, kyy) : erf_moment(kxx, kxy, kyy);
}

inline double activation_derivative_moment(Activation a, double kxx, double kxy, double kyy) {
  return a == Activation::ReLU ? relu_derivative_moment(kxx, kxy, kyy)
                               : erf_derivative_moment(kxx, kxy, kyy);
}

namespace detail {

struct LayerVariances {
  double weight;
  double bias;
};

inline LayerVariances layer_variances(const KernelConfig& c, int round) {
  // The last recursion step feeds the readout layer.
  if (round == c.depth - 1) return {c.readout_weight_variance, c.readout_bias_variance};
  return {c.weight_variance, c.bias_variance};
}

inline Eigen::VectorXd base_diagonal(const Eigen::MatrixXd& x, const KernelConfig& c) {
  const double n0 = static_cast<double>(x.cols());
  return (c.weight_variance * x.rowwise().squaredNorm() / n0).array() + c.bias_variance;
}

inline void check_features(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const char* who) {
  require_dims(x.cols() == y.cols(), std::string(who) + ": feature dimension mismatch");
  require_dims(x.cols() >= 1, std::string(who) + ": feature dimension must be >= 1");
  if (!x.allFinite() || !y.allFinite()) throw DomainError(std::string(who) + ": non-finite features");
}

inline bool same_inputs(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  return &x == &y || (x.rows() == y.rows() && x.cols() == y.cols() && x == y);
}

struct Recursion {
  Eigen::MatrixXd nngp;
  Eigen::MatrixXd ntk;  // empty unless requested
};

// Runs the layerwise recursion. Self-covariances for the cross block come
// from separate diagonal recursions over the rows of `x` and `y`. In the
// square case only the upper triangle is computed and then mirrored.
inline Recursion run_recursion(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                               const KernelConfig& c, bool with_ntk, bool square) {
  const Eigen::Index m = x.rows(), mp = y.rows();
  const double n0 = static_cast<double>(x.cols());
  Recursion r;
  r.nngp = (c.weight_variance / n0) * (x * y.transpose());
  r.nngp.array() += c.bias_variance;
  Eigen::VectorXd diag_x = base_diagonal(x, c);
  Eigen::VectorXd diag_y = square ? diag_x : base_diagonal(y, c);
  if (with_ntk) r.ntk = r.nngp;

  for (int round = 0; round < c.depth; ++round) {
    const auto [sw, sb] = layer_variances(c, round);
    for (Eigen::Index j = 0; j < mp; ++j) {
      const Eigen::Index i_end = square ? j + 1 : m;
      for (Eigen::Index i = 0; i < i_end; ++i) {
        const double k = r.nngp(i, j);
        const double next = sw * activation_moment(c.activation, diag_x(i), k, diag_y(j)) + sb;
        if (with_ntk) {
          const double dot = activation_derivative_moment(c.activation, diag_x(i), k, diag_y(j));
          r.ntk(i, j) = next + sw * dot * r.ntk(i, j);
        }
        r.nngp(i, j) = next;
      }
    }
    for (Eigen::Index i = 0; i < m; ++i)
      diag_x(i) = sw * activation_moment(c.activation, diag_x(i), diag_x(i), diag_x(i)) + sb;
    if (square) {
      diag_y = diag_x;
    } else {
      for (Eigen::Index j = 0; j < mp; ++j)
        diag_y(j) = sw * activation_moment(c.activation, diag_y(j), diag_y(j), diag_y(j)) + sb;
    }
  }

  if (square) {
    r.nngp.triangularView<Eigen::StrictlyLower>() = r.nngp.transpose();
    if (with_ntk) r.ntk.triangularView<Eigen::StrictlyLower>() = r.ntk.transpose();
  }
  r.nngp *= c.kernel_scale;
  if (with_ntk) r.ntk *= c.kernel_scale;
  return r;
}

inline KernelMatrix finish(Eigen::MatrixXd values, bool square, double regularizer) {
  if (!values.allFinite()) throw DomainError("kernel: non-finite entries");
  if (square) values.diagonal().array() += regularizer;
  return {std::move(values), square};
}

}  // namespace detail

/// NNGP kernel K(X, X′). Square (and regularized) when X and X′ are the same
/// inputs.
inline KernelMatrix nngp_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_prime,
                                const KernelConfig& config) {
  detail::require(config.family != KernelFamily::RBF, "nngp_matrix: RBF config");
  config.validate();
  detail::check_features(x, x_prime, "nngp_matrix");
  const bool square = detail::same_inputs(x, x_prime);
  auto r = detail::run_recursion(x, x_prime, config, false, square);
  return detail::finish(std::move(r.nngp), square, config.diagonal_regularizer);
}

inline KernelMatrix nngp_matrix(const Eigen::MatrixXd& x, const KernelConfig& config) {
  return nngp_matrix(x, x, config);
}

struct NtkPair {
  KernelMatrix nngp;
  KernelMatrix ntk;
};

/// NNGP and NTK of the same architecture:
/// Θ ← K_next + σ_w²·Ė(K)·Θ at each recursion step, starting from Θ = K.
inline NtkPair ntk_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_prime,
                          const KernelConfig& config) {
  detail::require(config.family == KernelFamily::NTK, "ntk_matrix: config family must be NTK");
  config.validate();
  detail::check_features(x, x_prime, "ntk_matrix");
  const bool square = detail::same_inputs(x, x_prime);
  auto r = detail::run_recursion(x, x_prime, config, true, square);
  return {detail::finish(std::move(r.nngp), square, config.diagonal_regularizer),
          detail::finish(std::move(r.ntk), square, config.diagonal_regularizer)};
}

inline NtkPair ntk_matrix(const Eigen::MatrixXd& x, const KernelConfig& config) {
  return ntk_matrix(x, x, config);
}

/// β·exp(−γ‖x − x′‖²).
inline KernelMatrix rbf_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_prime,
                               const KernelConfig& config) {
  detail::require(config.family == KernelFamily::RBF, "rbf_matrix: config family must be RBF");
  config.validate();
  detail::check_features(x, x_prime, "rbf_matrix");
  const bool square = detail::same_inputs(x, x_prime);
  Eigen::MatrixXd d2 = (-2.0 * (x * x_prime.transpose())).colwise() + x.rowwise().squaredNorm();
  d2.rowwise() += x_prime.rowwise().squaredNorm().transpose();
  d2 = d2.cwiseMax(0.0);
  if (square) d2.diagonal().setZero();
  Eigen::MatrixXd values = config.rbf_beta * (-config.rbf_gamma * d2.array()).exp().matrix();
  return detail::finish(std::move(values), square, config.diagonal_regularizer);
}

inline KernelMatrix rbf_matrix(const Eigen::MatrixXd& x, const KernelConfig& config) {
  return rbf_matrix(x, x, config);
}

/// The kernel a GP over this family uses: K for NNGP, Θ for NTK, RBF for RBF.
inline KernelMatrix gram(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_prime,
                         const KernelConfig& config) {
  switch (config.family) {
    case KernelFamily::NNGP: return nngp_matrix(x, x_prime, config);
    case KernelFamily::NTK: return ntk_matrix(x, x_prime, config).ntk;
    case KernelFamily::RBF: return rbf_matrix(x, x_prime, config);
  }
  throw DomainError("gram: unknown kernel family");
}

inline KernelMatrix gram(const Eigen::MatrixXd& x, const KernelConfig& config) {
  return gram(x, x, config);
}

/// Prior variances k(x, x) for each row, without the diagonal regularizer.
inline Eigen::VectorXd gram_diagonal(const Eigen::MatrixXd& x, const KernelConfig& config) {
  config.validate();
  if (config.family == KernelFamily::RBF) return Eigen::VectorXd::Constant(x.rows(), config.rbf_beta);
  detail::check_features(x, x, "gram_diagonal");
  Eigen::VectorXd diag = detail::base_diagonal(x, config);
  Eigen::VectorXd theta = diag;
  for (int round = 0; round < config.depth; ++round) {
    const auto [sw, sb] = detail::layer_variances(config, round);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double k = diag(i);
      const double next = sw * activation_moment(config.activation, k, k, k) + sb;
      theta(i) = next + sw * activation_derivative_moment(config.activation, k, k, k) * theta(i);
      diag(i) = next;
    }
  }
  return config.kernel_scale * (config.family == KernelFamily::NTK ? theta : diag);
}

}  // namespace nkgp
