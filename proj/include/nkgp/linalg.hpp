#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "nkgp/error.hpp"

namespace nkgp {

struct JitteredCholesky {
  Eigen::MatrixXd lower;  // L with L·Lᵀ = A + jitter·I
  double jitter = 0.0;    // diagonal added on top of A
};

/// Cholesky factor of a symmetric matrix. If the plain factorization fails,
/// retries with jitter 1e-6·mean(diag), escalating ×10 up to 1e-2·mean(diag).
inline JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& a) {
  detail::require_dims(a.rows() == a.cols(), "cholesky: matrix is not square");
  if (!a.allFinite()) throw DomainError("cholesky: matrix has non-finite entries");
  const Eigen::Index n = a.rows();
  if (n == 0) return {Eigen::MatrixXd(0, 0), 0.0};

  auto attempt = [&](double jitter, JitteredCholesky& out) {
    Eigen::MatrixXd shifted = a;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success) return false;
    Eigen::MatrixXd l = llt.matrixL();
    if (!l.allFinite() || (l.diagonal().array() <= 0.0).any()) return false;
    out = {std::move(l), jitter};
    return true;
  };

  JitteredCholesky result;
  if (attempt(0.0, result)) return result;

  double scale = a.diagonal().mean();
  if (!(scale > 0.0)) scale = 1.0;
  for (double rel = 1e-6; rel <= 1e-2 * (1.0 + 1e-9); rel *= 10.0)
    if (attempt(rel * scale, result)) return result;
  throw IndefiniteKernelError("cholesky: matrix is not positive definite after jitter up to " +
                              std::to_string(1e-2 * scale));
}

/// Solves (L·Lᵀ) X = B given the lower factor L.
inline Eigen::MatrixXd cholesky_solve(const Eigen::MatrixXd& lower, const Eigen::MatrixXd& b) {
  const auto l = lower.triangularView<Eigen::Lower>();
  Eigen::MatrixXd y = l.solve(b);
  return l.transpose().solve(y);
}

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& a) {
  return 0.5 * (a + a.transpose());
}

}  // namespace nkgp
