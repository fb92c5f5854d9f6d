#pragma once

// Elliptical slice sampling for latent matrices with a zero-mean Gaussian
// prior whose columns are independent with covariance L·Lᵀ.

#include <cmath>
#include <cstddef>
#include <numbers>

#include <Eigen/Dense>

#include "nkgp/random.hpp"

namespace nkgp {

struct EssTransition {
  double threshold = 0.0;     // log-likelihood level the accepted state clears
  std::size_t proposals = 0;  // likelihood evaluations spent
};

/// One elliptical slice update of `latent` in place. All columns rotate with
/// the same angle. Proposals with a non-finite log-likelihood are rejected.
template <typename LogLikelihood>
EssTransition ess_update(Eigen::MatrixXd& latent, double& log_likelihood,
                         LogLikelihood&& log_likelihood_fn, const Eigen::MatrixXd& prior_lower,
                         Rng& rng) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  constexpr std::size_t max_shrinks = 10000;

  const Eigen::MatrixXd nu =
      prior_lower.triangularView<Eigen::Lower>() * standard_normal(latent.rows(), latent.cols(), rng);
  EssTransition t;
  t.threshold = log_likelihood + std::log(uniform01(rng));

  double theta = two_pi * uniform01(rng);
  double lo = theta - two_pi;
  double hi = theta;
  Eigen::MatrixXd proposal(latent.rows(), latent.cols());
  for (;;) {
    proposal = std::cos(theta) * latent + std::sin(theta) * nu;
    const double ll = log_likelihood_fn(proposal);
    ++t.proposals;
    if (std::isfinite(ll) && ll > t.threshold) {
      latent.swap(proposal);
      log_likelihood = ll;
      return t;
    }
    // The bracket collapsed onto θ = 0 numerically; the current state
    // already clears the threshold.
    if (t.proposals >= max_shrinks || hi - lo < 1e-300) return t;
    (theta < 0.0 ? lo : hi) = theta;
    theta = lo + (hi - lo) * uniform01(rng);
  }
}

}  // namespace nkgp
