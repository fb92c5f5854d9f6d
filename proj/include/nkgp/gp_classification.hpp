#pragma once

// Multi-class GP classification with a softmax link. Latents on the
// training set are sampled by elliptical slice sampling; test latents are
// drawn from their exact Gaussian conditional given each kept sample.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nkgp/categorical.hpp"
#include "nkgp/error.hpp"
#include "nkgp/ess.hpp"
#include "nkgp/kernels.hpp"
#include "nkgp/linalg.hpp"
#include "nkgp/parallel.hpp"
#include "nkgp/random.hpp"

namespace nkgp {

/// Training latents (n_train × n_classes) and their softmax log-likelihood.
struct LatentState {
  Eigen::MatrixXd latent;
  double log_likelihood = 0.0;
};

struct EssConfig {
  int n_chains = 2;
  int burn_in = 1000;
  int n_samples = 1000;
  int thinning = 5;
  std::uint64_t seed = 0;

  bool operator==(const EssConfig&) const = default;

  void validate() const {
    detail::require(n_chains >= 1, "ess config: n_chains must be >= 1");
    detail::require(burn_in >= 0, "ess config: burn_in must be >= 0");
    detail::require(n_samples >= 0, "ess config: n_samples must be >= 0");
    detail::require(thinning >= 1, "ess config: thinning must be >= 1");
  }
};

namespace gpc {

/// Σ_i [F_i[y_i] − logsumexp(F_i)].
inline double softmax_log_likelihood(const Eigen::MatrixXd& latent, std::span<const int> labels) {
  detail::require_dims(latent.rows() == static_cast<Eigen::Index>(labels.size()),
                       "softmax_log_likelihood: label count mismatch");
  const auto n_classes = latent.cols();
  double total = 0.0;
  for (Eigen::Index i = 0; i < latent.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= n_classes)
      throw DomainError("softmax_log_likelihood: label " + std::to_string(y) + " out of range");
    const Eigen::VectorXd row = latent.row(i).transpose();
    total += row(y) - log_sum_exp(row);
  }
  return total;
}

inline LatentState ess_step(LatentState state, const Eigen::MatrixXd& prior_cholesky,
                            std::span<const int> labels, Rng& rng) {
  ess_update(state.latent, state.log_likelihood,
             [&](const Eigen::MatrixXd& f) { return softmax_log_likelihood(f, labels); },
             prior_cholesky, rng);
  return state;
}

}  // namespace gpc

struct ChainSummary {
  std::uint64_t seed = 0;
  double mean_log_likelihood = 0.0;  // over kept states
  double final_log_likelihood = 0.0;
  std::size_t n_kept = 0;
  std::size_t n_proposals = 0;  // likelihood evaluations, burn-in included
};

struct PosteriorSamples {
  std::vector<LatentState> states;  // chains concatenated in chain order
  std::vector<ChainSummary> chains;
  Eigen::MatrixXd prior_cholesky;
};

namespace gpc {

/// Runs `config.n_chains` independent chains, each initialized at a prior
/// draw, discarding `burn_in` steps and keeping every `thinning`-th state.
inline PosteriorSamples sample_posterior(const KernelMatrix& k_train, std::span<const int> labels,
                                         int n_classes, const EssConfig& config,
                                         std::size_t workers = 1) {
  config.validate();
  detail::require_dims(k_train.rows() == k_train.cols(), "sample_posterior: kernel is not square");
  detail::require_dims(k_train.rows() == static_cast<Eigen::Index>(labels.size()),
                       "sample_posterior: label count mismatch");
  detail::require(n_classes >= 2, "sample_posterior: need at least two classes");

  PosteriorSamples out;
  out.prior_cholesky = cholesky_with_jitter(k_train.values).lower;
  const auto& lower = out.prior_cholesky;
  const auto n_chains = static_cast<std::size_t>(config.n_chains);
  const auto per_chain = static_cast<std::size_t>(config.n_samples);

  out.states.resize(n_chains * per_chain);
  out.chains.resize(n_chains);
  parallel_for(n_chains, workers, [&](std::size_t c) {
    ChainSummary& summary = out.chains[c];
    summary.seed = derive_seed(config.seed, c);
    Rng rng(summary.seed);
    auto loglik = [&](const Eigen::MatrixXd& f) { return softmax_log_likelihood(f, labels); };

    LatentState state;
    state.latent = lower.triangularView<Eigen::Lower>() * standard_normal(lower.rows(), n_classes, rng);
    state.log_likelihood = loglik(state.latent);

    auto advance = [&] {
      summary.n_proposals += ess_update(state.latent, state.log_likelihood, loglik, lower, rng).proposals;
    };
    for (int i = 0; i < config.burn_in; ++i) advance();
    for (std::size_t s = 0; s < per_chain; ++s) {
      for (int t = 0; t < config.thinning; ++t) advance();
      out.states[c * per_chain + s] = state;
      summary.mean_log_likelihood += state.log_likelihood;
    }
    summary.n_kept = per_chain;
    if (per_chain > 0) summary.mean_log_likelihood /= static_cast<double>(per_chain);
    summary.final_log_likelihood = state.log_likelihood;
  });
  return out;
}

/// Monte-Carlo predictive class probabilities. For every kept sample F the
/// test latents are f ~ N(k_cross·K⁻¹F, σ²) per class with
/// σ² = k(x, x) − k_crossᵀK⁻¹k_cross. The same `n_inner` standard-normal
/// draws per test point are reused for every sample, so the result does not
/// depend on the order of `samples`.
inline std::vector<CategoricalPrediction> predict(std::span<const LatentState> samples,
                                                  const KernelMatrix& k_cross,
                                                  const Eigen::VectorXd& k_test_diag,
                                                  const Eigen::MatrixXd& prior_cholesky, int n_inner,
                                                  Rng& rng) {
  detail::require_dims(!samples.empty(), "gpc predict: no posterior samples");
  detail::require(n_inner >= 1, "gpc predict: n_inner must be >= 1");
  const Eigen::Index n = prior_cholesky.rows();
  const Eigen::Index nt = k_cross.rows();
  const Eigen::Index n_classes = samples.front().latent.cols();
  detail::require_dims(k_cross.cols() == n, "gpc predict: cross kernel has wrong width");
  detail::require_dims(k_test_diag.size() == nt, "gpc predict: test diagonal length mismatch");
  for (const auto& s : samples)
    detail::require_dims(s.latent.rows() == n && s.latent.cols() == n_classes,
                         "gpc predict: latent sample shape mismatch");

  const Eigen::MatrixXd weights = cholesky_solve(prior_cholesky, k_cross.values.transpose()).transpose();
  const Eigen::MatrixXd v =
      prior_cholesky.triangularView<Eigen::Lower>().solve(k_cross.values.transpose());
  Eigen::VectorXd sd(nt);
  for (Eigen::Index t = 0; t < nt; ++t)
    sd(t) = std::sqrt(std::max(0.0, k_test_diag(t) - v.col(t).squaredNorm()));

  // inner(t, r·C + c): shared standard normals for test point t, draw r.
  const Eigen::MatrixXd inner = standard_normal(nt, n_inner * n_classes, rng);

  Eigen::MatrixXd accum = Eigen::MatrixXd::Zero(nt, n_classes);
  Eigen::VectorXd logits(n_classes);
  for (const auto& s : samples) {
    const Eigen::MatrixXd means = weights * s.latent;
    for (Eigen::Index t = 0; t < nt; ++t) {
      for (int r = 0; r < n_inner; ++r) {
        for (Eigen::Index c = 0; c < n_classes; ++c)
          logits(c) = means(t, c) + sd(t) * inner(t, r * n_classes + c);
        accum.row(t) += softmax(logits).transpose();
      }
    }
  }

  std::vector<CategoricalPrediction> out;
  out.reserve(static_cast<std::size_t>(nt));
  for (Eigen::Index t = 0; t < nt; ++t) {
    Eigen::VectorXd p = accum.row(t).transpose();
    out.push_back(make_prediction(p / p.sum()));
  }
  return out;
}

}  // namespace gpc
}  // namespace nkgp
