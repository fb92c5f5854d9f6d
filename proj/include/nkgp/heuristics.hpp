#pragma once

// Confidence heuristics that turn a Gaussian posterior over class scores
// into a categorical distribution, and temperature fitting on a validation
// set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nkgp/categorical.hpp"
#include "nkgp/error.hpp"
#include "nkgp/gp_regression.hpp"
#include "nkgp/random.hpp"

namespace nkgp {

enum class HeuristicKind { Exact, Pairwise, Softmax };

inline std::string to_string(HeuristicKind k) {
  switch (k) {
    case HeuristicKind::Exact: return "exact";
    case HeuristicKind::Pairwise: return "pairwise";
    case HeuristicKind::Softmax: return "softmax";
  }
  return "?";
}

struct HeuristicConfig {
  HeuristicKind kind = HeuristicKind::Exact;
  double temperature = 1.0;  // variances are scaled as σ_T² = T·σ²
  int n_mc = 2000;
  std::uint64_t seed = 0;
  // Softmax divides the mean by √T when set, by T otherwise.
  bool softmax_sqrt_temperature = true;

  bool operator==(const HeuristicConfig&) const = default;

  void validate() const {
    detail::require(std::isfinite(temperature) && temperature > 0.0, "heuristic: temperature must be > 0");
    detail::require(n_mc >= 1, "heuristic: n_mc must be >= 1");
  }
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Monte-Carlo estimate of P[class i attains the maximum] for independent
/// N(μ_i, T·σ_i²) scores.
inline CategoricalPrediction exact_confidence(const Eigen::VectorXd& mean, const Eigen::VectorXd& variances,
                                              double temperature, int n_mc, Rng& rng) {
  detail::require_dims(mean.size() == variances.size() && mean.size() > 0,
                       "exact_confidence: mean/variance length mismatch");
  detail::require(temperature > 0.0 && n_mc >= 1, "exact_confidence: bad temperature or n_mc");
  detail::require((variances.array() >= 0.0).all(), "exact_confidence: negative variance");
  const Eigen::Index k = mean.size();
  if ((variances.array() == 0.0).all()) {
    Eigen::VectorXd one_hot = Eigen::VectorXd::Zero(k);
    one_hot(argmax_lowest(mean)) = 1.0;
    return make_prediction(std::move(one_hot));
  }
  const Eigen::VectorXd sd = (temperature * variances).array().sqrt().matrix();
  std::normal_distribution<double> normal;
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd draw(k);
  for (int s = 0; s < n_mc; ++s) {
    for (Eigen::Index i = 0; i < k; ++i) draw(i) = mean(i) + sd(i) * normal(rng);
    counts(argmax_lowest(draw)) += 1.0;
  }
  return make_prediction(counts / static_cast<double>(n_mc));
}

inline CategoricalPrediction exact_confidence(const GaussianPosterior& posterior, const HeuristicConfig& config) {
  config.validate();
  Rng rng(config.seed);
  return exact_confidence(posterior.mean, Eigen::VectorXd::Constant(posterior.mean.size(), posterior.variance),
                          config.temperature, config.n_mc, rng);
}

/// Normalized ∏_{j≠i} Φ((μ_i − μ_j)/√(T·σ_i² + T·σ_j²)). Falls back to the
/// argmax one-hot when every score underflows.
inline CategoricalPrediction pairwise_confidence(const Eigen::VectorXd& mean, const Eigen::VectorXd& variances,
                                                 double temperature) {
  detail::require_dims(mean.size() == variances.size() && mean.size() > 0,
                       "pairwise_confidence: mean/variance length mismatch");
  detail::require(temperature > 0.0, "pairwise_confidence: temperature must be > 0");
  detail::require((variances.array() >= 0.0).all(), "pairwise_confidence: negative variance");
  const Eigen::Index k = mean.size();
  Eigen::VectorXd score = Eigen::VectorXd::Ones(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      const double diff = mean(i) - mean(j);
      const double scale = std::sqrt(temperature * (variances(i) + variances(j)));
      double p;
      if (scale > 0.0)
        p = normal_cdf(diff / scale);
      else
        p = diff > 0.0 ? 1.0 : (diff < 0.0 ? 0.0 : 0.5);
      score(i) *= p;
    }
  }
  const double total = score.sum();
  if (!(total > 0.0)) {
    Eigen::VectorXd one_hot = Eigen::VectorXd::Zero(k);
    one_hot(argmax_lowest(mean)) = 1.0;
    return make_prediction(std::move(one_hot));
  }
  return make_prediction(score / total);
}

inline CategoricalPrediction pairwise_confidence(const GaussianPosterior& posterior, const HeuristicConfig& config) {
  config.validate();
  return pairwise_confidence(posterior.mean, Eigen::VectorXd::Constant(posterior.mean.size(), posterior.variance),
                             config.temperature);
}

/// softmax(μ/√T), or softmax(μ/T) when `sqrt_temperature` is false.
inline CategoricalPrediction softmax_confidence(const Eigen::VectorXd& mean, double temperature,
                                                bool sqrt_temperature = true) {
  detail::require(std::isfinite(temperature) && temperature > 0.0, "softmax_confidence: temperature must be > 0");
  detail::require_dims(mean.size() > 0, "softmax_confidence: empty mean");
  const double divisor = sqrt_temperature ? std::sqrt(temperature) : temperature;
  return make_prediction(softmax(mean / divisor));
}

/// Applies the configured heuristic to every posterior. Exact draws use an
/// independent stream per test point, so the output does not depend on how
/// points are batched.
inline std::vector<CategoricalPrediction> heuristic_confidences(std::span<const GaussianPosterior> posteriors,
                                                                const HeuristicConfig& config) {
  config.validate();
  std::vector<CategoricalPrediction> out;
  out.reserve(posteriors.size());
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    const auto& p = posteriors[i];
    const Eigen::VectorXd var = Eigen::VectorXd::Constant(p.mean.size(), p.variance);
    switch (config.kind) {
      case HeuristicKind::Exact: {
        Rng rng(derive_seed(config.seed, i));
        out.push_back(exact_confidence(p.mean, var, config.temperature, config.n_mc, rng));
        break;
      }
      case HeuristicKind::Pairwise:
        out.push_back(pairwise_confidence(p.mean, var, config.temperature));
        break;
      case HeuristicKind::Softmax:
        out.push_back(softmax_confidence(p.mean, config.temperature, config.softmax_sqrt_temperature));
        break;
    }
  }
  return out;
}

inline constexpr double kProbabilityFloor = 1e-12;

struct TemperatureFit {
  double temperature = 1.0;
  double nll = 0.0;  // mean validation NLL at `temperature`
  bool degenerate = false;
};

/// Temperature minimizing the mean validation NLL: a 41-point log grid over
/// [1e-3, 1e3] followed by a golden-section pass between the neighbours of
/// the best grid point. Returns T = 1 flagged degenerate when the NLL does not
/// vary over the grid.
inline TemperatureFit fit_temperature(std::span<const GaussianPosterior> posteriors, std::span<const int> labels,
                                      HeuristicConfig config) {
  detail::require_dims(!posteriors.empty(), "fit_temperature: empty validation set");
  detail::require_dims(posteriors.size() == labels.size(), "fit_temperature: label count mismatch");

  auto nll_at = [&](double log_t) {
    config.temperature = std::exp(log_t);
    const auto preds = heuristic_confidences(posteriors, config);
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
      total -= std::log(std::max(preds[i].confidences(labels[i]), kProbabilityFloor));
    return total / static_cast<double>(preds.size());
  };

  constexpr int n_grid = 41;
  const double lo = std::log(1e-3), hi = std::log(1e3);
  std::vector<double> grid(n_grid), values(n_grid);
  for (int k = 0; k < n_grid; ++k) {
    grid[k] = lo + (hi - lo) * k / (n_grid - 1);
    values[k] = nll_at(grid[k]);
  }
  const auto best = static_cast<int>(std::min_element(values.begin(), values.end()) - values.begin());
  const auto [vmin, vmax] = std::minmax_element(values.begin(), values.end());
  if (*vmax - *vmin < 1e-12) return {1.0, nll_at(0.0), true};

  double a = grid[std::max(best - 1, 0)];
  double b = grid[std::min(best + 1, n_grid - 1)];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = nll_at(c), fd = nll_at(d);
  for (int it = 0; it < 40 && b - a > 1e-6; ++it) {
    if (fc <= fd) {
      b = d; d = c; fd = fc;
      c = b - inv_phi * (b - a);
      fc = nll_at(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + inv_phi * (b - a);
      fd = nll_at(d);
    }
  }
  TemperatureFit fit{std::exp(grid[best]), values[best], false};
  const double refined = fc <= fd ? c : d;
  const double refined_nll = std::min(fc, fd);
  if (refined_nll < fit.nll) fit = {std::exp(refined), refined_nll, false};
  return fit;
}

}  // namespace nkgp
