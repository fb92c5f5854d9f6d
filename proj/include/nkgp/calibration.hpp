#pragma once

// Calibration metrics over categorical predictions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "nkgp/categorical.hpp"
#include "nkgp/error.hpp"

namespace nkgp {

inline constexpr double kNllProbabilityFloor = 1e-12;

namespace detail {

inline void check_predictions(std::span<const CategoricalPrediction> preds, std::span<const int> labels,
                              const char* who) {
  require_dims(!preds.empty(), std::string(who) + ": empty prediction set");
  require_dims(preds.size() == labels.size(), std::string(who) + ": label count mismatch");
  for (std::size_t i = 0; i < preds.size(); ++i)
    require(labels[i] >= 0 && labels[i] < preds[i].confidences.size(), std::string(who) + ": label out of range");
}

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      c_ += (sum_ - t) + x;
    else
      c_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + c_; }

 private:
  double sum_ = 0.0, c_ = 0.0;
};

}  // namespace detail

inline double accuracy(std::span<const CategoricalPrediction> preds, std::span<const int> labels) {
  detail::check_predictions(preds, labels, "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i].predicted_class == labels[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// Equal-width bins over max-confidence; the last bin is closed at 1.
inline double ece(std::span<const CategoricalPrediction> preds, std::span<const int> labels, int n_bins = 10) {
  detail::check_predictions(preds, labels, "ece");
  detail::require(n_bins >= 1, "ece: n_bins must be >= 1");
  std::vector<double> conf(n_bins, 0.0), hits(n_bins, 0.0), count(n_bins, 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double c = preds[i].max_confidence();
    const int b = std::clamp(static_cast<int>(std::floor(c * n_bins)), 0, n_bins - 1);
    conf[b] += c;
    hits[b] += preds[i].predicted_class == labels[i];
    count[b] += 1.0;
  }
  double total = 0.0;
  for (int b = 0; b < n_bins; ++b)
    if (count[b] > 0.0) total += std::abs(hits[b] - conf[b]);  // count·|acc − conf|
  return total / static_cast<double>(preds.size());
}

/// Mean over points of Σ_classes (p − onehot)².
inline double brier(std::span<const CategoricalPrediction> preds, std::span<const int> labels) {
  detail::check_predictions(preds, labels, "brier");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double s = preds[i].confidences.squaredNorm();
    const double p = preds[i].confidences(labels[i]);
    s += (1.0 - p) * (1.0 - p) - p * p;
    total += s;
  }
  return total / static_cast<double>(preds.size());
}

struct NllSummary {
  double sum = 0.0;
  double mean = 0.0;
};

inline NllSummary categorical_nll(std::span<const CategoricalPrediction> preds, std::span<const int> labels) {
  detail::check_predictions(preds, labels, "categorical_nll");
  detail::CompensatedSum total;
  for (std::size_t i = 0; i < preds.size(); ++i)
    total.add(-std::log(std::max(preds[i].confidences(labels[i]), kNllProbabilityFloor)));
  return {total.value(), total.value() / static_cast<double>(preds.size())};
}

struct EntropyConfidence {
  double entropy_mean = 0.0;
  double confidence_mean = 0.0;
};

inline EntropyConfidence entropy_and_confidence(std::span<const CategoricalPrediction> preds) {
  detail::require_dims(!preds.empty(), "entropy_and_confidence: empty prediction set");
  double h = 0.0, c = 0.0;
  for (const auto& p : preds) {
    for (Eigen::Index k = 0; k < p.confidences.size(); ++k) {
      const double q = p.confidences(k);
      if (q > 0.0) h -= q * std::log(q);
    }
    c += p.max_confidence();
  }
  const auto n = static_cast<double>(preds.size());
  return {h / n, c / n};
}

struct ReliabilityBin {
  double confidence_lower = 0.0;  // smallest max-confidence in the bin
  double confidence_upper = 0.0;  // largest max-confidence in the bin
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double mean_accuracy = 0.0;

  bool operator==(const ReliabilityBin&) const = default;
};

/// Sorts by max-confidence and splits into `n_bins` equal-count bins (sizes
/// differ by at most one).
inline std::vector<ReliabilityBin> reliability_bins(std::span<const CategoricalPrediction> preds,
                                                    std::span<const int> labels, int n_bins = 10) {
  detail::check_predictions(preds, labels, "reliability_bins");
  detail::require(n_bins >= 1, "reliability_bins: n_bins must be >= 1");
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].max_confidence() < preds[b].max_confidence();
  });

  const std::size_t n = preds.size(), nb = static_cast<std::size_t>(n_bins);
  std::vector<ReliabilityBin> bins(nb);
  std::size_t pos = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t size = n / nb + (b < n % nb ? 1 : 0);
    auto& bin = bins[b];
    bin.count = size;
    for (std::size_t k = 0; k < size; ++k, ++pos) {
      const auto& p = preds[order[pos]];
      if (k == 0) bin.confidence_lower = p.max_confidence();
      bin.confidence_upper = p.max_confidence();
      bin.mean_confidence += p.max_confidence();
      bin.mean_accuracy += p.predicted_class == labels[order[pos]];
    }
    if (size > 0) {
      bin.mean_confidence /= static_cast<double>(size);
      bin.mean_accuracy /= static_cast<double>(size);
    }
  }
  return bins;
}

struct Quartiles {
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;

  bool operator==(const Quartiles&) const = default;
};

/// Linear-interpolation quantile (position q·(n − 1) in the sorted values).
inline double quantile(std::vector<double> values, double q) {
  detail::require_dims(!values.empty(), "quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline Quartiles quartile_summary(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  return {quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)};
}

struct CalibrationReport {
  double ece = 0.0;
  double brier = 0.0;
  double nll_sum = 0.0;
  double nll_mean = 0.0;
  double entropy_mean = 0.0;
  double confidence_mean = 0.0;
  double accuracy = 0.0;
  std::vector<ReliabilityBin> reliability_bins;
};

inline CalibrationReport evaluate_calibration(std::span<const CategoricalPrediction> preds,
                                              std::span<const int> labels) {
  CalibrationReport r;
  r.ece = ece(preds, labels);
  r.brier = brier(preds, labels);
  const auto nll = categorical_nll(preds, labels);
  r.nll_sum = nll.sum;
  r.nll_mean = nll.mean;
  const auto ec = entropy_and_confidence(preds);
  r.entropy_mean = ec.entropy_mean;
  r.confidence_mean = ec.confidence_mean;
  r.accuracy = accuracy(preds, labels);
  r.reliability_bins = reliability_bins(preds, labels);
  return r;
}

}  // namespace nkgp
