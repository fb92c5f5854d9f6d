#pragma once

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "nkgp/error.hpp"

namespace nkgp {

/// Normalized confidences over classes plus the argmax label (lowest index
/// wins ties).
struct CategoricalPrediction {
  Eigen::VectorXd confidences;
  int predicted_class = 0;

  double max_confidence() const { return confidences(predicted_class); }
};

inline int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& v) {
  detail::require_dims(v.size() > 0, "argmax: empty vector");
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best;
}

inline CategoricalPrediction make_prediction(Eigen::VectorXd confidences) {
  const int k = argmax_lowest(confidences);
  return {std::move(confidences), k};
}

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

inline Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  Eigen::VectorXd e = (v.array() - m).exp().matrix();
  return e / e.sum();
}

}  // namespace nkgp
