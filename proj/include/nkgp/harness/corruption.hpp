#pragma once

// Feature-space corruptions at graded intensities 1..5. Only features change.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>

#include "nkgp/harness/dataset.hpp"

namespace nkgp::harness {

enum class CorruptionKind { GaussianNoise, FeatureBlur, FeatureDropout, ContrastScale };

inline constexpr std::array<CorruptionKind, 4> kAllCorruptions{
    CorruptionKind::GaussianNoise, CorruptionKind::FeatureBlur, CorruptionKind::FeatureDropout,
    CorruptionKind::ContrastScale};

inline std::string to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::GaussianNoise: return "gaussian_noise";
    case CorruptionKind::FeatureBlur: return "feature_blur";
    case CorruptionKind::FeatureDropout: return "feature_dropout";
    case CorruptionKind::ContrastScale: return "contrast_scale";
  }
  return "?";
}

inline CorruptionKind parse_corruption(std::string_view s) {
  for (auto k : kAllCorruptions)
    if (to_string(k) == s) return k;
  throw ParseError("unknown corruption '" + std::string(s) + "'");
}

/// gaussian_noise: x + N(0, (0.1·i)²·std²) with per-column std of `ds`.
/// feature_blur: mean over feature indices within ±i (window truncated at
/// the ends). feature_dropout: per row, zero ⌊0.05·i·d + U⌋ distinct
/// features (expected fraction 0.05·i). contrast_scale: (x − mean)(1 − 0.15·i)
/// + mean with per-column means of `ds`.
inline Dataset corrupt(const Dataset& ds, CorruptionKind kind, int intensity, std::uint64_t seed) {
  detail::require(intensity >= 1 && intensity <= 5,
                  "corrupt: intensity must be in 1..5, got " + std::to_string(intensity));
  Dataset out = ds;
  Eigen::MatrixXd& x = out.features;
  const Eigen::Index n = x.rows(), d = x.cols();
  Rng rng(seed);
  switch (kind) {
    case CorruptionKind::GaussianNoise: {
      const auto stats = column_statistics(ds.features);
      const Eigen::MatrixXd z = standard_normal(n, d, rng);
      for (Eigen::Index j = 0; j < d; ++j) x.col(j) += (0.1 * intensity * stats.scale(j)) * z.col(j);
      break;
    }
    case CorruptionKind::FeatureBlur: {
      for (Eigen::Index j = 0; j < d; ++j) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, j - intensity);
        const Eigen::Index hi = std::min<Eigen::Index>(d - 1, j + intensity);
        x.col(j) = ds.features.middleCols(lo, hi - lo + 1).rowwise().mean();
      }
      break;
    }
    case CorruptionKind::FeatureDropout: {
      const double expected = 0.05 * intensity * static_cast<double>(d);
      std::vector<Eigen::Index> cols(static_cast<std::size_t>(d));
      for (Eigen::Index i = 0; i < n; ++i) {
        auto k = static_cast<Eigen::Index>(std::floor(expected + uniform01(rng)));
        k = std::min(k, d);
        std::iota(cols.begin(), cols.end(), 0);
        for (Eigen::Index m = 0; m < k; ++m) {  // partial Fisher–Yates
          const auto pick = m + static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(d - m));
          std::swap(cols[static_cast<std::size_t>(m)], cols[static_cast<std::size_t>(std::min(pick, d - 1))]);
          x(i, cols[static_cast<std::size_t>(m)]) = 0.0;
        }
      }
      break;
    }
    case CorruptionKind::ContrastScale: {
      const Eigen::RowVectorXd mean = ds.features.colwise().mean();
      const double factor = 1.0 - 0.15 * intensity;
      x = ((ds.features.rowwise() - mean) * factor).rowwise() + mean;
      break;
    }
  }
  return out;
}

}  // namespace nkgp::harness
