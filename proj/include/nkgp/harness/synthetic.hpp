#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "nkgp/harness/dataset.hpp"

namespace nkgp::harness {

struct BlobSpec {
  int n = 500;
  int n_classes = 4;
  int dim = 2;
  double radius = 4.0;  // class centres sit on a circle in the first two axes
  double spread = 1.0;  // isotropic standard deviation around each centre
  std::uint64_t seed = 0;
};

/// Isotropic Gaussian blobs with labels assigned round-robin.
inline Dataset make_blobs(const BlobSpec& s) {
  detail::require(s.n >= 1 && s.n_classes >= 2 && s.dim >= 2, "make_blobs: bad spec");
  Rng rng(s.seed);
  Dataset ds;
  ds.name = "blobs";
  ds.task = TaskKind::Classification;
  ds.n_classes = s.n_classes;
  ds.features = s.spread * standard_normal(s.n, s.dim, rng);
  for (int i = 0; i < s.n; ++i) {
    const int y = i % s.n_classes;
    const double angle = 2.0 * std::numbers::pi * y / s.n_classes;
    ds.features(i, 0) += s.radius * std::cos(angle);
    ds.features(i, 1) += s.radius * std::sin(angle);
    ds.labels.push_back(y);
  }
  return ds;
}

}  // namespace nkgp::harness
