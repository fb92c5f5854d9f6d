#pragma once

// Hyperparameter grids and grid search with a deterministic first-best
// tie-break.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "nkgp/error.hpp"
#include "nkgp/kernels.hpp"
#include "nkgp/parallel.hpp"

namespace nkgp::harness {

/// Kernel plus observation noise: everything a single fit needs.
struct Hyperparameters {
  KernelConfig kernel;
  double noise_variance = 0.01;

  bool operator==(const Hyperparameters&) const = default;
};

/// Readout-layer variances of a grid cell; `body` copies the hidden-layer pair.
struct Readout {
  bool body = true;
  double weight_variance = 1.0;
  double bias_variance = 0.0;

  bool operator==(const Readout&) const = default;
};

enum class SelectionMetric { Nll, Accuracy, Rmse };

inline std::string to_string(SelectionMetric m) {
  switch (m) {
    case SelectionMetric::Nll: return "nll";
    case SelectionMetric::Accuracy: return "accuracy";
    case SelectionMetric::Rmse: return "rmse";
  }
  return "?";
}

inline bool higher_is_better(SelectionMetric m) { return m == SelectionMetric::Accuracy; }

/// Candidate values per axis. An empty axis keeps the base value. Cells are
/// enumerated lexicographically in declaration order (noise varies fastest).
struct GridSpec {
  std::vector<KernelFamily> family;
  std::vector<Activation> activation;
  std::vector<int> depth;
  std::vector<double> weight_variance;
  std::vector<double> bias_variance;
  std::vector<Readout> readout;
  std::vector<double> kernel_scale;
  std::vector<double> rbf_gamma;
  std::vector<double> rbf_beta;
  std::vector<double> noise_variance;
  SelectionMetric metric = SelectionMetric::Nll;

  bool operator==(const GridSpec&) const = default;

  std::vector<std::size_t> axis_sizes() const {
    auto n = [](const auto& v) { return std::max<std::size_t>(1, v.size()); };
    return {n(family),       n(activation), n(depth),     n(weight_variance), n(bias_variance),
            n(readout),      n(kernel_scale), n(rbf_gamma), n(rbf_beta),      n(noise_variance)};
  }

  bool empty() const {
    return family.empty() && activation.empty() && depth.empty() && weight_variance.empty() &&
           bias_variance.empty() && readout.empty() && kernel_scale.empty() && rbf_gamma.empty() &&
           rbf_beta.empty() && noise_variance.empty();
  }

  std::size_t size() const {
    std::size_t total = 1;
    for (auto s : axis_sizes()) total *= s;
    return total;
  }

  /// Consecutive cells sharing everything but the noise variance.
  std::size_t noise_block() const { return std::max<std::size_t>(1, noise_variance.size()); }

  Hyperparameters cell(std::size_t index, const Hyperparameters& base) const {
    detail::require(index < size(), "grid: cell index out of range");
    const auto sizes = axis_sizes();
    std::vector<std::size_t> pos(sizes.size());
    for (std::size_t a = sizes.size(); a-- > 0;) {
      pos[a] = index % sizes[a];
      index /= sizes[a];
    }
    Hyperparameters h = base;
    auto pick = [&](const auto& axis, std::size_t a, auto& field) {
      if (!axis.empty()) field = axis[pos[a]];
    };
    pick(family, 0, h.kernel.family);
    pick(activation, 1, h.kernel.activation);
    pick(depth, 2, h.kernel.depth);
    pick(weight_variance, 3, h.kernel.weight_variance);
    pick(bias_variance, 4, h.kernel.bias_variance);
    if (!readout.empty()) {
      const auto& r = readout[pos[5]];
      if (r.body) {
        h.kernel.readout_same_as_body();
      } else {
        h.kernel.readout_weight_variance = r.weight_variance;
        h.kernel.readout_bias_variance = r.bias_variance;
      }
    }
    pick(kernel_scale, 6, h.kernel.kernel_scale);
    pick(rbf_gamma, 7, h.kernel.rbf_gamma);
    pick(rbf_beta, 8, h.kernel.rbf_beta);
    pick(noise_variance, 9, h.noise_variance);
    return h;
  }
};

/// n values log-spaced over [10^lo, 10^hi], endpoints included.
inline std::vector<double> logspace(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = std::pow(10.0, lo + (hi - lo) * k / (n - 1));
  return out;
}

/// Observation-noise candidates: σ_ε over logspace(−6, 4, 20), stored as σ_ε².
inline std::vector<double> preset_noise_variances() {
  auto v = logspace(-6.0, 4.0, 20);
  for (double& s : v) s *= s;
  return v;
}

/// Fully connected NNGP regression grid: 2·3·3·3·2·20 = 2160 cells.
inline GridSpec nngp_regression_preset() {
  GridSpec g;
  g.family = {KernelFamily::NNGP};
  g.activation = {Activation::ReLU, Activation::Erf};
  g.depth = {1, 4, 16};
  g.weight_variance = {1.0, 2.0, 4.0};
  g.bias_variance = {0.0, 0.09, 1.0};
  g.readout = {Readout{}, Readout{false, 1.0, 0.0}};
  g.noise_variance = preset_noise_variances();
  return g;
}

/// RBF grid: γ ∈ 10^{−5..3}, β ∈ 10^{−3..3}, with the same noise axis.
inline GridSpec rbf_preset() {
  GridSpec g;
  g.family = {KernelFamily::RBF};
  g.rbf_gamma = logspace(-5.0, 3.0, 9);
  g.rbf_beta = logspace(-3.0, 3.0, 7);
  g.noise_variance = preset_noise_variances();
  return g;
}

struct CellOutcome {
  double value = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty on success

  bool ok() const { return error.empty() && std::isfinite(value); }
};

struct CellResult {
  std::size_t index = 0;
  Hyperparameters hyper;
  CellOutcome outcome;
};

struct GridSearchResult {
  std::vector<CellResult> cells;
  std::size_t best = 0;
  Hyperparameters best_hyper;
  std::size_t n_failed = 0;
};

/// Scores a block of cells that share one kernel configuration (they differ
/// only in noise variance). Must return one outcome per cell; an exception
/// marks the whole block failed.
using BlockEvaluator = std::function<std::vector<CellOutcome>(std::span<const Hyperparameters>)>;

inline GridSearchResult grid_search(const GridSpec& grid, const Hyperparameters& base,
                                    const BlockEvaluator& evaluate, std::size_t workers = 1) {
  const std::size_t n = grid.size();
  const std::size_t block = grid.noise_block();
  GridSearchResult out;
  out.cells.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.cells[i] = {i, grid.cell(i, base), {}};

  parallel_for(n / block, workers, [&](std::size_t b) {
    std::vector<Hyperparameters> hs;
    for (std::size_t i = b * block; i < (b + 1) * block; ++i) hs.push_back(out.cells[i].hyper);
    std::vector<CellOutcome> res;
    try {
      hs.front().kernel.validate();
      res = evaluate(hs);
      detail::require_dims(res.size() == hs.size(), "grid: evaluator returned wrong number of outcomes");
    } catch (const std::exception& e) {
      res.assign(hs.size(), CellOutcome{std::numeric_limits<double>::quiet_NaN(), e.what()});
    }
    for (std::size_t k = 0; k < block; ++k) {
      auto& o = res[k];
      if (o.error.empty() && !std::isfinite(o.value)) o.error = "non-finite validation metric";
      out.cells[b * block + k].outcome = std::move(o);
    }
  });

  bool found = false;
  const bool up = higher_is_better(grid.metric);
  for (const auto& c : out.cells) {
    if (!c.outcome.ok()) {
      ++out.n_failed;
      continue;
    }
    const double v = c.outcome.value;
    const double cur = out.cells[out.best].outcome.value;
    if (!found || (up ? v > cur : v < cur)) {
      out.best = c.index;
      found = true;
    }
  }
  if (!found)
    throw Error("grid search: all " + std::to_string(n) + " cells failed; first error: " +
                out.cells.front().outcome.error);
  out.best_hyper = out.cells[out.best].hyper;
  return out;
}

}  // namespace nkgp::harness
