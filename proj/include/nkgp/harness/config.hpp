#pragma once

// Experiment description and its flat key=value text form.
//
//   # comment
//   kernel.depth = 4
//   grid.preset = nngp
//   grid.noise_variance = 0.01, 0.1
//
// Unknown keys are errors. `grid.preset` is applied before any explicit
// `grid.*` axis regardless of where it appears.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nkgp/gp_classification.hpp"
#include "nkgp/gp_regression.hpp"
#include "nkgp/harness/corruption.hpp"
#include "nkgp/harness/dataset.hpp"
#include "nkgp/harness/grid.hpp"
#include "nkgp/heuristics.hpp"
#include "nkgp/kernels.hpp"

namespace nkgp::harness {

enum class ModelKind { Gpr, Gpc };

inline std::string to_string(ModelKind m) { return m == ModelKind::Gpr ? "gpr" : "gpc"; }

struct ExperimentConfig {
  std::string name = "experiment";
  TaskKind task = TaskKind::Classification;
  ModelKind model = ModelKind::Gpr;

  // Master seed; split, corruption and sampler streams derive from it unless
  // set explicitly.
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::uint64_t> corruption_seed;
  std::optional<std::uint64_t> sampler_seed;

  int folds = 1;
  SplitRatios ratios;
  bool standardize = true;
  int n_targets = 1;
  std::vector<CorruptionKind> corruptions;
  std::vector<int> intensities{1, 2, 3, 4, 5};

  Hyperparameters hyper;
  NtkDynamics ntk;  // used when hyper.kernel.family is NTK
  EssConfig ess;    // ess.seed is replaced by the sampler stream
  int n_inner = 4;
  HeuristicConfig heuristic;  // heuristic.seed is replaced by the sampler stream
  bool fit_temperature = false;
  GridSpec grid;

  bool operator==(const ExperimentConfig&) const = default;

  std::uint64_t effective_split_seed() const { return split_seed.value_or(derive_seed(seed, "split")); }
  std::uint64_t effective_corruption_seed() const {
    return corruption_seed.value_or(derive_seed(seed, "corruption"));
  }
  std::uint64_t effective_sampler_seed() const { return sampler_seed.value_or(derive_seed(seed, "sampler")); }

  void validate() const {
    detail::require(folds >= 1, "config: experiment.folds must be >= 1");
    detail::require(n_targets >= 1, "config: experiment.n_targets must be >= 1");
    detail::require(model == ModelKind::Gpr || task == TaskKind::Classification,
                    "config: gpc model needs a classification task");
    for (int i : intensities) detail::require(i >= 1 && i <= 5, "config: intensities must be in 1..5");
    detail::require(n_inner >= 1, "config: gpc.n_inner must be >= 1");
    detail::require(std::isfinite(hyper.noise_variance) && hyper.noise_variance >= 0.0,
                    "config: gpr.noise_variance must be >= 0");
    hyper.kernel.validate();
    ess.validate();
    heuristic.validate();
    detail::require(ntk.learning_rate > 0.0 && ntk.time >= 0.0, "config: bad ntk dynamics");
  }
};

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline KernelFamily parse_family(std::string_view s) {
  for (auto f : {KernelFamily::NNGP, KernelFamily::NTK, KernelFamily::RBF})
    if (to_string(f) == s) return f;
  throw ParseError("unknown kernel family '" + std::string(s) + "'");
}

inline Activation parse_activation(std::string_view s) {
  for (auto a : {Activation::ReLU, Activation::Erf})
    if (to_string(a) == s) return a;
  throw ParseError("unknown activation '" + std::string(s) + "'");
}

inline HeuristicKind parse_heuristic(std::string_view s) {
  for (auto k : {HeuristicKind::Exact, HeuristicKind::Pairwise, HeuristicKind::Softmax})
    if (to_string(k) == s) return k;
  throw ParseError("unknown heuristic '" + std::string(s) + "'");
}

inline SelectionMetric parse_metric(std::string_view s) {
  for (auto m : {SelectionMetric::Nll, SelectionMetric::Accuracy, SelectionMetric::Rmse})
    if (to_string(m) == s) return m;
  throw ParseError("unknown selection metric '" + std::string(s) + "'");
}

inline ModelKind parse_model(std::string_view s) {
  if (s == "gpr") return ModelKind::Gpr;
  if (s == "gpc") return ModelKind::Gpc;
  throw ParseError("unknown model '" + std::string(s) + "' (expected gpr|gpc)");
}

inline std::string to_string(const Readout& r) {
  return r.body ? "body" : format_double(r.weight_variance) + ":" + format_double(r.bias_variance);
}

namespace detail {

inline double parse_real(std::string_view s, const std::string& key) {
  double v;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (!parse_double(s, v)) throw ParseError("config: " + key + ": cannot parse real '" + std::string(s) + "'");
  return v;
}

inline long long parse_integer(std::string_view s, const std::string& key) {
  long long v;
  if (!parse_int(s, v)) throw ParseError("config: " + key + ": cannot parse integer '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_u64(std::string_view s, const std::string& key) {
  std::uint64_t v;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError("config: " + key + ": cannot parse seed '" + std::string(s) + "'");
  return v;
}

inline bool parse_bool(std::string_view s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ParseError("config: " + key + ": expected true|false, got '" + std::string(s) + "'");
}

template <typename F>
auto parse_list(std::string_view s, F&& one) {
  std::vector<decltype(one(std::string_view{}))> out;
  if (trim(s).empty()) return out;
  for (auto f : split_fields(s)) out.push_back(one(f));
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + fmt(xs[i]);
  return out;
}

inline Readout parse_readout(std::string_view s, const std::string& key) {
  if (s == "body") return {};
  const auto colon = s.find(':');
  if (colon == std::string_view::npos)
    throw ParseError("config: " + key + ": readout must be 'body' or '<w>:<b>', got '" + std::string(s) + "'");
  return {false, parse_real(s.substr(0, colon), key), parse_real(s.substr(colon + 1), key)};
}

}  // namespace detail

/// Applies one key=value pair to `c`.
inline void apply_setting(ExperimentConfig& c, const std::string& key, std::string_view v) {
  using namespace detail;
  auto real = [&](std::string_view s) { return parse_real(s, key); };
  auto integer = [&](std::string_view s) { return static_cast<int>(parse_integer(s, key)); };
  auto seed = [&](std::string_view s) -> std::optional<std::uint64_t> {
    if (s == "auto" || s.empty()) return std::nullopt;
    return parse_u64(s, key);
  };
  auto& k = c.hyper.kernel;
  auto& g = c.grid;

  if (key == "experiment.name") c.name = std::string(v);
  else if (key == "experiment.task") c.task = parse_task(v);
  else if (key == "experiment.model") c.model = parse_model(v);
  else if (key == "experiment.seed") c.seed = parse_u64(v, key);
  else if (key == "experiment.split_seed") c.split_seed = seed(v);
  else if (key == "experiment.corruption_seed") c.corruption_seed = seed(v);
  else if (key == "experiment.sampler_seed") c.sampler_seed = seed(v);
  else if (key == "experiment.folds") c.folds = integer(v);
  else if (key == "experiment.ratios") {
    const auto r = parse_list(v, real);
    if (r.size() != 3) throw ParseError("config: experiment.ratios needs three values");
    c.ratios = {r[0], r[1], r[2]};
  } else if (key == "experiment.standardize") c.standardize = parse_bool(v, key);
  else if (key == "experiment.n_targets") c.n_targets = integer(v);
  else if (key == "experiment.corruptions") {
    if (v == "all")
      c.corruptions.assign(kAllCorruptions.begin(), kAllCorruptions.end());
    else if (v == "none")
      c.corruptions.clear();
    else
      c.corruptions = parse_list(v, [](std::string_view s) { return parse_corruption(s); });
  } else if (key == "experiment.intensities") c.intensities = parse_list(v, integer);
  else if (key == "kernel.family") k.family = parse_family(v);
  else if (key == "kernel.activation") k.activation = parse_activation(v);
  else if (key == "kernel.depth") k.depth = integer(v);
  else if (key == "kernel.weight_variance") k.weight_variance = real(v);
  else if (key == "kernel.bias_variance") k.bias_variance = real(v);
  else if (key == "kernel.readout_weight_variance") k.readout_weight_variance = real(v);
  else if (key == "kernel.readout_bias_variance") k.readout_bias_variance = real(v);
  else if (key == "kernel.kernel_scale") k.kernel_scale = real(v);
  else if (key == "kernel.diagonal_regularizer") k.diagonal_regularizer = real(v);
  else if (key == "kernel.rbf_beta") k.rbf_beta = real(v);
  else if (key == "kernel.rbf_gamma") k.rbf_gamma = real(v);
  else if (key == "gpr.noise_variance") c.hyper.noise_variance = real(v);
  else if (key == "ntk.learning_rate") c.ntk.learning_rate = real(v);
  else if (key == "ntk.time") c.ntk.time = real(v);
  else if (key == "ess.n_chains") c.ess.n_chains = integer(v);
  else if (key == "ess.burn_in") c.ess.burn_in = integer(v);
  else if (key == "ess.n_samples") c.ess.n_samples = integer(v);
  else if (key == "ess.thinning") c.ess.thinning = integer(v);
  else if (key == "gpc.n_inner") c.n_inner = integer(v);
  else if (key == "heuristic.kind") c.heuristic.kind = parse_heuristic(v);
  else if (key == "heuristic.temperature") {
    c.fit_temperature = v == "fit";
    if (!c.fit_temperature) c.heuristic.temperature = real(v);
  } else if (key == "heuristic.n_mc") c.heuristic.n_mc = integer(v);
  else if (key == "heuristic.softmax_sqrt_temperature") c.heuristic.softmax_sqrt_temperature = parse_bool(v, key);
  else if (key == "grid.preset") {
    const auto metric = g.metric;
    if (v == "nngp") g = nngp_regression_preset();
    else if (v == "rbf") g = rbf_preset();
    else if (v == "none") g = {};
    else throw ParseError("config: grid.preset must be nngp|rbf|none, got '" + std::string(v) + "'");
    g.metric = metric;
  } else if (key == "grid.metric") g.metric = parse_metric(v);
  else if (key == "grid.family") g.family = parse_list(v, [](std::string_view s) { return parse_family(s); });
  else if (key == "grid.activation") g.activation = parse_list(v, [](std::string_view s) { return parse_activation(s); });
  else if (key == "grid.depth") g.depth = parse_list(v, integer);
  else if (key == "grid.weight_variance") g.weight_variance = parse_list(v, real);
  else if (key == "grid.bias_variance") g.bias_variance = parse_list(v, real);
  else if (key == "grid.readout") g.readout = parse_list(v, [&](std::string_view s) { return parse_readout(s, key); });
  else if (key == "grid.kernel_scale") g.kernel_scale = parse_list(v, real);
  else if (key == "grid.rbf_gamma") g.rbf_gamma = parse_list(v, real);
  else if (key == "grid.rbf_beta") g.rbf_beta = parse_list(v, real);
  else if (key == "grid.noise_variance") g.noise_variance = parse_list(v, real);
  else throw ParseError("config: unknown key '" + key + "'");
}

/// Parses key=value lines on top of `base`. Blank lines and lines starting
/// with '#' are ignored.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {}) {
  std::vector<std::pair<std::string, std::string>> settings;
  std::string line;
  std::size_t row = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++row;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("config line " + std::to_string(row) + ": expected key=value");
    std::string key(detail::trim(text.substr(0, eq)));
    if (auto [it, fresh] = seen.emplace(key, row); !fresh)
      throw ParseError("config line " + std::to_string(row) + ": duplicate key '" + key + "' (first on line " +
                       std::to_string(it->second) + ")");
    settings.emplace_back(std::move(key), std::string(detail::trim(text.substr(eq + 1))));
  }
  std::stable_partition(settings.begin(), settings.end(), [](const auto& kv) { return kv.first == "grid.preset"; });
  for (const auto& [key, value] : settings) {
    try {
      apply_setting(base, key, value);
    } catch (const Error& e) {
      throw ParseError("config line " + std::to_string(seen[key]) + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

inline ExperimentConfig parse_config_string(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream in(text);
  return parse_config(in, std::move(base));
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  return parse_config(in, std::move(base));
}

/// Every key with its current value, in a fixed order. Parsing the formatted
/// text reproduces the configuration.
inline std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
  using detail::join;
  auto seed = [](const std::optional<std::uint64_t>& s) { return s ? std::to_string(*s) : std::string("auto"); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  auto reals = [](const std::vector<double>& xs) { return join(xs, format_double); };
  const auto& k = c.hyper.kernel;
  const auto& g = c.grid;
  auto name_of = [](auto x) { return to_string(x); };
  return {
      {"experiment.name", c.name},
      {"experiment.task", to_string(c.task)},
      {"experiment.model", to_string(c.model)},
      {"experiment.seed", std::to_string(c.seed)},
      {"experiment.split_seed", seed(c.split_seed)},
      {"experiment.corruption_seed", seed(c.corruption_seed)},
      {"experiment.sampler_seed", seed(c.sampler_seed)},
      {"experiment.folds", std::to_string(c.folds)},
      {"experiment.ratios", reals({c.ratios.train, c.ratios.valid, c.ratios.test})},
      {"experiment.standardize", b(c.standardize)},
      {"experiment.n_targets", std::to_string(c.n_targets)},
      {"experiment.corruptions", c.corruptions.empty() ? std::string("none") : join(c.corruptions, name_of)},
      {"experiment.intensities", join(c.intensities, [](int i) { return std::to_string(i); })},
      {"kernel.family", to_string(k.family)},
      {"kernel.activation", to_string(k.activation)},
      {"kernel.depth", std::to_string(k.depth)},
      {"kernel.weight_variance", format_double(k.weight_variance)},
      {"kernel.bias_variance", format_double(k.bias_variance)},
      {"kernel.readout_weight_variance", format_double(k.readout_weight_variance)},
      {"kernel.readout_bias_variance", format_double(k.readout_bias_variance)},
      {"kernel.kernel_scale", format_double(k.kernel_scale)},
      {"kernel.diagonal_regularizer", format_double(k.diagonal_regularizer)},
      {"kernel.rbf_beta", format_double(k.rbf_beta)},
      {"kernel.rbf_gamma", format_double(k.rbf_gamma)},
      {"gpr.noise_variance", format_double(c.hyper.noise_variance)},
      {"ntk.learning_rate", format_double(c.ntk.learning_rate)},
      {"ntk.time", format_double(c.ntk.time)},
      {"ess.n_chains", std::to_string(c.ess.n_chains)},
      {"ess.burn_in", std::to_string(c.ess.burn_in)},
      {"ess.n_samples", std::to_string(c.ess.n_samples)},
      {"ess.thinning", std::to_string(c.ess.thinning)},
      {"gpc.n_inner", std::to_string(c.n_inner)},
      {"heuristic.kind", to_string(c.heuristic.kind)},
      {"heuristic.temperature", c.fit_temperature ? std::string("fit") : format_double(c.heuristic.temperature)},
      {"heuristic.n_mc", std::to_string(c.heuristic.n_mc)},
      {"heuristic.softmax_sqrt_temperature", b(c.heuristic.softmax_sqrt_temperature)},
      {"grid.metric", to_string(g.metric)},
      {"grid.family", join(g.family, name_of)},
      {"grid.activation", join(g.activation, name_of)},
      {"grid.depth", join(g.depth, [](int d) { return std::to_string(d); })},
      {"grid.weight_variance", reals(g.weight_variance)},
      {"grid.bias_variance", reals(g.bias_variance)},
      {"grid.readout", join(g.readout, [](const Readout& r) { return to_string(r); })},
      {"grid.kernel_scale", reals(g.kernel_scale)},
      {"grid.rbf_gamma", reals(g.rbf_gamma)},
      {"grid.rbf_beta", reals(g.rbf_beta)},
      {"grid.noise_variance", reals(g.noise_variance)},
  };
}

inline std::string format_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_entries(c)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace nkgp::harness
