#pragma once

// End-to-end runs: split → (grid search) → fit → predict on the clean test
// split and every (corruption, intensity) pair → metrics → files.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nkgp/calibration.hpp"
#include "nkgp/gp_classification.hpp"
#include "nkgp/gp_regression.hpp"
#include "nkgp/harness/config.hpp"
#include "nkgp/harness/corruption.hpp"
#include "nkgp/harness/dataset.hpp"
#include "nkgp/harness/grid.hpp"
#include "nkgp/harness/run_record.hpp"
#include "nkgp/heuristics.hpp"
#include "nkgp/kernels.hpp"
#include "nkgp/parallel.hpp"

namespace nkgp::harness {

/// Regression targets as stored, or one-hot labels centred by 1/C.
inline Eigen::MatrixXd training_targets(const Dataset& d) {
  if (d.task == TaskKind::Regression) return d.targets;
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(d.size(), d.n_classes, -1.0 / d.n_classes);
  for (Eigen::Index i = 0; i < d.size(); ++i) y(i, d.labels[static_cast<std::size_t>(i)]) += 1.0;
  return y;
}

struct PredictDiagnostics {
  double jitter = 0.0;
  std::size_t n_clamped = 0;
};

/// GP regression fitted once on a training set, predicting any inputs. For
/// the NTK family predictions follow the gradient-flow dynamics instead.
class GprPredictor {
 public:
  GprPredictor(const Hyperparameters& h, const NtkDynamics& ntk, const Eigen::MatrixXd& x_train,
               const Eigen::MatrixXd& y_train)
      : hyper_(h), ntk_(ntk), x_train_(x_train), y_train_(y_train) {
    h.kernel.validate();
    if (h.kernel.family == KernelFamily::NTK) {
      train_ = ntk_matrix(x_train, h.kernel);
      diag_.jitter = cholesky_with_jitter(train_->ntk.values).jitter;
    } else {
      model_ = gpr::fit(gram(x_train, h.kernel), y_train, h.noise_variance);
      diag_.jitter = model_->jitter;
    }
  }

  std::vector<GaussianPosterior> predict(const Eigen::MatrixXd& x, PredictDiagnostics* d = nullptr) const {
    if (d) d->jitter = std::max(d->jitter, diag_.jitter);
    if (train_) {
      const auto cross = ntk_matrix(x, x_train_, hyper_.kernel);
      const auto test = ntk_matrix(x, hyper_.kernel);
      return gpr::ntk_predict({train_->nngp, cross.nngp, test.nngp, train_->ntk, cross.ntk}, y_train_, ntk_)
          .posteriors;
    }
    return gpr::predict(*model_, gram(x, x_train_, hyper_.kernel), gram_diagonal(x, hyper_.kernel),
                        d ? &d->n_clamped : nullptr);
  }

  double noise_variance() const { return hyper_.noise_variance; }

 private:
  Hyperparameters hyper_;
  NtkDynamics ntk_;
  Eigen::MatrixXd x_train_, y_train_;
  std::optional<GprModel> model_;
  std::optional<NtkPair> train_;
  PredictDiagnostics diag_;
};

/// RMSE and Gaussian NLL in original target units (targets are un-standardized
/// with the statistics stored on `eval`).
inline std::map<std::string, double> regression_metrics(const std::vector<GaussianPosterior>& posts,
                                                        const Dataset& eval, double noise_variance) {
  const Eigen::Index n = eval.size(), m = eval.targets.cols();
  Eigen::MatrixXd mean(n, m);
  for (Eigen::Index i = 0; i < n; ++i) mean.row(i) = posts[static_cast<std::size_t>(i)].mean.transpose();
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(m);
  Eigen::MatrixXd y = eval.targets;
  if (!eval.target_stats.empty()) {
    mean = eval.target_stats.invert(mean);
    y = eval.target_stats.invert(y);
    for (Eigen::Index j = 0; j < m; ++j) scale(j) = eval.target_stats.scale(j) > 0 ? eval.target_stats.scale(j) : 1.0;
  }
  double nll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double var = (posts[static_cast<std::size_t>(i)].variance + noise_variance) * scale(j) * scale(j);
      if (!(var > 0.0)) throw DomainError("regression metrics: zero predictive variance");
      const double r = y(i, j) - mean(i, j);
      nll += 0.5 * std::log(2.0 * std::numbers::pi * var) + r * r / (2.0 * var);
    }
  }
  return {{"rmse", std::sqrt((y - mean).squaredNorm() / static_cast<double>(n * m))},
          {"gaussian_nll", nll / static_cast<double>(n)}};
}

inline std::map<std::string, double> calibration_metrics(const CalibrationReport& r) {
  return {{"ece", r.ece},
          {"brier", r.brier},
          {"nll_sum", r.nll_sum},
          {"nll_mean", r.nll_mean},
          {"entropy_mean", r.entropy_mean},
          {"confidence_mean", r.confidence_mean},
          {"accuracy", r.accuracy}};
}

/// Posterior samples for GP classification plus the kernel that produced them.
struct GpcModel {
  Hyperparameters hyper;
  Eigen::MatrixXd x_train;
  PosteriorSamples samples;
  int n_inner = 4;

  std::vector<CategoricalPrediction> predict(const Eigen::MatrixXd& x, std::uint64_t seed) const {
    Rng rng(seed);
    return gpc::predict(samples.states, gram(x, x_train, hyper.kernel), gram_diagonal(x, hyper.kernel),
                        samples.prior_cholesky, n_inner, rng);
  }
};

inline GpcModel fit_gpc(const Hyperparameters& h, const Dataset& train, EssConfig ess, int n_inner,
                        std::uint64_t seed, std::size_t workers) {
  ess.seed = seed;
  GpcModel m{h, train.features, {}, n_inner};
  m.samples = gpc::sample_posterior(gram(train.features, h.kernel), train.labels, train.n_classes, ess, workers);
  detail::require_dims(!m.samples.states.empty(), "gpc: ess.n_samples must be >= 1 to predict");
  return m;
}

namespace detail {

inline double selection_value(SelectionMetric metric, const std::vector<CategoricalPrediction>& preds,
                              std::span<const int> labels) {
  switch (metric) {
    case SelectionMetric::Nll: return categorical_nll(preds, labels).mean;
    case SelectionMetric::Accuracy: return accuracy(preds, labels);
    case SelectionMetric::Rmse: break;
  }
  throw DomainError("grid: rmse selection needs a regression task");
}

}  // namespace detail

/// Scores grid blocks on the validation split. Only `train` and `valid` are
/// visible to the returned evaluator.
inline BlockEvaluator validation_evaluator(const ExperimentConfig& cfg, const Dataset& train, const Dataset& valid,
                                           std::uint64_t sampler_seed) {
  return [&cfg, &train, &valid, sampler_seed](std::span<const Hyperparameters> hs) {
    std::vector<CellOutcome> out(hs.size());
    const auto metric = cfg.grid.metric;
    if (cfg.model == ModelKind::Gpc) {
      const auto model = fit_gpc(hs.front(), train, cfg.ess, cfg.n_inner, derive_seed(sampler_seed, "grid"), 1);
      const double v = detail::selection_value(metric, model.predict(valid.features, derive_seed(sampler_seed, "grid-predict")),
                                               valid.labels);
      for (auto& o : out) o.value = v;
      return out;
    }
    const Eigen::MatrixXd y = training_targets(train);
    HeuristicConfig heuristic = cfg.heuristic;
    heuristic.seed = derive_seed(sampler_seed, "heuristic");
    if (cfg.fit_temperature) heuristic.temperature = 1.0;

    // Kernel blocks are shared by every noise level in the block.
    const KernelConfig& kc = hs.front().kernel;
    std::optional<NtkKernelBlocks> ntk;
    KernelMatrix k_train, k_cross;
    Eigen::VectorXd k_diag;
    if (kc.family == KernelFamily::NTK) {
      const auto tr = ntk_matrix(train.features, kc);
      const auto cr = ntk_matrix(valid.features, train.features, kc);
      ntk = NtkKernelBlocks{tr.nngp, cr.nngp, ntk_matrix(valid.features, kc).nngp, tr.ntk, cr.ntk};
    } else {
      k_train = gram(train.features, kc);
      k_cross = gram(valid.features, train.features, kc);
      k_diag = gram_diagonal(valid.features, kc);
    }
    std::optional<std::vector<GaussianPosterior>> ntk_posts;
    for (std::size_t k = 0; k < hs.size(); ++k) {
      try {
        std::vector<GaussianPosterior> posts;
        if (ntk) {
          if (!ntk_posts) ntk_posts = gpr::ntk_predict(*ntk, y, cfg.ntk).posteriors;
          posts = *ntk_posts;
        } else {
          posts = gpr::predict(gpr::fit(k_train, y, hs[k].noise_variance), k_cross, k_diag);
        }
        if (cfg.task == TaskKind::Regression) {
          if (metric == SelectionMetric::Accuracy) throw DomainError("grid: accuracy selection needs classification");
          out[k].value = metric == SelectionMetric::Nll
                             ? gpr::gaussian_nll(posts, valid.targets, hs[k].noise_variance)
                             : regression_metrics(posts, valid, 0.0).at("rmse");
        } else {
          out[k].value = detail::selection_value(metric, heuristic_confidences(posts, heuristic), valid.labels);
        }
      } catch (const std::exception& e) {
        out[k].error = e.what();
      }
    }
    return out;
  };
}

/// Key=value snapshot of just the fitted hyperparameters.
inline std::vector<std::pair<std::string, std::string>> hyper_entries(const ExperimentConfig& cfg,
                                                                      const Hyperparameters& h) {
  ExperimentConfig c = cfg;
  c.hyper = h;
  std::vector<std::pair<std::string, std::string>> out;
  for (auto& kv : config_entries(c))
    if (kv.first.starts_with("kernel.") || kv.first == "gpr.noise_variance") out.push_back(std::move(kv));
  return out;
}

struct SplitForFold {
  SplitData parts;
  std::uint64_t split_seed, corruption_seed, sampler_seed;
};

inline SplitForFold prepare_fold(const ExperimentConfig& cfg, const Dataset& data, int fold) {
  auto stream = [&](std::uint64_t s) { return cfg.folds == 1 ? s : derive_seed(s, static_cast<std::uint64_t>(fold)); };
  SplitForFold f{{}, stream(cfg.effective_split_seed()), stream(cfg.effective_corruption_seed()),
                 stream(cfg.effective_sampler_seed())};
  f.parts = split(data, f.split_seed, cfg.ratios);
  if (cfg.standardize) standardize(f.parts);
  return f;
}

inline std::vector<RunRecord> cell_records(const GridSearchResult& gs, const ExperimentConfig& cfg,
                                           std::uint64_t split_seed) {
  std::vector<RunRecord> out;
  for (const auto& c : gs.cells) {
    RunRecord r;
    r.kind = "grid_cell";
    r.name = cfg.name + "/cell" + std::to_string(c.index);
    r.config = hyper_entries(cfg, c.hyper);
    r.split_seed = split_seed;
    if (c.outcome.ok())
      r.metrics["validation_" + to_string(cfg.grid.metric)] = c.outcome.value;
    else
      r.error = RunError{"grid_search", c.outcome.error};
    out.push_back(std::move(r));
  }
  return out;
}

/// Grid search on the first fold's train/valid split.
inline GridSearchResult tune(const ExperimentConfig& cfg, const Dataset& data, std::size_t workers = 1) {
  cfg.validate();
  detail::require(!cfg.grid.empty(), "tune: the configuration defines no grid");
  const auto f = prepare_fold(cfg, data, 0);
  return grid_search(cfg.grid, cfg.hyper, validation_evaluator(cfg, f.parts.train, f.parts.valid, f.sampler_seed),
                     workers);
}

struct ExperimentOptions {
  std::string out_dir;  // empty: no files
  std::size_t workers = 1;
};

inline std::vector<QuartileRow> shift_quartiles(const std::vector<Evaluation>& evals) {
  std::map<std::string, std::map<std::string, std::vector<double>>> by_metric;
  for (const auto& e : evals) {
    if (e.clean()) continue;
    for (const auto& [k, v] : e.metrics) {
      by_metric[k][e.corruption].push_back(v);
      by_metric[k]["all"].push_back(v);
    }
  }
  std::vector<QuartileRow> out;
  for (const auto& [metric, groups] : by_metric)
    for (const auto& [corruption, values] : groups) out.push_back({metric, corruption, quartile_summary(values)});
  return out;
}

inline std::map<std::string, MetricSummary> fold_summaries(const std::vector<Evaluation>& evals) {
  std::map<std::string, MetricSummary> out;
  for (const auto& e : evals)
    if (e.clean())
      for (const auto& [k, v] : e.metrics) out[k].values.push_back(v);
  for (auto& [k, s] : out) {
    const auto n = static_cast<double>(s.values.size());
    double sum = 0.0;
    for (double v : s.values) sum += v;
    s.mean = sum / n;
    double ss = 0.0;
    for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
    s.standard_error = s.values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  }
  return out;
}

inline void write_metrics_csv(const RunRecord& r, const std::string& path) {
  std::set<std::string> names;
  for (const auto& e : r.evaluations)
    for (const auto& [k, v] : e.metrics) names.insert(k);
  std::ofstream out(path);
  out << "fold,corruption,intensity";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& e : r.evaluations) {
    out << e.fold << ',' << e.corruption << ',' << e.intensity;
    for (const auto& n : names) {
      out << ',';
      if (auto it = e.metrics.find(n); it != e.metrics.end()) out << format_double(it->second);
    }
    out << '\n';
  }
}

inline void write_summary_csv(const RunRecord& r, const std::string& path) {
  std::ofstream out(path);
  out << "metric,mean,standard_error,n_folds\n";
  for (const auto& [k, s] : r.fold_summary)
    out << k << ',' << format_double(s.mean) << ',' << format_double(s.standard_error) << ',' << s.values.size()
        << '\n';
}

inline void write_reliability_csv(const RunRecord& r, const std::string& path) {
  std::ofstream out(path);
  out << "fold,corruption,intensity,bin,confidence_lower,confidence_upper,count,mean_confidence,mean_accuracy\n";
  for (const auto& e : r.evaluations)
    for (std::size_t b = 0; b < e.reliability_bins.size(); ++b) {
      const auto& x = e.reliability_bins[b];
      out << e.fold << ',' << e.corruption << ',' << e.intensity << ',' << b << ','
          << format_double(x.confidence_lower) << ',' << format_double(x.confidence_upper) << ',' << x.count << ','
          << format_double(x.mean_confidence) << ',' << format_double(x.mean_accuracy) << '\n';
    }
}

inline void write_quartiles_csv(const RunRecord& r, const std::string& path) {
  std::ofstream out(path);
  out << "metric,corruption,q25,q50,q75\n";
  for (const auto& q : r.quartiles)
    out << q.metric << ',' << q.corruption << ',' << format_double(q.quartiles.q25) << ','
        << format_double(q.quartiles.q50) << ',' << format_double(q.quartiles.q75) << '\n';
}

/// Writes results.json and the CSV tables into `dir`, recording their paths.
inline void write_artifacts(RunRecord& r, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto path = [&](const char* f) { return (fs::path(dir) / f).string(); };
  r.artifact_paths = {{"results", path("results.json")},
                      {"metrics", path("metrics.csv")},
                      {"summary", path("summary.csv")},
                      {"reliability_bins", path("reliability_bins.csv")},
                      {"quartiles", path("quartiles.csv")}};
  write_metrics_csv(r, r.artifact_paths["metrics"]);
  write_summary_csv(r, r.artifact_paths["summary"]);
  write_reliability_csv(r, r.artifact_paths["reliability_bins"]);
  write_quartiles_csv(r, r.artifact_paths["quartiles"]);
  std::ofstream(r.artifact_paths["results"]) << serialize(r) << '\n';
}

/// Runs the configured experiment. Failures do not throw: the record carries
/// the failing stage and message, and is still written when `out_dir` is set.
inline RunRecord run_experiment(const ExperimentConfig& cfg, const Dataset& data, const ExperimentOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord r;
  r.name = cfg.name;
  r.config = config_entries(cfg);
  r.split_seed = cfg.effective_split_seed();
  r.corruption_seed = cfg.effective_corruption_seed();
  r.sampler_seed = cfg.effective_sampler_seed();

  std::string stage = "validate";
  try {
    cfg.validate();
    data.validate();
    detail::require(data.task == cfg.task, "dataset task " + to_string(data.task) + " does not match config task " +
                                               to_string(cfg.task));
    std::size_t grid_cells = 0, grid_failed = 0, clamped = 0;
    double jitter = 0.0;

    for (int fold = 0; fold < cfg.folds; ++fold) {
      const std::string tag = "fold" + std::to_string(fold) + ".";
      stage = "split";
      const auto f = prepare_fold(cfg, data, fold);
      const auto& [train, valid, test] = f.parts;

      Hyperparameters hyper = cfg.hyper;
      if (!cfg.grid.empty()) {
        stage = "grid_search";
        const auto gs = grid_search(cfg.grid, cfg.hyper, validation_evaluator(cfg, train, valid, f.sampler_seed),
                                    opt.workers);
        hyper = gs.best_hyper;
        grid_cells += gs.cells.size();
        grid_failed += gs.n_failed;
      }
      for (auto& [k, v] : hyper_entries(cfg, hyper)) r.selected.emplace_back(tag + k, v);

      stage = "corrupt";
      struct EvalSet {
        std::string corruption;
        int intensity;
        Dataset data;
      };
      std::vector<EvalSet> sets{{"clean", 0, test}};
      for (auto kind : cfg.corruptions)
        for (int i : cfg.intensities)
          sets.push_back({to_string(kind), i,
                          corrupt(test, kind, i, derive_seed(f.corruption_seed, static_cast<std::uint64_t>(kind) * 16 + i))});

      stage = "fit";
      std::optional<GprPredictor> gpr_model;
      std::optional<GpcModel> gpc_model;
      HeuristicConfig heuristic = cfg.heuristic;
      heuristic.seed = derive_seed(f.sampler_seed, "heuristic");
      if (cfg.model == ModelKind::Gpr) {
        gpr_model.emplace(hyper, cfg.ntk, train.features, training_targets(train));
        if (cfg.task == TaskKind::Classification && cfg.fit_temperature) {
          stage = "fit_temperature";
          const auto fit = fit_temperature(gpr_model->predict(valid.features), valid.labels, heuristic);
          heuristic.temperature = fit.temperature;
          r.diagnostics[tag + "temperature"] = fit.temperature;
          r.diagnostics[tag + "temperature_degenerate"] = fit.degenerate;
        }
      } else {
        gpc_model = fit_gpc(hyper, train, cfg.ess, cfg.n_inner, derive_seed(f.sampler_seed, "ess"), opt.workers);
        double mean_ll = 0.0;
        for (const auto& c : gpc_model->samples.chains) mean_ll += c.mean_log_likelihood;
        r.diagnostics[tag + "ess_mean_log_likelihood"] = mean_ll / static_cast<double>(gpc_model->samples.chains.size());
      }

      stage = "evaluate";
      std::vector<Evaluation> evals(sets.size());
      std::vector<PredictDiagnostics> diags(sets.size());
      parallel_for(sets.size(), opt.workers, [&](std::size_t s) {
        const auto& set = sets[s];
        Evaluation& e = evals[s];
        e.fold = fold;
        e.corruption = set.corruption;
        e.intensity = set.intensity;
        if (gpc_model) {
          const auto preds = gpc_model->predict(set.data.features, derive_seed(f.sampler_seed, 1000 + s));
          const auto rep = evaluate_calibration(preds, set.data.labels);
          e.metrics = calibration_metrics(rep);
          e.reliability_bins = rep.reliability_bins;
          return;
        }
        const auto posts = gpr_model->predict(set.data.features, &diags[s]);
        if (cfg.task == TaskKind::Regression) {
          e.metrics = regression_metrics(posts, set.data, gpr_model->noise_variance());
        } else {
          const auto preds = heuristic_confidences(posts, heuristic);
          const auto rep = evaluate_calibration(preds, set.data.labels);
          e.metrics = calibration_metrics(rep);
          e.reliability_bins = rep.reliability_bins;
        }
      });
      for (const auto& d : diags) {
        clamped += d.n_clamped;
        jitter = std::max(jitter, d.jitter);
      }
      r.evaluations.insert(r.evaluations.end(), evals.begin(), evals.end());
    }

    stage = "aggregate";
    r.fold_summary = fold_summaries(r.evaluations);
    for (const auto& [k, s] : r.fold_summary) r.metrics[k] = s.mean;
    r.quartiles = shift_quartiles(r.evaluations);
    if (!cfg.grid.empty()) {
      r.diagnostics["grid_cells"] = static_cast<double>(grid_cells);
      r.diagnostics["grid_failed_cells"] = static_cast<double>(grid_failed);
    }
    r.diagnostics["clamped_variances"] = static_cast<double>(clamped);
    r.diagnostics["max_jitter"] = jitter;
  } catch (const std::exception& e) {
    r.error = RunError{stage, e.what()};
  }
  r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!opt.out_dir.empty()) write_artifacts(r, opt.out_dir);
  return r;
}

}  // namespace nkgp::harness
