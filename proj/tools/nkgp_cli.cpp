// nkgp: command-line front end for kernels, GP fits, grid search and the
// corruption suite.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nkgp/nkgp.hpp"

namespace fs = std::filesystem;
using namespace nkgp;
using namespace nkgp::harness;

namespace {

struct CommonOptions {
  std::string data;
  std::string task;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t workers = 1;
  std::string heuristic;
  std::string temperature;
  std::vector<std::string> set;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--data", o.data, "dataset CSV (header; features then target columns)")
      ->required()
      ->check(CLI::ExistingFile);
  app->add_option("--task", o.task, "regression | classification")
      ->check(CLI::IsMember({"regression", "classification"}));
  app->add_option("--config", o.config, "key=value config file")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--heuristic", o.heuristic, "exact | pairwise | softmax")
      ->check(CLI::IsMember({"exact", "pairwise", "softmax"}));
  app->add_option("--temperature", o.temperature, "fit | <real>");
  app->add_option("--set", o.set, "extra config setting key=value (repeatable)");
}

ExperimentConfig build_config(const CommonOptions& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (!o.task.empty()) apply_setting(c, "experiment.task", o.task);
  if (o.seed) c.seed = *o.seed;
  if (!o.heuristic.empty()) apply_setting(c, "heuristic.kind", o.heuristic);
  if (!o.temperature.empty()) apply_setting(c, "heuristic.temperature", o.temperature);
  for (const auto& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ParseError("--set expects key=value, got '" + kv + "'");
    apply_setting(c, std::string(harness::detail::trim(kv.substr(0, eq))), harness::detail::trim(kv.substr(eq + 1)));
  }
  c.validate();
  return c;
}

Dataset load_data(const CommonOptions& o, const ExperimentConfig& c) {
  return load_csv(o.data, c.task, {.n_targets = c.task == TaskKind::Regression ? c.n_targets : 1});
}

void print_metrics(const RunRecord& r) {
  for (const auto& [k, s] : r.fold_summary) {
    std::cout << k << " = " << format_double(s.mean);
    if (s.values.size() > 1) std::cout << " +- " << format_double(s.standard_error) << " (" << s.values.size() << " folds)";
    std::cout << '\n';
  }
}

int finish_run(const RunRecord& r, const std::string& out) {
  if (r.error) {
    std::cerr << "error in stage " << r.error->stage << ": " << r.error->message << '\n';
    return 1;
  }
  print_metrics(r);
  if (!out.empty()) std::cout << "wrote " << (fs::path(out) / "results.json").string() << '\n';
  return 0;
}

int cmd_kernel(const CommonOptions& o) {
  const auto c = build_config(o);
  const auto ds = load_data(o, c);
  Eigen::MatrixXd k;
  if (c.hyper.kernel.family == KernelFamily::NTK)
    k = ntk_matrix(ds.features, c.hyper.kernel).ntk.values;
  else
    k = gram(ds.features, c.hyper.kernel).values;

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    file.open(fs::path(o.out) / "gram.csv");
    out = &file;
  }
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) *out << (j ? "," : "") << format_double(k(i, j));
    *out << '\n';
  }
  if (!o.out.empty()) std::cout << "wrote " << (fs::path(o.out) / "gram.csv").string() << '\n';
  return 0;
}

// gpr / gpc: clean test split only.
int cmd_fit(const CommonOptions& o, ModelKind model) {
  auto c = build_config(o);
  c.model = model;
  c.corruptions.clear();
  c.validate();
  return finish_run(run_experiment(c, load_data(o, c), {o.out, o.workers}), o.out);
}

int cmd_shift_eval(const CommonOptions& o) {
  auto c = build_config(o);
  if (c.corruptions.empty()) c.corruptions.assign(kAllCorruptions.begin(), kAllCorruptions.end());
  const auto r = run_experiment(c, load_data(o, c), {o.out, o.workers});
  const int status = finish_run(r, o.out);
  if (status == 0)
    for (const auto& q : r.quartiles)
      if (q.corruption == "all")
        std::cout << q.metric << " under shift: q25 " << format_double(q.quartiles.q25) << ", median "
                  << format_double(q.quartiles.q50) << ", q75 " << format_double(q.quartiles.q75) << '\n';
  return status;
}

int cmd_tune(const CommonOptions& o) {
  const auto c = build_config(o);
  const auto ds = load_data(o, c);
  const auto gs = tune(c, ds, o.workers);
  const auto& best = gs.cells[gs.best];
  std::cout << "cells " << gs.cells.size() << ", failed " << gs.n_failed << ", best cell " << best.index << " with "
            << to_string(c.grid.metric) << " " << format_double(best.outcome.value) << '\n';
  ExperimentConfig chosen = c;
  chosen.hyper = gs.best_hyper;
  chosen.grid = {};
  if (o.out.empty()) {
    std::cout << format_config(chosen);
    return 0;
  }
  fs::create_directories(o.out);
  std::ofstream(fs::path(o.out) / "best.cfg") << format_config(chosen);
  Json cells = Json::array();
  for (const auto& r : cell_records(gs, c, c.effective_split_seed())) cells.push_back(to_json(r, false));
  std::ofstream(fs::path(o.out) / "grid_cells.json") << cells.dump(2) << '\n';
  std::cout << "wrote " << (fs::path(o.out) / "best.cfg").string() << '\n';
  return 0;
}

int cmd_report(const std::string& results, const std::string& out) {
  auto r = load_run_record(results);
  if (r.quartiles.empty()) r.quartiles = shift_quartiles(r.evaluations);
  const std::string dir = out.empty() ? fs::path(results).parent_path().string() : out;
  fs::create_directories(dir.empty() ? "." : dir);
  const auto path = [&](const char* f) { return (fs::path(dir) / f).string(); };
  write_quartiles_csv(r, path("quartiles.csv"));
  write_reliability_csv(r, path("reliability_bins.csv"));
  write_summary_csv(r, path("summary.csv"));

  std::cout << "metric,corruption,q25,q50,q75\n";
  for (const auto& q : r.quartiles)
    std::cout << q.metric << ',' << q.corruption << ',' << format_double(q.quartiles.q25) << ','
              << format_double(q.quartiles.q50) << ',' << format_double(q.quartiles.q75) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural-kernel Gaussian processes: kernels, GP regression/classification, calibration under shift"};
  app.require_subcommand(1);

  CommonOptions kernel_o, gpr_o, gpc_o, tune_o, shift_o;
  add_common(app.add_subcommand("kernel", "write the Gram matrix of --data to CSV"), kernel_o);
  add_common(app.add_subcommand("gpr", "fit GP regression and score the test split"), gpr_o);
  add_common(app.add_subcommand("gpc", "fit GP classification by elliptical slice sampling and score"), gpc_o);
  add_common(app.add_subcommand("tune", "grid search on the validation split"), tune_o);
  add_common(app.add_subcommand("shift-eval", "evaluate on the clean test split and every corruption"), shift_o);

  std::string results, report_out;
  auto* report = app.add_subcommand("report", "quartile and reliability-bin tables from results.json");
  report->add_option("--results", results, "results.json of a previous run")->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "output directory (default: next to results.json)");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "kernel") return cmd_kernel(kernel_o);
    if (name == "gpr") return cmd_fit(gpr_o, ModelKind::Gpr);
    if (name == "gpc") return cmd_fit(gpc_o, ModelKind::Gpc);
    if (name == "tune") return cmd_tune(tune_o);
    if (name == "shift-eval") return cmd_shift_eval(shift_o);
    return cmd_report(results, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
