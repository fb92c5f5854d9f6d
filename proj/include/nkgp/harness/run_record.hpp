#pragma once

// Self-describing, versioned run records and their JSON form.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nkgp/calibration.hpp"
#include "nkgp/error.hpp"

namespace nkgp::harness {

inline constexpr int kRunRecordFormatVersion = 1;

/// Metrics of one evaluation set: the clean test split (corruption "clean",
/// intensity 0) or one (corruption, intensity) pair.
struct Evaluation {
  int fold = 0;
  std::string corruption = "clean";
  int intensity = 0;
  std::map<std::string, double> metrics;
  std::vector<ReliabilityBin> reliability_bins;

  bool clean() const { return intensity == 0; }
  bool operator==(const Evaluation&) const = default;
};

/// Per-fold values of a clean-test metric with mean ± standard error.
struct MetricSummary {
  std::vector<double> values;
  double mean = 0.0;
  double standard_error = 0.0;

  bool operator==(const MetricSummary&) const = default;
};

struct QuartileRow {
  std::string metric;
  std::string corruption;  // a corruption name or "all"
  Quartiles quartiles;

  bool operator==(const QuartileRow&) const = default;
};

struct RunError {
  std::string stage;
  std::string message;

  bool operator==(const RunError&) const = default;
};

struct RunRecord {
  int format_version = kRunRecordFormatVersion;
  std::string kind = "experiment";  // "experiment" or "grid_cell"
  std::string name;
  std::vector<std::pair<std::string, std::string>> config;  // key=value snapshot
  std::uint64_t split_seed = 0;
  std::uint64_t corruption_seed = 0;
  std::uint64_t sampler_seed = 0;
  std::map<std::string, double> metrics;
  std::map<std::string, MetricSummary> fold_summary;
  std::vector<Evaluation> evaluations;
  std::vector<QuartileRow> quartiles;
  std::vector<std::pair<std::string, std::string>> selected;  // chosen hyperparameters per fold
  std::map<std::string, double> diagnostics;
  double wall_clock_seconds = 0.0;
  std::map<std::string, std::string> artifact_paths;
  std::optional<RunError> error;

  bool operator==(const RunRecord&) const = default;
};

using Json = nlohmann::ordered_json;

inline Json to_json(const ReliabilityBin& b) {
  return {{"confidence_lower", b.confidence_lower}, {"confidence_upper", b.confidence_upper},
          {"count", b.count},                       {"mean_confidence", b.mean_confidence},
          {"mean_accuracy", b.mean_accuracy}};
}

inline Json to_json(const Evaluation& e) {
  Json bins = Json::array();
  for (const auto& b : e.reliability_bins) bins.push_back(to_json(b));
  return {{"fold", e.fold},
          {"corruption", e.corruption},
          {"intensity", e.intensity},
          {"metrics", Json(e.metrics)},
          {"reliability_bins", bins}};
}

namespace detail {

inline Json pairs_to_json(const std::vector<std::pair<std::string, std::string>>& kv) {
  Json out = Json::array();
  for (const auto& [k, v] : kv) out.push_back({k, v});
  return out;
}

inline std::vector<std::pair<std::string, std::string>> pairs_from_json(const Json& j) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& p : j) out.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
  return out;
}

}  // namespace detail

/// JSON object for `r`. With `include_timing` false the wall-clock field is
/// omitted, which makes the payload a pure function of config, data and seeds.
inline Json to_json(const RunRecord& r, bool include_timing = true) {
  Json j;
  j["format_version"] = r.format_version;
  j["kind"] = r.kind;
  j["name"] = r.name;
  j["config"] = detail::pairs_to_json(r.config);
  j["split_seed"] = r.split_seed;
  j["corruption_seed"] = r.corruption_seed;
  j["sampler_seed"] = r.sampler_seed;
  j["metrics"] = Json(r.metrics);
  Json summary = Json::object();
  for (const auto& [k, s] : r.fold_summary)
    summary[k] = {{"values", s.values}, {"mean", s.mean}, {"standard_error", s.standard_error}};
  j["fold_summary"] = summary;
  Json evals = Json::array();
  for (const auto& e : r.evaluations) evals.push_back(to_json(e));
  j["evaluations"] = evals;
  Json quart = Json::array();
  for (const auto& q : r.quartiles)
    quart.push_back({{"metric", q.metric},
                     {"corruption", q.corruption},
                     {"q25", q.quartiles.q25},
                     {"q50", q.quartiles.q50},
                     {"q75", q.quartiles.q75}});
  j["quartiles"] = quart;
  j["selected"] = detail::pairs_to_json(r.selected);
  j["diagnostics"] = Json(r.diagnostics);
  if (include_timing) j["wall_clock_seconds"] = r.wall_clock_seconds;
  j["artifact_paths"] = Json(r.artifact_paths);
  j["error"] = r.error ? Json{{"stage", r.error->stage}, {"message", r.error->message}} : Json(nullptr);
  return j;
}

inline RunRecord run_record_from_json(const Json& j) {
  try {
    RunRecord r;
    r.format_version = j.at("format_version").get<int>();
    if (r.format_version != kRunRecordFormatVersion)
      throw ParseError("run record: unsupported format_version " + std::to_string(r.format_version));
    r.kind = j.at("kind").get<std::string>();
    r.name = j.at("name").get<std::string>();
    r.config = detail::pairs_from_json(j.at("config"));
    r.split_seed = j.at("split_seed").get<std::uint64_t>();
    r.corruption_seed = j.at("corruption_seed").get<std::uint64_t>();
    r.sampler_seed = j.at("sampler_seed").get<std::uint64_t>();
    r.metrics = j.at("metrics").get<std::map<std::string, double>>();
    for (const auto& [k, s] : j.at("fold_summary").items())
      r.fold_summary[k] = {s.at("values").get<std::vector<double>>(), s.at("mean").get<double>(),
                           s.at("standard_error").get<double>()};
    for (const auto& e : j.at("evaluations")) {
      Evaluation ev;
      ev.fold = e.at("fold").get<int>();
      ev.corruption = e.at("corruption").get<std::string>();
      ev.intensity = e.at("intensity").get<int>();
      ev.metrics = e.at("metrics").get<std::map<std::string, double>>();
      for (const auto& b : e.at("reliability_bins"))
        ev.reliability_bins.push_back({b.at("confidence_lower").get<double>(), b.at("confidence_upper").get<double>(),
                                       b.at("count").get<std::size_t>(), b.at("mean_confidence").get<double>(),
                                       b.at("mean_accuracy").get<double>()});
      r.evaluations.push_back(std::move(ev));
    }
    for (const auto& q : j.at("quartiles"))
      r.quartiles.push_back({q.at("metric").get<std::string>(),
                             q.at("corruption").get<std::string>(),
                             {q.at("q25").get<double>(), q.at("q50").get<double>(), q.at("q75").get<double>()}});
    r.selected = detail::pairs_from_json(j.at("selected"));
    r.diagnostics = j.at("diagnostics").get<std::map<std::string, double>>();
    if (j.contains("wall_clock_seconds")) r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    r.artifact_paths = j.at("artifact_paths").get<std::map<std::string, std::string>>();
    if (const auto& e = j.at("error"); !e.is_null())
      r.error = RunError{e.at("stage").get<std::string>(), e.at("message").get<std::string>()};
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("run record: ") + e.what());
  }
}

inline std::string serialize(const RunRecord& r, bool include_timing = true) {
  return to_json(r, include_timing).dump(2);
}

inline RunRecord parse_run_record(const std::string& text) {
  try {
    return run_record_from_json(Json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("run record: ") + e.what());
  }
}

inline RunRecord load_run_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_record(text);
}

}  // namespace nkgp::harness
