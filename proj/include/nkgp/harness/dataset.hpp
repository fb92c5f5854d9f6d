#pragma once

// Tabular datasets: CSV ingestion, stratified splits and z-scoring.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nkgp/error.hpp"
#include "nkgp/random.hpp"

namespace nkgp::harness {

namespace detail {
using nkgp::detail::require;
using nkgp::detail::require_dims;
}  // namespace detail

enum class TaskKind { Regression, Classification };

inline std::string to_string(TaskKind t) {
  return t == TaskKind::Regression ? "regression" : "classification";
}

inline TaskKind parse_task(std::string_view s) {
  if (s == "regression") return TaskKind::Regression;
  if (s == "classification") return TaskKind::Classification;
  throw ParseError("unknown task '" + std::string(s) + "' (expected regression|classification)");
}

/// Per-column affine map x ↦ (x − mean)/scale. Columns with scale 0 map to 0.
struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  bool empty() const { return mean.size() == 0; }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (scale(j) > 0.0)
        out.col(j) = (x.col(j).array() - mean(j)) / scale(j);
      else
        out.col(j).setZero();
    }
    return out;
  }

  Eigen::MatrixXd invert(const Eigen::MatrixXd& z) const {
    Eigen::MatrixXd out(z.rows(), z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) out.col(j) = z.col(j).array() * scale(j) + mean(j);
    return out;
  }

  bool operator==(const Standardization&) const = default;
};

/// Population mean and standard deviation per column.
inline Standardization column_statistics(const Eigen::MatrixXd& x) {
  detail::require_dims(x.rows() > 0, "column_statistics: empty matrix");
  Standardization s;
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean(j)).square().mean();
    const double sd = std::sqrt(var);
    s.scale(j) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(j))) ? sd : 0.0;
  }
  return s;
}

struct Dataset {
  std::string name;
  std::string provenance;  // upstream embedding, empty for raw features
  TaskKind task = TaskKind::Regression;
  Eigen::MatrixXd features;
  Eigen::MatrixXd targets;  // regression only
  std::vector<int> labels;  // classification only
  int n_classes = 0;
  Standardization feature_stats;
  Standardization target_stats;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  void validate() const {
    detail::require_dims(size() >= 1, "dataset '" + name + "': no rows");
    if (!features.allFinite()) throw DomainError("dataset '" + name + "': non-finite feature");
    if (task == TaskKind::Regression) {
      detail::require_dims(targets.rows() == size() && targets.cols() >= 1,
                           "dataset '" + name + "': target rows mismatch");
      if (!targets.allFinite()) throw DomainError("dataset '" + name + "': non-finite target");
    } else {
      detail::require_dims(static_cast<Eigen::Index>(labels.size()) == size(),
                           "dataset '" + name + "': label count mismatch");
      for (int y : labels)
        detail::require(y >= 0 && y < n_classes, "dataset '" + name + "': label out of range");
    }
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.name = name;
    out.provenance = provenance;
    out.task = task;
    out.n_classes = n_classes;
    out.feature_stats = feature_stats;
    out.target_stats = target_stats;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), dim());
    if (task == TaskKind::Regression) out.targets.resize(out.features.rows(), targets.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(rows[i]);
      detail::require_dims(r < size(), "subset: row index out of range");
      out.features.row(static_cast<Eigen::Index>(i)) = features.row(r);
      if (task == TaskKind::Regression)
        out.targets.row(static_cast<Eigen::Index>(i)) = targets.row(r);
      else
        out.labels.push_back(labels[rows[i]]);
    }
    return out;
  }
};

/// Rows of `a` followed by rows of `b`.
inline Dataset concatenate(const Dataset& a, const Dataset& b) {
  detail::require_dims(a.task == b.task && a.dim() == b.dim(), "concatenate: incompatible datasets");
  Dataset out = a;
  out.features.resize(a.size() + b.size(), a.dim());
  out.features << a.features, b.features;
  if (a.task == TaskKind::Regression) {
    out.targets.resize(a.size() + b.size(), a.targets.cols());
    out.targets << a.targets, b.targets;
  } else {
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.n_classes = std::max(a.n_classes, b.n_classes);
  }
  return out;
}

struct CsvSchema {
  int n_targets = 1;  // trailing columns holding targets
  int n_classes = 0;  // 0: infer as max label + 1
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

inline bool parse_int(std::string_view s, long long& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

}  // namespace detail

/// Parses a CSV with a header row: feature columns, then `schema.n_targets`
/// target columns. A leading `# embedding: <provenance>` line is accepted.
/// Rows and columns in error messages are 1-based file positions.
inline Dataset parse_csv(std::istream& in, const std::string& name, TaskKind task, CsvSchema schema = {}) {
  detail::require(schema.n_targets >= 1, "csv: n_targets must be >= 1");
  detail::require(task == TaskKind::Regression || schema.n_targets == 1,
                  "csv: classification takes exactly one label column");
  const std::string where = name.empty() ? std::string("csv") : name;

  Dataset ds;
  ds.name = name;
  ds.task = task;
  std::string line;
  std::size_t row = 0;
  std::size_t n_cols = 0;
  bool have_header = false;
  std::vector<double> values;
  std::vector<long long> labels;
  while (std::getline(in, line)) {
    ++row;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    if (!have_header && text.front() == '#') {
      constexpr std::string_view tag = "embedding:";
      auto body = detail::trim(text.substr(1));
      if (body.substr(0, tag.size()) == tag) ds.provenance = std::string(detail::trim(body.substr(tag.size())));
      continue;
    }
    const auto fields = detail::split_fields(text);
    if (!have_header) {
      n_cols = fields.size();
      if (n_cols <= static_cast<std::size_t>(schema.n_targets))
        throw ParseError(where + ": header has " + std::to_string(n_cols) + " columns, need at least " +
                         std::to_string(schema.n_targets + 1));
      have_header = true;
      continue;
    }
    if (fields.size() != n_cols)
      throw ParseError(where + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(n_cols));
    const std::size_t n_features = n_cols - static_cast<std::size_t>(schema.n_targets);
    for (std::size_t c = 0; c < n_cols; ++c) {
      const auto f = fields[c];
      auto fail = [&](const char* what) {
        throw ParseError(where + ": row " + std::to_string(row) + ", column " + std::to_string(c + 1) + ": " +
                         what + " '" + std::string(f) + "'");
      };
      if (task == TaskKind::Classification && c >= n_features) {
        long long y;
        if (!detail::parse_int(f, y)) fail("cannot parse class index");
        if (y < 0) fail("negative class index");
        labels.push_back(y);
        continue;
      }
      double v;
      if (!detail::parse_double(f, v)) fail("cannot parse number");
      if (!std::isfinite(v)) fail("non-finite value");
      values.push_back(v);
    }
  }
  if (!have_header) throw ParseError(where + ": missing header row");

  const std::size_t n_features = n_cols - static_cast<std::size_t>(schema.n_targets);
  const std::size_t per_row = task == TaskKind::Regression ? n_cols : n_features;
  const auto n = static_cast<Eigen::Index>(per_row ? values.size() / per_row : 0);
  if (n == 0) throw ParseError(where + ": no data rows");
  ds.features.resize(n, static_cast<Eigen::Index>(n_features));
  if (task == TaskKind::Regression) ds.targets.resize(n, schema.n_targets);
  for (Eigen::Index i = 0; i < n; ++i)
    for (std::size_t c = 0; c < per_row; ++c) {
      const double v = values[static_cast<std::size_t>(i) * per_row + c];
      if (c < n_features)
        ds.features(i, static_cast<Eigen::Index>(c)) = v;
      else
        ds.targets(i, static_cast<Eigen::Index>(c - n_features)) = v;
    }
  if (task == TaskKind::Classification) {
    const long long top = *std::max_element(labels.begin(), labels.end());
    ds.n_classes = schema.n_classes > 0 ? schema.n_classes : static_cast<int>(top + 1);
    if (top >= ds.n_classes)
      throw ParseError(where + ": class index " + std::to_string(top) + " >= n_classes " +
                       std::to_string(ds.n_classes));
    ds.labels.assign(labels.begin(), labels.end());
    if (ds.n_classes < 2) throw ParseError(where + ": classification needs at least two classes");
  }
  ds.validate();
  return ds;
}

inline Dataset load_csv(const std::string& path, TaskKind task, CsvSchema schema = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  auto stem = path.substr(path.find_last_of('/') + 1);
  stem = stem.substr(0, stem.rfind('.'));
  try {
    return parse_csv(in, stem, task, schema);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_csv(std::ostream& out, const Dataset& ds) {
  out.precision(17);
  if (!ds.provenance.empty()) out << "# embedding: " << ds.provenance << '\n';
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out << (j ? "," : "") << 'x' << j;
  if (ds.task == TaskKind::Regression)
    for (Eigen::Index j = 0; j < ds.targets.cols(); ++j) out << ",y" << j;
  else
    out << ",label";
  out << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.dim(); ++j) out << (j ? "," : "") << ds.features(i, j);
    if (ds.task == TaskKind::Regression)
      for (Eigen::Index j = 0; j < ds.targets.cols(); ++j) out << ',' << ds.targets(i, j);
    else
      out << ',' << ds.labels[static_cast<std::size_t>(i)];
    out << '\n';
  }
}

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;

  bool operator==(const SplitRatios&) const = default;
};

struct SplitIndices {
  std::vector<std::size_t> train, valid, test;
};

/// Deterministic shuffled split. Test and valid receive round(n·ratio) rows,
/// train the rest. Classification splits are stratified: rows are ordered by
/// (rank within class + U(0,1)) / class size before cutting, so each
/// contiguous part holds every class in proportion.
inline SplitIndices split_indices(const Dataset& ds, std::uint64_t seed, SplitRatios r = {}) {
  detail::require(r.train >= 0 && r.valid >= 0 && r.test >= 0 && std::abs(r.train + r.valid + r.test - 1.0) < 1e-9,
                  "split: ratios must be non-negative and sum to 1");
  const auto n = static_cast<std::size_t>(ds.size());
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  if (ds.task == TaskKind::Classification) {
    std::vector<std::size_t> seen(static_cast<std::size_t>(ds.n_classes), 0), count(seen.size(), 0);
    for (int y : ds.labels) ++count[static_cast<std::size_t>(y)];
    std::vector<double> key(n);
    for (std::size_t i : order) {
      const auto y = static_cast<std::size_t>(ds.labels[i]);
      key[i] = (static_cast<double>(seen[y]++) + uniform01(rng)) / static_cast<double>(count[y]);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  }

  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.test));
  const auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.valid));
  if (n_test + n_valid >= n || (r.test > 0 && n_test == 0) || (r.valid > 0 && n_valid == 0))
    throw DomainError("split: " + std::to_string(n) + " rows leave an empty part for ratios " +
                      std::to_string(r.train) + "/" + std::to_string(r.valid) + "/" + std::to_string(r.test));

  SplitIndices out;
  out.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.valid.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test),
                   order.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid));
  out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid), order.end());
  return out;
}

struct SplitData {
  Dataset train, valid, test;
};

inline SplitData split(const Dataset& ds, std::uint64_t seed, SplitRatios r = {}) {
  const auto idx = split_indices(ds, seed, r);
  return {ds.subset(idx.train), ds.subset(idx.valid), ds.subset(idx.test)};
}

/// Z-scores features (and regression targets) of every part with statistics
/// from `parts.train`, which are stored on each dataset.
inline void standardize(SplitData& parts) {
  const auto fs = column_statistics(parts.train.features);
  Standardization ts;
  if (parts.train.task == TaskKind::Regression) ts = column_statistics(parts.train.targets);
  for (Dataset* d : {&parts.train, &parts.valid, &parts.test}) {
    d->features = fs.apply(d->features);
    d->feature_stats = fs;
    if (d->task == TaskKind::Regression) {
      d->targets = ts.apply(d->targets);
      d->target_stats = ts;
    }
  }
}

}  // namespace nkgp::harness
