#include <algorithm>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "nkgp/harness/corruption.hpp"
#include "nkgp/harness/dataset.hpp"
#include "nkgp/harness/synthetic.hpp"

namespace nkgp::harness {
namespace {

const std::string kData = NKGP_TEST_DATA_DIR;

Dataset parse(const std::string& text, TaskKind task = TaskKind::Regression, CsvSchema schema = {}) {
  std::istringstream in(text);
  return parse_csv(in, "inline", task, schema);
}

std::string error_of(const std::string& text, TaskKind task = TaskKind::Regression) {
  try {
    parse(text, task);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

TEST(LoadCsv, HandWrittenFileRoundTrips) {
  const auto ds = load_csv(kData + "/two_rows.csv", TaskKind::Regression);
  EXPECT_EQ(ds.name, "two_rows");
  ASSERT_EQ(ds.size(), 2);
  ASSERT_EQ(ds.dim(), 3);
  Eigen::MatrixXd x(2, 3);
  x << 1.5, -2, 3e-3, 0.25, 7, -1e2;
  EXPECT_EQ(ds.features, x);
  EXPECT_EQ(ds.targets(0, 0), 10.0);
  EXPECT_EQ(ds.targets(1, 0), -4.5);

  std::ostringstream out;
  write_csv(out, ds);
  std::istringstream back(out.str());
  const auto again = parse_csv(back, "two_rows", TaskKind::Regression);
  EXPECT_EQ(again.features, ds.features);
  EXPECT_EQ(again.targets, ds.targets);
}

TEST(LoadCsv, ClassificationAndEmbeddingProvenance) {
  const auto blobs = load_csv(kData + "/blobs.csv", TaskKind::Classification);
  EXPECT_EQ(blobs.size(), 90);
  EXPECT_EQ(blobs.dim(), 2);
  EXPECT_EQ(blobs.n_classes, 3);
  EXPECT_TRUE(blobs.provenance.empty());

  const auto emb = load_csv(kData + "/embedding.csv", TaskKind::Classification);
  EXPECT_EQ(emb.provenance, "resnet50-penultimate-v1");
  EXPECT_EQ(emb.dim(), 3);
  EXPECT_EQ(emb.n_classes, 2);
}

TEST(LoadCsv, MultipleTargetColumns) {
  const auto ds = parse("a,b,y1,y2\n1,2,3,4\n5,6,7,8\n", TaskKind::Regression, {.n_targets = 2});
  EXPECT_EQ(ds.dim(), 2);
  EXPECT_EQ(ds.targets.cols(), 2);
  EXPECT_EQ(ds.targets(1, 1), 8.0);
}

TEST(LoadCsv, ErrorsCarryLocation) {
  EXPECT_NE(error_of("a,y\n1,2\n3,x\n").find("row 3, column 2"), std::string::npos);
  EXPECT_NE(error_of("a,b,y\n1,2,3\n1,2\n").find("row 3 has 2 fields, expected 3"), std::string::npos);
  EXPECT_NE(error_of("a,y\n1,nan\n").find("non-finite"), std::string::npos);
  EXPECT_NE(error_of("a,y\n1,1.5\n", TaskKind::Classification).find("class index"), std::string::npos);
  EXPECT_NE(error_of("a,y\n1,-1\n", TaskKind::Classification).find("negative"), std::string::npos);
  EXPECT_NE(error_of("").find("missing header"), std::string::npos);
  EXPECT_NE(error_of("a,y\n").find("no data rows"), std::string::npos);
  EXPECT_NE(error_of("y\n1\n").find("header has 1 columns"), std::string::npos);
  EXPECT_THROW(load_csv(kData + "/does_not_exist.csv", TaskKind::Regression), ParseError);
}

Dataset counting(int n) {
  Dataset ds;
  ds.name = "count";
  ds.features.resize(n, 1);
  ds.targets.resize(n, 1);
  for (int i = 0; i < n; ++i) ds.features(i, 0) = ds.targets(i, 0) = i;
  return ds;
}

TEST(Split, SizesDeterminismAndPartition) {
  const auto ds = counting(10);
  const auto a = split_indices(ds, 5);
  EXPECT_EQ(a.train.size(), 8u);
  EXPECT_EQ(a.valid.size(), 1u);
  EXPECT_EQ(a.test.size(), 1u);

  const auto b = split_indices(ds, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.valid, b.valid);
  EXPECT_EQ(a.test, b.test);

  std::set<std::size_t> seen;
  for (const auto* part : {&a.train, &a.valid, &a.test})
    for (auto i : *part) EXPECT_TRUE(seen.insert(i).second);
  EXPECT_EQ(seen.size(), 10u);

  std::set<std::vector<std::size_t>> distinct;
  for (std::uint64_t s = 0; s < 20; ++s) distinct.insert(split_indices(counting(50), s).test);
  EXPECT_EQ(distinct.size(), 20u);
}

TEST(Split, EmptyPartIsAnError) {
  EXPECT_THROW(split_indices(counting(3), 1), DomainError);
  EXPECT_THROW(split_indices(counting(10), 1, {0.5, 0.2, 0.2}), DomainError);
}

TEST(Split, ClassificationIsStratified) {
  const auto ds = make_blobs({.n = 400, .n_classes = 4, .seed = 2});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto idx = split_indices(ds, seed);
    for (const auto* part : {&idx.valid, &idx.test}) {
      std::vector<int> per(4, 0);
      for (auto i : *part) ++per[static_cast<std::size_t>(ds.labels[i])];
      for (int c : per) EXPECT_NEAR(c, 10, 1);
    }
  }
}

TEST(Standardize, TrainStatisticsOnly) {
  Rng rng(3);
  Dataset ds;
  ds.features = 3.0 * standard_normal(40, 3, rng);
  ds.features.col(1).setConstant(7.0);
  ds.targets = 5.0 + 2.0 * standard_normal(40, 1, rng).array();
  SplitData parts = split(ds, 1, {0.5, 0.25, 0.25});
  const Eigen::MatrixXd raw_test = parts.test.features;
  const auto expected = column_statistics(parts.train.features);
  standardize(parts);

  const auto& z = parts.train.features;
  for (Eigen::Index j : {0, 2}) {
    EXPECT_NEAR(z.col(j).mean(), 0.0, 1e-10);
    EXPECT_NEAR((z.col(j).array() - z.col(j).mean()).square().mean(), 1.0, 1e-10);
  }
  EXPECT_TRUE(z.col(1).isZero(0.0));
  EXPECT_EQ(parts.test.feature_stats, expected);
  EXPECT_LT((parts.test.features.col(0).array() - (raw_test.col(0).array() - expected.mean(0)) / expected.scale(0))
                .abs()
                .maxCoeff(),
            1e-14);
  EXPECT_NEAR(parts.train.targets.mean(), 0.0, 1e-10);
  const Eigen::MatrixXd back = parts.test.target_stats.invert(parts.test.targets);
  EXPECT_FALSE(back.isApprox(parts.test.targets));
}

TEST(Corrupt, IntensityRangeAndDeterminism) {
  const auto ds = make_blobs({.n = 50, .n_classes = 2, .dim = 6, .seed = 4});
  EXPECT_THROW(corrupt(ds, CorruptionKind::GaussianNoise, 0, 1), DomainError);
  EXPECT_THROW(corrupt(ds, CorruptionKind::GaussianNoise, 6, 1), DomainError);
  for (auto kind : kAllCorruptions) {
    const auto a = corrupt(ds, kind, 3, 9);
    const auto b = corrupt(ds, kind, 3, 9);
    EXPECT_EQ(a.features, b.features) << to_string(kind);
    EXPECT_EQ(a.labels, ds.labels);
    EXPECT_EQ(parse_corruption(to_string(kind)), kind);
  }
  EXPECT_NE(corrupt(ds, CorruptionKind::GaussianNoise, 3, 9).features,
            corrupt(ds, CorruptionKind::GaussianNoise, 3, 10).features);
  EXPECT_THROW(parse_corruption("fog"), ParseError);
}

TEST(Corrupt, GaussianNoiseScale) {
  Dataset ds;
  ds.task = TaskKind::Regression;
  Rng rng(5);
  ds.features = standard_normal(20000, 2, rng);
  ds.features.col(1) *= 4.0;
  ds.targets = Eigen::MatrixXd::Zero(20000, 1);
  const auto stats = column_statistics(ds.features);
  const auto c = corrupt(ds, CorruptionKind::GaussianNoise, 4, 1);
  const Eigen::MatrixXd noise = c.features - ds.features;
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double sd = std::sqrt(noise.col(j).squaredNorm() / 20000.0);
    EXPECT_NEAR(sd / (0.4 * stats.scale(j)), 1.0, 0.03);
  }
  EXPECT_EQ(c.targets, ds.targets);
}

TEST(Corrupt, BlurContrastDropoutArithmetic) {
  Dataset ds;
  ds.task = TaskKind::Regression;
  ds.features.resize(2, 5);
  ds.features << 1, 2, 3, 4, 5, 0, 0, 10, 0, 0;
  ds.targets = Eigen::MatrixXd::Zero(2, 1);

  const auto blur = corrupt(ds, CorruptionKind::FeatureBlur, 1, 0).features;
  EXPECT_DOUBLE_EQ(blur(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(blur(0, 2), 3.0);
  EXPECT_DOUBLE_EQ(blur(0, 4), 4.5);
  EXPECT_DOUBLE_EQ(blur(1, 1), 10.0 / 3.0);

  const auto contrast = corrupt(ds, CorruptionKind::ContrastScale, 2, 0).features;
  EXPECT_DOUBLE_EQ(contrast(0, 0), (1.0 - 0.5) * 0.7 + 0.5);
  EXPECT_DOUBLE_EQ(contrast(1, 2), (10.0 - 6.5) * 0.7 + 6.5);

  Dataset wide;
  wide.task = TaskKind::Regression;
  wide.features = Eigen::MatrixXd::Ones(4000, 10);
  wide.targets = Eigen::MatrixXd::Zero(4000, 1);
  for (int i = 1; i <= 5; ++i) {
    const auto d = corrupt(wide, CorruptionKind::FeatureDropout, i, 7).features;
    const double zero_fraction = (d.array() == 0.0).cast<double>().mean();
    EXPECT_NEAR(zero_fraction, 0.05 * i, 0.01) << i;
  }
}

}  // namespace
}  // namespace nkgp::harness
