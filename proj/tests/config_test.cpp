#include <string>

#include <gtest/gtest.h>

#include "nkgp/harness/config.hpp"

namespace nkgp::harness {
namespace {

TEST(Config, ParsesKeysOverDefaults) {
  const auto c = parse_config_string(R"(
# a comment
experiment.name = blobs-study
experiment.task = classification
experiment.model = gpc
experiment.seed = 17
experiment.sampler_seed = 5
experiment.corruptions = gaussian_noise, contrast_scale
experiment.intensities = 1,5
kernel.activation = erf
kernel.depth = 3
kernel.weight_variance = 1.7
ntk.time = inf
ess.n_samples = 12
heuristic.kind = pairwise
heuristic.temperature = fit
)");
  EXPECT_EQ(c.name, "blobs-study");
  EXPECT_EQ(c.model, ModelKind::Gpc);
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.sampler_seed, 5u);
  EXPECT_FALSE(c.split_seed.has_value());
  EXPECT_EQ(c.effective_split_seed(), derive_seed(17, "split"));
  EXPECT_EQ(c.effective_sampler_seed(), 5u);
  ASSERT_EQ(c.corruptions.size(), 2u);
  EXPECT_EQ(c.corruptions[1], CorruptionKind::ContrastScale);
  EXPECT_EQ(c.intensities, (std::vector<int>{1, 5}));
  EXPECT_EQ(c.hyper.kernel.activation, Activation::Erf);
  EXPECT_EQ(c.hyper.kernel.depth, 3);
  EXPECT_EQ(c.hyper.kernel.weight_variance, 1.7);
  EXPECT_TRUE(c.ntk.converged());
  EXPECT_EQ(c.ess.n_samples, 12);
  EXPECT_EQ(c.heuristic.kind, HeuristicKind::Pairwise);
  EXPECT_TRUE(c.fit_temperature);
  EXPECT_TRUE(c.grid.empty());
}

TEST(Config, UnknownAndMalformedKeysAreErrors) {
  EXPECT_THROW(parse_config_string("kernel.depht = 3\n"), ParseError);
  EXPECT_THROW(parse_config_string("kernel.depth\n"), ParseError);
  EXPECT_THROW(parse_config_string("kernel.depth = three\n"), ParseError);
  EXPECT_THROW(parse_config_string("kernel.depth = 1\nkernel.depth = 2\n"), ParseError);
  EXPECT_THROW(parse_config_string("kernel.family = cnn\n"), ParseError);
  EXPECT_THROW(parse_config_string("kernel.depth = -1\n"), DomainError);
  EXPECT_THROW(parse_config_string("experiment.intensities = 0\n"), DomainError);
  EXPECT_THROW(parse_config_string("experiment.task = regression\nexperiment.model = gpc\n"), DomainError);
  try {
    parse_config_string("\n\nbogus = 1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Config, PresetAppliesBeforeExplicitAxes) {
  const auto c = parse_config_string("grid.depth = 2\ngrid.preset = nngp\ngrid.metric = rmse\n");
  EXPECT_EQ(c.grid.depth, (std::vector<int>{2}));
  EXPECT_EQ(c.grid.activation.size(), 2u);
  EXPECT_EQ(c.grid.noise_variance.size(), 20u);
  EXPECT_EQ(c.grid.metric, SelectionMetric::Rmse);
  EXPECT_EQ(c.grid.size(), 2u * 1 * 3 * 3 * 2 * 20);
}

TEST(Config, FormatParseRoundTrip) {
  ExperimentConfig c;
  c.name = "rt";
  c.task = TaskKind::Regression;
  c.seed = 0xfffffffffffffffeULL;
  c.corruption_seed = 3;
  c.folds = 20;
  c.ratios = {0.7, 0.2, 0.1};
  c.corruptions = {CorruptionKind::FeatureDropout};
  c.hyper.kernel.family = KernelFamily::NTK;
  c.hyper.kernel.bias_variance = 0.09;
  c.hyper.kernel.kernel_scale = 1.0 / 3.0;
  c.hyper.noise_variance = 1e-12;
  c.ntk.time = 2.5;
  c.heuristic.temperature = 0.1 + 0.2;
  c.heuristic.softmax_sqrt_temperature = false;
  c.grid = rbf_preset();
  c.grid.readout = {Readout{}, Readout{false, 1.5, 0.25}};
  c.grid.metric = SelectionMetric::Rmse;
  const auto text = format_config(c);
  EXPECT_EQ(parse_config_string(text), c) << text;

  ExperimentConfig d;
  EXPECT_EQ(parse_config_string(format_config(d)), d);
}

}  // namespace
}  // namespace nkgp::harness
