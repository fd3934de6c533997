#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace mcgmenn;
using namespace mcgmenn::testing;

namespace {

ScenarioSpec small_spec(double sigma2, TaskMode mode = TaskMode::binary) {
  ScenarioSpec s;
  s.name = "small";
  s.mode = mode;
  s.N = 500;
  s.D = 4;
  s.C = mode == TaskMode::binary ? 2 : 3;
  s.Q = {20, 5};
  s.sigma2 = Matrix::Constant(2, static_cast<Eigen::Index>(s.output_dim()), sigma2);
  return s;
}

double sample_variance(const Matrix& t) {
  const double m = t.mean();
  return (t.array() - m).square().sum() / static_cast<double>(t.size() - 1);
}

}  // namespace

TEST(Registry, HoldsFullAndDeskScenarios) {
  const auto names = scenario_names();
  EXPECT_EQ(names.size(), 36u);
  EXPECT_EQ(std::set<std::string>(names.begin(), names.end()).size(), names.size());
  for (std::size_t q : {100, 1000, 10000})
    for (const char* s : {"0.1", "1", "10"}) {
      const std::string n = "binary_q" + std::to_string(q) + "_s" + s;
      EXPECT_NO_THROW(find_scenario(n)) << n;
      EXPECT_NO_THROW(find_scenario(n + "_desk")) << n;
    }
  for (const char* n : {"base", "1m_samples", "high_dimensionality", "100_classes", "high_cardinality", "dominant_res",
                        "irrelevant_res", "variance_per_class", "10_res"}) {
    EXPECT_NO_THROW(find_scenario(n)) << n;
    EXPECT_TRUE(find_scenario(std::string(n) + "_desk").desk) << n;
  }
}

TEST(Registry, ParameterTuples) {
  const ScenarioSpec base = find_scenario("base");
  EXPECT_EQ(base.N, 100000u);
  EXPECT_EQ(base.D, 10u);
  EXPECT_EQ(base.C, 5u);
  EXPECT_EQ(base.Q, (std::vector<std::size_t>{1000, 10, 1000}));
  EXPECT_EQ(base.sigma2.row(0), Matrix::Constant(1, 5, 0.0001));
  EXPECT_EQ(base.sigma2.row(1), Matrix::Constant(1, 5, 0.5));
  EXPECT_EQ(base.sigma2.row(2), Matrix::Constant(1, 5, 0.5));

  const ScenarioSpec b = find_scenario("binary_q100_s1");
  EXPECT_EQ(b.Q, std::vector<std::size_t>{100});
  EXPECT_EQ(b.sigma2(0, 0), 1.0);
  EXPECT_EQ(b.mode, TaskMode::binary);

  EXPECT_EQ(find_scenario("high_cardinality").Q, (std::vector<std::size_t>{20000, 20000, 20000}));
  EXPECT_EQ(find_scenario("dominant_res").sigma2.row(0), Matrix::Constant(1, 5, 5.0));
  EXPECT_EQ(find_scenario("10_res").Q.size(), 10u);
  Matrix per_class(1, 5);
  per_class << 0.0001, 0.25, 0.5, 0.75, 0.5;
  EXPECT_EQ(find_scenario("variance_per_class").sigma2.row(1), per_class);
  EXPECT_EQ(find_scenario("100_classes").C, 100u);
  EXPECT_EQ(find_scenario("1m_samples").N, 1000000u);
  EXPECT_EQ(find_scenario("high_dimensionality").D, 1000u);
  EXPECT_TRUE((find_scenario("irrelevant_res").sigma2.array() == 0.0001).all());
}

TEST(Registry, DeskScalingRule) {
  const ScenarioSpec d = find_scenario("base_desk");
  EXPECT_EQ(d.N, 10000u);
  EXPECT_EQ(d.Q, find_scenario("base").Q);
  EXPECT_EQ(d.sigma2, find_scenario("base").sigma2);
  EXPECT_EQ(find_scenario("binary_q100_s1_desk").N, 5000u);
  EXPECT_EQ(find_scenario("1m_samples_desk").N, 20000u);
  EXPECT_EQ(find_scenario("high_cardinality_desk").Q, (std::vector<std::size_t>{2000, 2000, 2000}));
  for (const auto& s : scenario_registry())
    if (s.desk) {
      EXPECT_LE(s.N, 20000u) << s.name;
      for (auto q : s.Q) EXPECT_LE(q, 2000u) << s.name;
    }
}

TEST(Registry, UnknownNameListsAvailable) {
  try {
    find_scenario("nope");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("base_desk"), std::string::npos);
  }
}

TEST(Spec, ValidationAndJson) {
  ScenarioSpec s = small_spec(1.0);
  s.sigma2(0, 0) = -1.0;
  EXPECT_THROW(generate(s), ConfigError);
  s = small_spec(1.0);
  s.Q = {0, 5};
  EXPECT_THROW(generate(s), ConfigError);
  s = small_spec(1.0);
  s.sigma2 = Matrix::Ones(1, 1);
  EXPECT_THROW(generate(s), ConfigError);

  const ScenarioSpec v = find_scenario("variance_per_class_desk");
  const ScenarioSpec back = scenario_from_json(json::parse(to_json(v).dump()));
  EXPECT_EQ(back.name, v.name);
  EXPECT_EQ(back.N, v.N);
  EXPECT_EQ(back.Q, v.Q);
  EXPECT_EQ(back.sigma2, v.sigma2);
  EXPECT_EQ(back.desk, v.desk);
}

TEST(Generate, BitReproducible) {
  const auto a = generate(with_seed(small_spec(1.0, TaskMode::multiclass), 3));
  const auto b = generate(with_seed(small_spec(1.0, TaskMode::multiclass), 3));
  EXPECT_EQ(a.data.X, b.data.X);
  EXPECT_EQ(a.data.Y, b.data.Y);
  EXPECT_EQ(a.data.design.assignments, b.data.design.assignments);
  EXPECT_EQ(a.true_effects.flatten(), b.true_effects.flatten());
  EXPECT_EQ(a.test_rows, b.test_rows);
  const auto c = generate(with_seed(small_spec(1.0, TaskMode::multiclass), 4));
  EXPECT_NE(a.data.X, c.data.X);
}

TEST(Generate, ShapesAndTargets) {
  const auto g = generate(with_seed(small_spec(0.5, TaskMode::multiclass), 1));
  EXPECT_EQ(g.data.X.rows(), 500);
  EXPECT_EQ(g.data.Y.cols(), 3);
  EXPECT_TRUE((g.data.X.array() >= 0.0).all() && (g.data.X.array() < 1.0).all());
  EXPECT_TRUE((g.data.Y.rowwise().sum().array() == 1.0).all());
  EXPECT_NO_THROW(g.data.validate());
  for (Eigen::Index c = 0; c < 3; ++c) {
    EXPECT_NEAR(g.fixed_logits.col(c).mean(), 0.0, 1e-12);
    EXPECT_NEAR(sample_variance(g.fixed_logits.col(c)), 1.0, 1e-12);
  }
}

TEST(Generate, SplitsArePartition) {
  const auto g = generate(with_seed(small_spec(1.0), 2));
  EXPECT_EQ(g.train_rows.size(), 300u);
  EXPECT_EQ(g.val_rows.size(), 100u);
  EXPECT_EQ(g.test_rows.size(), 100u);
  std::set<std::size_t> all(g.train_rows.begin(), g.train_rows.end());
  all.insert(g.val_rows.begin(), g.val_rows.end());
  all.insert(g.test_rows.begin(), g.test_rows.end());
  EXPECT_EQ(all.size(), 500u);
  EXPECT_EQ(g.train().rows(), 300u);
  EXPECT_EQ(g.test().design.cardinalities, g.data.design.cardinalities);
}

TEST(Generate, ZeroVarianceMeansFixedOnly) {
  const auto g = generate(with_seed(small_spec(0.0), 5));
  EXPECT_EQ(g.true_effects.flatten(), Vector::Zero(static_cast<Eigen::Index>(g.true_effects.flat_size())));
  // two rows sharing X but not clusters get the same class probabilities
  ClusterDesign d = g.data.design;
  Matrix X(2, 4);
  X.row(0) = g.data.X.row(0);
  X.row(1) = g.data.X.row(0);
  ClusterDesign pair{d.cardinalities, {{0, 7}, {1, 3}}};
  const Matrix p = apply_link(apply_effects(pair, g.true_effects), Link::sigmoid);
  EXPECT_EQ(p(0, 0), p(1, 0));
}

TEST(Generate, LargeVarianceRecoveredAtFixedSeed) {
  ScenarioSpec s = small_spec(10.0);
  s.N = 50000;
  s.Q = {100};
  s.sigma2 = Matrix::Constant(1, 1, 10.0);
  const auto g = generate(with_seed(s, 0));
  EXPECT_NEAR(sample_variance(g.true_effects.tables[0]), 10.0, 1.5);
}

TEST(Generate, VarianceConcentratesAcrossSeeds) {
  // Mean of 40 sample variances of 100 draws: sd = 10 * sqrt(2 / 99) / sqrt(40).
  ScenarioSpec s = small_spec(10.0);
  s.N = 200;
  s.Q = {100};
  s.sigma2 = Matrix::Constant(1, 1, 10.0);
  double sum = 0.0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) sum += sample_variance(generate(with_seed(s, seed)).true_effects.tables[0]);
  EXPECT_NEAR(sum / 40.0, 10.0, 3.0 * 10.0 * std::sqrt(2.0 / 99.0) / std::sqrt(40.0));
}

TEST(Generate, BaseClassMarginalsNearUniform) {
  const auto g = generate(with_seed(find_scenario("base_desk"), 0));
  const Vector freq = g.data.Y.colwise().mean().transpose();
  for (Eigen::Index c = 0; c < 5; ++c) {
    EXPECT_GE(freq(c), 0.8 * 0.2) << "class " << c;
    EXPECT_LE(freq(c), 1.2 * 0.2) << "class " << c;
  }
}

TEST(Generate, DominantEffectsAreLearnable) {
  const auto g = generate(with_seed(find_scenario("dominant_res_desk"), 0));
  const Matrix with_b = apply_link(g.fixed_logits + apply_effects(g.data.design, g.true_effects), Link::softmax);
  const Matrix fixed_only = apply_link(g.fixed_logits, Link::softmax);
  EXPECT_GE(auc_multiclass(with_b, g.data.Y), 0.85);
  EXPECT_LE(auc_multiclass(fixed_only, g.data.Y), 0.70);
}
