#include <gtest/gtest.h>

#include "support.hpp"

using namespace mcgmenn;
using namespace mcgmenn::testing;

namespace {

McemConfig quick_config(std::uint64_t seed = 0) {
  McemConfig c;
  c.trainer.architecture = {"tiny", {8}, 0.0};
  c.trainer.max_epochs = 15;
  c.trainer.patience = 5;
  c.trainer.batch_size = 64;
  c.trainer.learning_rate = 1e-2;
  c.trainer.seed = seed;
  return c;
}

// Binary data with a linear fixed part and planted cluster intercepts.
Dataset planted(std::size_t n, std::size_t clusters, double sd, std::uint64_t seed, bool unseen = false) {
  Rng rng(seed);
  Rng effects_rng(1234);
  const Vector b = random_matrix(static_cast<Eigen::Index>(clusters), 1, effects_rng, sd).col(0);
  Dataset d;
  d.link = Link::sigmoid;
  d.X = random_matrix(static_cast<Eigen::Index>(n), 3, rng);
  d.design = random_design(n, {clusters}, rng);
  d.Y.resize(static_cast<Eigen::Index>(n), 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double eta = d.X(r, 0) - 0.5 * d.X(r, 1) + b(d.design.assignments[0][i]);
    d.Y(r, 0) = u(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
  }
  if (unseen)
    for (auto& a : d.design.assignments[0]) a = kUnseenCluster;
  return d;
}

std::vector<Matrix> weights(const MlpModel& m) {
  std::vector<Matrix> out;
  for (const auto& l : m.layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

}  // namespace

TEST(Config, DefaultsAndValidation) {
  McemConfig c;
  EXPECT_EQ(c.draws_per_epoch, 2);
  EXPECT_EQ(c.burn_in, 1);
  EXPECT_EQ(c.lambda, 1.0);
  EXPECT_EQ(c.epsilon0, 0.1);
  EXPECT_NO_THROW(c.validate());
  c.burn_in = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  c.burn_in = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = McemConfig{};
  c.lambda = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EStep, OneForwardPassAndRetainedCount) {
  Rng rng(1);
  const Dataset d = random_dataset(120, 3, {7, 4}, Link::softmax, 3, rng);
  McemConfig c = quick_config();
  c.draws_per_epoch = 5;
  c.burn_in = 2;
  TrainState s = initialize(d, c);
  for (int epoch = 1; epoch <= 3; ++epoch) {
    const EStepResult e = e_step(s, d, c, epoch);
    EXPECT_EQ(e.retained.size(), 3u);
    EXPECT_EQ(e.draws.size(), 5u);
    EXPECT_EQ(s.counters.e_step_forward_passes, static_cast<std::size_t>(epoch));
  }
}

TEST(EStep, IndependentOfLambda) {
  Rng rng(2);
  const Dataset d = random_dataset(80, 2, {5}, Link::sigmoid, 1, rng);
  McemConfig a = quick_config(), b = quick_config();
  b.lambda = 37.0;
  TrainState sa = initialize(d, a), sb = initialize(d, b);
  for (int epoch = 1; epoch <= 3; ++epoch) {
    const auto ea = e_step(sa, d, a, epoch), eb = e_step(sb, d, b, epoch);
    for (std::size_t k = 0; k < ea.retained.size(); ++k) EXPECT_EQ(ea.retained[k].flatten(), eb.retained[k].flatten());
  }
}

TEST(EStep, PriorDominatedAtFloor) {
  Rng rng(3);
  const Dataset d = random_dataset(100, 2, {10, 3}, Link::softmax, 3, rng);
  McemConfig c = quick_config();
  c.draws_per_epoch = 10;
  c.burn_in = 0;
  TrainState s = initialize(d, c);
  s.variances = VarianceComponents::constant(2, 3, c.variance_floor);
  s.controller = StepSizeController::starting_at(1e-3);
  const auto e = e_step(s, d, c);
  for (const auto& b : e.retained) EXPECT_LT(b.flatten().cwiseAbs().maxCoeff(), 10.0 * std::sqrt(c.variance_floor));
}

TEST(EStep, ConjugateGaussianIntercept) {
  // y_i = f(x_i) + b + noise, noise variance 1, b ~ N(0, s2): posterior mean sum(y - f) / (n + 1/s2).
  Rng rng(4);
  Dataset d = random_dataset(20, 2, {1}, Link::identity, 1, rng);
  d.Y.array() += 0.8;
  McemConfig c = quick_config();
  TrainState s = initialize(d, c);
  const double s2 = 0.5;
  s.variances = VarianceComponents::constant(1, 1, s2);
  const Matrix f = predict_logits(s.model, d.X);
  const double post_mean = (d.Y - f).sum() / (20.0 + 1.0 / s2);
  std::vector<double> draws;
  for (int epoch = 1; epoch <= 200; ++epoch)
    for (const auto& b : e_step(s, d, c, epoch).retained) draws.push_back(b.tables[0](0, 0));
  double mean = 0.0;
  for (double v : draws) mean += v;
  mean /= static_cast<double>(draws.size());
  EXPECT_LT(std::abs(mean - post_mean), 3.0 * mcse_mean(draws));
}

TEST(Objective, LambdaZeroWithZeroOffsetsIsPlainNll) {
  Rng rng(5);
  const Matrix logits = random_matrix(8, 3, rng);
  const Matrix Y = random_targets(8, 3, Link::softmax, rng);
  std::vector<Matrix> zero{Matrix::Zero(8, 3)};
  const auto a = fixed_effects_objective(logits, Y, zero, 0.0, Link::softmax);
  const auto b = loss_and_grad(logits, Y, Link::softmax);
  EXPECT_NEAR(a.nll, b.nll, 1e-15);
  EXPECT_LT((a.d_logits - b.d_logits).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Objective, LinearInLambda) {
  Rng rng(6);
  const Matrix logits = random_matrix(8, 1, rng);
  const Matrix Y = random_targets(8, 1, Link::sigmoid, rng);
  std::vector<Matrix> offsets{random_matrix(8, 1, rng), random_matrix(8, 1, rng)};
  for (double lambda : {0.5, 1.0, 3.0}) {
    const double one = fixed_effects_objective(logits, Y, offsets, lambda, Link::sigmoid).nll;
    const double two = fixed_effects_objective(logits, Y, offsets, 2.0 * lambda, Link::sigmoid).nll;
    EXPECT_NEAR(two - one, lambda * loss_and_grad(logits, Y, Link::sigmoid).nll, 1e-12);
  }
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    for (Link link : {Link::softmax, Link::sigmoid, Link::identity}) {
      Rng rng(100 + seed);
      const Eigen::Index C = link == Link::sigmoid ? 1 : 3;
      const Matrix logits = random_matrix(8, C, rng);
      const Matrix Y = random_targets(8, C, link, rng);
      std::vector<Matrix> offsets{random_matrix(8, C, rng), random_matrix(8, C, rng), random_matrix(8, C, rng)};
      const double lambda = 0.7;
      const auto r = fixed_effects_objective(logits, Y, offsets, lambda, link);
      auto f = [&](const Vector& x) {
        return fixed_effects_objective(Eigen::Map<const Matrix>(x.data(), 8, C), Y, offsets, lambda, link).nll;
      };
      const Vector x0 = Eigen::Map<const Vector>(logits.data(), logits.size());
      EXPECT_LT(relative_error(Eigen::Map<const Vector>(r.d_logits.data(), r.d_logits.size()), numeric_gradient(f, x0)),
                1e-5)
          << to_string(link) << " seed " << seed;
    }
}

TEST(MStep, NeverEvaluatesSamplerTarget) {
  Rng rng(7);
  const Dataset d = random_dataset(300, 3, {9}, Link::sigmoid, 1, rng);
  const McemConfig c = quick_config();
  TrainState s = initialize(d, c);
  const auto e = e_step(s, d, c);
  const std::size_t evals = s.counters.target_evaluations;
  m_step_fixed(s, d, e.retained, c);
  EXPECT_EQ(s.counters.target_evaluations, evals);
  EXPECT_EQ(s.counters.m_step_target_evaluations, 0u);
  EXPECT_EQ(s.counters.m_step_batches, 5u);
  EXPECT_THROW(m_step_fixed(s, d, std::vector<RandomEffects>{}, c), ContractError);
}

TEST(MStep, VarianceExamples) {
  std::vector<RandomEffects> zero{RandomEffects::zeros(std::vector<std::size_t>{4}, 2)};
  EXPECT_EQ(m_step_variance(zero, 1e-6).sigma2, Matrix::Constant(1, 2, 1e-6));
  Rng rng(8);
  RandomEffects b = RandomEffects::zeros(std::vector<std::size_t>{10000}, 1);
  b.tables[0] = random_matrix(10000, 1, rng);
  std::vector<RandomEffects> draws{b};
  EXPECT_NEAR(m_step_variance(draws, 1e-6).sigma2(0, 0), 1.0, 0.05);
}

TEST(MStep, VarianceUpdateIgnoresNetwork) {
  Rng rng(9);
  const Dataset d = random_dataset(100, 2, {6}, Link::sigmoid, 1, rng);
  const McemConfig c = quick_config();
  TrainState s = initialize(d, c);
  const auto e = e_step(s, d, c);
  const Matrix before = m_step_variance(e.retained, c.variance_floor).sigma2;
  m_step_fixed(s, d, e.retained, c);
  EXPECT_EQ(m_step_variance(e.retained, c.variance_floor).sigma2, before);
}

TEST(Fit, EmptyValidationIsConfigError) {
  Rng rng(10);
  const Dataset d = random_dataset(50, 2, {4}, Link::sigmoid, 1, rng);
  Dataset empty = d;
  empty.X.resize(0, 2);
  empty.Y.resize(0, 1);
  empty.design.assignments[0].clear();
  EXPECT_THROW(fit(d, empty, quick_config()), ConfigError);
}

TEST(Fit, DeterministicAndHistoryLength) {
  const Dataset train = planted(400, 12, 1.0, 1), val = planted(150, 12, 1.0, 2);
  McemConfig c = quick_config(5);
  c.draws_per_epoch = 4;
  c.burn_in = 1;
  const TrainState a = fit(train, val, c), b = fit(train, val, c);
  EXPECT_EQ(weights(a.model), weights(b.model));
  EXPECT_EQ(a.variances.sigma2, b.variances.sigma2);
  EXPECT_EQ(a.effects_hat.flatten(), b.effects_hat.flatten());
  const auto epochs = a.log.size();
  EXPECT_EQ(a.retained_history.size(), epochs * 3);
  EXPECT_EQ(a.counters.e_step_forward_passes, epochs);
  EXPECT_LT((point_estimate(a.retained_history).flatten() - a.effects_hat.flatten()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fit, StepSizeNeverGrowsAndLogsEachEpoch) {
  const Dataset train = planted(300, 10, 1.0, 3), val = planted(100, 10, 1.0, 4);
  std::vector<EpochLog> seen;
  FitCallbacks cb;
  cb.on_epoch = [&](const EpochLog& e) { seen.push_back(e); };
  const TrainState s = fit(train, val, quick_config(), cb);
  ASSERT_EQ(seen.size(), s.log.size());
  for (std::size_t i = 1; i < seen.size(); ++i) EXPECT_LE(seen[i].epsilon, seen[i - 1].epsilon);
  const json j = to_json(seen.front(), s.feature_names);
  for (const char* key : {"epoch", "train_nll", "val_nll", "epsilon", "accept_rate", "sigma2", "seconds"})
    EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Fit, BestValidationNotWorseThanStart) {
  const Dataset train = planted(500, 15, 1.5, 5), val = planted(200, 15, 1.5, 6);
  const McemConfig c = quick_config(2);
  const TrainState s = fit(train, val, c);
  TrainState start = initialize(train, c);
  const double epoch0 = evaluate_nll(start.model, start.effects_hat, val);
  EXPECT_LE(s.best_val_nll, epoch0);
  EXPECT_GE(s.best_epoch, 0);
}

TEST(Fit, LargeLambdaHelpsUnseenClusters) {
  const Dataset train = planted(800, 20, 2.0, 7), val = planted(200, 20, 2.0, 8);
  const Dataset heldout = planted(400, 20, 2.0, 9, true);
  McemConfig big = quick_config(3), zero = quick_config(3);
  big.lambda = 1e6;
  zero.lambda = 0.0;
  const TrainState a = fit(train, val, big), b = fit(train, val, zero);
  const RandomEffects none = RandomEffects::zeros(a.cardinalities, 1);
  EXPECT_LE(evaluate_nll(a.model, none, heldout), evaluate_nll(b.model, none, heldout));
}

TEST(Predict, HandBuiltLogisticExample) {
  TrainState s;
  s.link = Link::sigmoid;
  s.model.layers.push_back({Matrix::Constant(1, 1, 2.0), Vector::Constant(1, -1.0)});
  s.cardinalities = {2};
  s.classes = 1;
  s.effects_hat = RandomEffects::zeros(s.cardinalities, 1);
  s.effects_hat.tables[0] << 0.5, -1.5;
  Matrix X(3, 1);
  X << 0.0, 1.0, 2.0;
  const ClusterDesign design{{2}, {{0, 1, kUnseenCluster}}};
  const Matrix p = predict(s, X, design);
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  EXPECT_NEAR(p(0, 0), sig(-1.0 + 0.5), 1e-15);
  EXPECT_NEAR(p(1, 0), sig(1.0 - 1.5), 1e-15);
  EXPECT_NEAR(p(2, 0), sig(3.0), 1e-15);
}

TEST(Predict, ZeroOrUnseenEffectsMatchNetwork) {
  Rng rng(11);
  const Dataset d = random_dataset(40, 3, {5, 2}, Link::softmax, 4, rng);
  TrainState s = initialize(d, quick_config());
  const Matrix plain = apply_link(predict_logits(s.model, d.X), Link::softmax);
  EXPECT_LT((predict(s, d.X, d.design) - plain).cwiseAbs().maxCoeff(), 1e-15);

  s.effects_hat.tables[0] = random_matrix(5, 4, rng);
  s.effects_hat.tables[1] = random_matrix(2, 4, rng);
  ClusterDesign unseen = d.design;
  for (auto& a : unseen.assignments)
    for (auto& v : a) v = kUnseenCluster;
  EXPECT_LT((predict(s, d.X, unseen) - plain).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(predict(s, Matrix::Zero(40, 2), d.design), ShapeError);
}
