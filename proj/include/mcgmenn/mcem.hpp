#pragma once

// Monte Carlo EM training of a mixed effects network.
//
// Each epoch runs:
//   E-step: one inference forward pass of the network over the training rows,
//           then K NUTS draws of the flattened random effects under the
//           conditional posterior; the first R draws are discarded.
//   M-step: one mini-batch Adam pass on
//             (1/(K-R)) sum_k NLL(Y | f(X) + Z B_k) + lambda * NLL(Y | f(X)),
//           and the closed-form variance update from the retained draws.
// The chain warm-starts from the previous epoch's final position.

#include <chrono>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mcgmenn/dataset.hpp"
#include "mcgmenn/errors.hpp"
#include "mcgmenn/neural_net.hpp"
#include "mcgmenn/random_effects.hpp"
#include "mcgmenn/sampler.hpp"
#include "mcgmenn/training.hpp"

namespace mcgmenn {

struct McemConfig {
  TrainerConfig trainer;
  int draws_per_epoch = 2;  // K
  int burn_in = 1;          // R
  double lambda = 1.0;
  double epsilon0 = 0.1;
  int max_tree_depth = 10;
  double initial_sigma2 = 1.0;
  double variance_floor = 1e-6;
  // Post-fit phase that keeps running E-steps and variance updates only.
  bool refine_variance = false;
  int max_refine_epochs = 500;
  double refine_tolerance = 1e-3;
  int refine_window = 5;

  int retained_per_epoch() const { return draws_per_epoch - burn_in; }

  void validate() const {
    trainer.validate();
    if (burn_in < 0 || burn_in >= draws_per_epoch) throw ConfigError("need 0 <= R < K");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (!(epsilon0 > 0.0)) throw ConfigError("epsilon0 must be positive");
    if (max_tree_depth < 1) throw ConfigError("max_tree_depth must be at least 1");
    if (!(initial_sigma2 > 0.0) || !(variance_floor > 0.0)) throw ConfigError("variances must be positive");
    if (refine_window < 1 || max_refine_epochs < 0) throw ConfigError("bad variance refinement settings");
  }
};

inline json to_json(const McemConfig& c) {
  return {{"trainer", to_json(c.trainer)},
          {"K", c.draws_per_epoch},
          {"R", c.burn_in},
          {"lambda", c.lambda},
          {"epsilon0", c.epsilon0},
          {"max_tree_depth", c.max_tree_depth},
          {"initial_sigma2", c.initial_sigma2},
          {"variance_floor", c.variance_floor},
          {"refine_variance", c.refine_variance},
          {"max_refine_epochs", c.max_refine_epochs},
          {"refine_tolerance", c.refine_tolerance},
          {"refine_window", c.refine_window}};
}

/// Reads MCEM keys, plus trainer keys either nested under "trainer" or at top level.
inline void update_from_json(McemConfig& c, const json& j) {
  try {
    update_from_json(c.trainer, j);
    if (j.contains("trainer")) update_from_json(c.trainer, j["trainer"]);
    if (j.contains("K")) c.draws_per_epoch = j["K"].get<int>();
    if (j.contains("R")) c.burn_in = j["R"].get<int>();
    if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
    if (j.contains("epsilon0")) c.epsilon0 = j["epsilon0"].get<double>();
    if (j.contains("max_tree_depth")) c.max_tree_depth = j["max_tree_depth"].get<int>();
    if (j.contains("initial_sigma2")) c.initial_sigma2 = j["initial_sigma2"].get<double>();
    if (j.contains("variance_floor")) c.variance_floor = j["variance_floor"].get<double>();
    if (j.contains("refine_variance")) c.refine_variance = j["refine_variance"].get<bool>();
    if (j.contains("max_refine_epochs")) c.max_refine_epochs = j["max_refine_epochs"].get<int>();
    if (j.contains("refine_tolerance")) c.refine_tolerance = j["refine_tolerance"].get<double>();
    if (j.contains("refine_window")) c.refine_window = j["refine_window"].get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad MCEM configuration: ") + e.what());
  }
}

struct EpochLog {
  int epoch = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
  double epsilon = 0.0;
  double accept_rate = 0.0;
  Matrix sigma2;
  double seconds = 0.0;
  bool refinement = false;
};

inline json to_json(const EpochLog& e, std::span<const std::string> feature_names = {}) {
  json s = json::object();
  for (Eigen::Index l = 0; l < e.sigma2.rows(); ++l)
    for (Eigen::Index c = 0; c < e.sigma2.cols(); ++c) {
      const std::string name = static_cast<std::size_t>(l) < feature_names.size()
                                   ? feature_names[static_cast<std::size_t>(l)]
                                   : "feature" + std::to_string(l);
      s[name + "/" + std::to_string(c)] = e.sigma2(l, c);
    }
  json j = {{"epoch", e.epoch},     {"train_nll", e.train_nll},     {"val_nll", e.val_nll},
            {"epsilon", e.epsilon}, {"accept_rate", e.accept_rate}, {"sigma2", s},
            {"seconds", e.seconds}};
  if (e.refinement) j["phase"] = "variance_refinement";
  return j;
}

/// Call counts used to verify the per-epoch cost structure.
struct Instrumentation {
  std::size_t e_step_forward_passes = 0;
  std::size_t target_evaluations = 0;
  std::size_t m_step_target_evaluations = 0;
  std::size_t m_step_batches = 0;
};

struct TrainState {
  MlpModel model;
  ChainState chain;
  StepSizeController controller;
  VarianceComponents variances;
  std::vector<RandomEffects> retained_history;
  RandomEffects effects_hat;
  std::vector<std::size_t> cardinalities;
  std::size_t classes = 0;
  Link link = Link::softmax;
  int epoch = 0;
  int best_epoch = 0;
  double best_val_nll = std::numeric_limits<double>::infinity();
  std::vector<EpochLog> log;
  std::vector<DrawTraceRow> trace;
  Instrumentation counters;
  Rng rng;  // mini-batch order and dropout masks
  std::vector<std::string> feature_names;
};

struct FitCallbacks {
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(const DrawTraceRow&)> on_draw;
};

/// Fresh state for `train`: He-initialized network, zero effects, sigma^2 at
/// the configured initial value, step size at epsilon0.
inline TrainState initialize(const Dataset& train, const McemConfig& config) {
  config.validate();
  train.validate();
  TrainState s;
  Rng init_rng = make_rng(config.trainer.seed, streams::init);
  s.model = make_mlp(static_cast<std::size_t>(train.X.cols()), config.trainer.architecture, train.output_dim(), init_rng);
  s.cardinalities = train.design.cardinalities;
  s.classes = train.output_dim();
  s.link = train.link;
  s.feature_names.clear();
  for (std::size_t l = 0; l < train.design.num_features(); ++l) s.feature_names.push_back(train.feature_name(l));
  s.variances = VarianceComponents::constant(train.design.num_features(), s.classes, config.initial_sigma2,
                                             config.variance_floor);
  s.controller = StepSizeController::starting_at(config.epsilon0);
  s.effects_hat = RandomEffects::zeros(s.cardinalities, s.classes);
  s.chain.position = Vector::Zero(static_cast<Eigen::Index>(s.effects_hat.flat_size()));
  s.chain.rng = make_rng(config.trainer.seed, streams::chain);
  s.rng = make_rng(config.trainer.seed, streams::batches);
  return s;
}

struct EStepResult {
  std::vector<RandomEffects> retained;
  std::vector<DrawStats> draws;
  double accept_rate = 0.0;
  bool halved = false;
  bool retried = false;
};

/// K NUTS draws of the random effects given the current network and variances.
inline EStepResult e_step(TrainState& state, const Dataset& train, const McemConfig& config, int epoch = 0,
                          const FitCallbacks* callbacks = nullptr) {
  const Matrix fixed_logits = predict_logits(state.model, train.X);
  ++state.counters.e_step_forward_passes;
  EffectsPosterior posterior(fixed_logits, train.Y, train.design, state.variances, train.link);
  LogDensityFn target = [&](const Vector& q, Vector& g) {
    ++state.counters.target_evaluations;
    return posterior(q, g);
  };
  NutsConfig nuts;
  nuts.max_depth = config.max_tree_depth;

  refresh(state.chain, target);
  const ChainState start = state.chain;
  EStepResult out;
  for (int attempt = 0;; ++attempt) {
    out.draws.clear();
    out.retained.clear();
    bool all_stuck = true;
    for (int k = 0; k < config.draws_per_epoch; ++k) {
      DrawStats st = nuts_draw(state.chain, target, state.controller, nuts);
      all_stuck = all_stuck && st.divergent && st.n_leapfrog == 1;
      out.draws.push_back(st);
      if (k >= config.burn_in)
        out.retained.push_back(RandomEffects::unflatten(state.chain.position, state.cardinalities, state.classes));
    }
    if (!all_stuck) break;
    if (attempt == 1) throw NumericalError("sampler diverged on every draw at epsilon=" + std::to_string(state.controller.epsilon));
    state.chain = start;
    state.controller.halve();
    out.retried = true;
  }
  for (std::size_t k = 0; k < out.draws.size(); ++k) {
    DrawTraceRow row{epoch, static_cast<int>(k), out.draws[k]};
    if (callbacks && callbacks->on_draw) callbacks->on_draw(row);
  }
  out.accept_rate = state.chain.accept_sum / static_cast<double>(std::max<std::size_t>(state.chain.propose_count, 1));
  out.halved = adapt_step_size(state.controller, state.chain);
  return out;
}

/// Fixed-effects objective on one batch: mean NLL over the offset sets plus
/// lambda times the NLL with all effects at zero, and its gradient w.r.t. the
/// network logits.
inline LossResult fixed_effects_objective(const Matrix& logits, const Matrix& Y, std::span<const Matrix> offsets,
                                          double lambda, Link link) {
  if (offsets.empty()) throw ContractError("fixed-effects objective needs at least one retained draw");
  LossResult total;
  total.d_logits = Matrix::Zero(logits.rows(), logits.cols());
  const double w = 1.0 / static_cast<double>(offsets.size());
  for (const auto& off : offsets) {
    detail::require_shape(off.rows() == logits.rows() && off.cols() == logits.cols(), "offset shape mismatch");
    LossResult r = loss_and_grad(logits + off, Y, link);
    total.nll += w * r.nll;
    total.d_logits += w * r.d_logits;
  }
  if (lambda != 0.0) {
    LossResult r = loss_and_grad(logits, Y, link);
    total.nll += lambda * r.nll;
    total.d_logits += lambda * r.d_logits;
  }
  return total;
}

/// One pass of mini-batch Adam over the training rows. Returns the mean
/// batch objective.
inline double m_step_fixed(TrainState& state, const Dataset& train, std::span<const RandomEffects> retained,
                           const McemConfig& config) {
  if (retained.empty()) throw ContractError("M-step needs the retained draws of the current epoch");
  const std::size_t evals_before = state.counters.target_evaluations;
  std::vector<Matrix> full_offsets;
  for (const auto& b : retained) full_offsets.push_back(apply_effects(train.design, b));

  double sum = 0.0;
  std::size_t batches = 0;
  for (const auto& rows : shuffled_batches(train.rows(), config.trainer.batch_size, state.rng)) {
    const Matrix xb = gather_rows(train.X, rows);
    const Matrix yb = gather_rows(train.Y, rows);
    std::vector<Matrix> offsets;
    offsets.reserve(full_offsets.size());
    for (const auto& off : full_offsets) offsets.push_back(gather_rows(off, rows));
    ForwardResult fw = forward(state.model, xb, true, state.rng);
    LossResult obj = fixed_effects_objective(fw.logits, yb, offsets, config.lambda, train.link);
    if (!std::isfinite(obj.nll)) throw NumericalError("non-finite M-step loss");
    adam_step(state.model, backward(state.model, fw.cache, obj.d_logits), config.trainer.learning_rate);
    sum += obj.nll;
    ++batches;
    ++state.counters.m_step_batches;
  }
  state.counters.m_step_target_evaluations += state.counters.target_evaluations - evals_before;
  return sum / static_cast<double>(std::max<std::size_t>(batches, 1));
}

/// Closed-form variance update; independent of the network.
inline VarianceComponents m_step_variance(std::span<const RandomEffects> retained, double floor) {
  return variance_update(retained, floor);
}

/// Data NLL on `data` with the network in inference mode and `effects` added.
inline double evaluate_nll(const MlpModel& model, const RandomEffects& effects, const Dataset& data) {
  const Matrix logits = predict_logits(model, data.X) + apply_effects(data.design, effects);
  return loss_and_grad(logits, data.Y, data.link).nll;
}

/// Extra E-steps with variance updates only, until every component moves by
/// less than the tolerance for `refine_window` consecutive epochs.
inline void refine_variances(TrainState& state, const Dataset& train, const McemConfig& config,
                             const FitCallbacks& callbacks = {}) {
  int calm = 0;
  for (int i = 0; i < config.max_refine_epochs && calm < config.refine_window; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    ++state.epoch;
    EStepResult e = e_step(state, train, config, state.epoch, &callbacks);
    VarianceComponents next = m_step_variance(e.retained, config.variance_floor);
    const double delta = (next.sigma2 - state.variances.sigma2).cwiseAbs().maxCoeff();
    calm = delta < config.refine_tolerance ? calm + 1 : 0;
    state.variances = std::move(next);
    EpochLog log;
    log.epoch = state.epoch;
    log.epsilon = state.controller.epsilon;
    log.accept_rate = e.accept_rate;
    log.sigma2 = state.variances.sigma2;
    log.train_nll = std::numeric_limits<double>::quiet_NaN();
    log.val_nll = std::numeric_limits<double>::quiet_NaN();
    log.refinement = true;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state.log.push_back(log);
    if (callbacks.on_epoch) callbacks.on_epoch(log);
  }
}

/// Trains network, variances, and random effects with early stopping on
/// validation NLL (data term only, effects at the running point estimate).
///
/// The best-epoch network is restored at the end; the variances are those of
/// the last epoch run, and the effects estimate is the mean of every retained
/// draw.
inline TrainState fit(const Dataset& train, const Dataset& val, const McemConfig& config,
                      const FitCallbacks& callbacks = {}) {
  if (val.rows() == 0) throw ConfigError("validation split is empty");
  val.validate();
  detail::require_shape(val.X.cols() == train.X.cols() && val.Y.cols() == train.Y.cols() &&
                            val.design.cardinalities == train.design.cardinalities,
                        "validation split does not match training split");
  TrainState state = initialize(train, config);

  RandomEffects running_sum = RandomEffects::zeros(state.cardinalities, state.classes);
  EarlyStopping stopper;
  stopper.observe(evaluate_nll(state.model, state.effects_hat, val), 0);
  MlpModel best_model = state.model;

  for (int epoch = 1; epoch <= config.trainer.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    state.epoch = epoch;
    EStepResult e = e_step(state, train, config, epoch, &callbacks);
    const double train_nll = m_step_fixed(state, train, e.retained, config);
    state.variances = m_step_variance(e.retained, config.variance_floor);
    for (auto& b : e.retained) {
      for (std::size_t l = 0; l < b.tables.size(); ++l) running_sum.tables[l] += b.tables[l];
      state.retained_history.push_back(std::move(b));
    }
    for (std::size_t l = 0; l < running_sum.tables.size(); ++l)
      state.effects_hat.tables[l] = running_sum.tables[l] / static_cast<double>(state.retained_history.size());

    EpochLog log;
    log.epoch = epoch;
    log.train_nll = train_nll;
    log.val_nll = evaluate_nll(state.model, state.effects_hat, val);
    log.epsilon = state.controller.epsilon;
    log.accept_rate = e.accept_rate;
    log.sigma2 = state.variances.sigma2;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state.log.push_back(log);
    if (callbacks.on_epoch) callbacks.on_epoch(log);

    if (!std::isfinite(log.val_nll)) throw NumericalError("non-finite validation NLL");
    if (stopper.observe(log.val_nll, epoch)) best_model = state.model;
    if (stopper.should_stop(config.trainer.patience)) break;
  }

  state.model = std::move(best_model);
  state.best_epoch = stopper.best_epoch;
  state.best_val_nll = stopper.best;
  if (!state.retained_history.empty()) state.effects_hat = point_estimate(state.retained_history);
  if (config.refine_variance) refine_variances(state, train, config, callbacks);
  return state;
}

/// Response-scale predictions; unseen clusters contribute zero offset.
inline Matrix predict(const TrainState& state, const Matrix& X, const ClusterDesign& design) {
  return apply_link(predict_logits(state.model, X) + apply_effects(design, state.effects_hat), state.link);
}

}  // namespace mcgmenn
