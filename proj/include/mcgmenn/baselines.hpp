#pragma once

// Comparison methods that treat clustering features as ordinary inputs:
// Ignore, one-hot, target encoding, and entity embeddings. They share the
// network architecture, optimizer, batch size and early stopping with MCEM.

#include <chrono>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mcgmenn/dataset.hpp"
#include "mcgmenn/encoders.hpp"
#include "mcgmenn/mcem.hpp"
#include "mcgmenn/training.hpp"

namespace mcgmenn {

enum class Method { mcgmenn, ignore, one_hot, target, embedding };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::mcgmenn: return "mcgmenn";
    case Method::ignore: return "ignore";
    case Method::one_hot: return "ohe";
    case Method::target: return "te";
    case Method::embedding: return "embedding";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "mcgmenn") return Method::mcgmenn;
  if (s == "ignore") return Method::ignore;
  if (s == "ohe" || s == "one_hot") return Method::one_hot;
  if (s == "te" || s == "target") return Method::target;
  if (s == "embedding") return Method::embedding;
  throw ConfigError("unknown method '" + s + "' (known: mcgmenn, ignore, ohe, te, embedding)");
}

struct BaselineConfig {
  TrainerConfig trainer;
  double te_smoothing = 10.0;
};

struct BaselineModel {
  Method method = Method::ignore;
  Link link = Link::softmax;
  std::vector<std::size_t> cardinalities;
  MlpModel network;  // unused for embedding
  std::optional<TargetEncoding> target_encoding;
  std::optional<EmbeddingModel> embedding;
  int best_epoch = 0;
  double best_val_nll = std::numeric_limits<double>::infinity();
  std::vector<EpochLog> log;
};

/// Network inputs for the non-embedding methods.
inline Matrix baseline_features(const BaselineModel& model, const Matrix& X, const ClusterDesign& design) {
  switch (model.method) {
    case Method::ignore: return X;
    case Method::one_hot: {
      detail::require_shape(design.cardinalities == model.cardinalities, "design cardinalities differ from training");
      Matrix oh = one_hot_all(design);
      Matrix out(X.rows(), X.cols() + oh.cols());
      out << X, oh;
      return out;
    }
    case Method::target: {
      Matrix te = model.target_encoding->transform(design);
      Matrix out(X.rows(), X.cols() + te.cols());
      out << X, te;
      return out;
    }
    default: throw ContractError("baseline_features does not apply to this method");
  }
}

inline Matrix baseline_logits(const BaselineModel& model, const Matrix& X, const ClusterDesign& design) {
  if (model.method == Method::embedding) {
    const EmbeddingInputs in = build_embedding_inputs(design);
    const auto rows = all_rows(static_cast<std::size_t>(X.rows()));
    return predict_logits(model.embedding->network, embedding_features(*model.embedding, X, in, rows));
  }
  return predict_logits(model.network, baseline_features(model, X, design));
}

inline Matrix predict(const BaselineModel& model, const Matrix& X, const ClusterDesign& design) {
  return apply_link(baseline_logits(model, X, design), model.link);
}

/// Trains one baseline with mini-batch Adam and early stopping on validation
/// NLL; the best-epoch parameters are restored.
inline BaselineModel fit_baseline(Method method, const Dataset& train, const Dataset& val, const BaselineConfig& config,
                                  const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (method == Method::mcgmenn) throw ContractError("fit_baseline does not train MC-GMENN");
  config.trainer.validate();
  train.validate();
  if (val.rows() == 0) throw ConfigError("validation split is empty");
  val.validate();

  BaselineModel model;
  model.method = method;
  model.link = train.link;
  model.cardinalities = train.design.cardinalities;
  Rng init_rng = make_rng(config.trainer.seed, streams::init);
  Rng rng = make_rng(config.trainer.seed, streams::batches);
  const auto& arch = config.trainer.architecture;
  const double lr = config.trainer.learning_rate;

  std::function<double(const std::vector<std::size_t>&)> step;
  std::function<double()> val_nll;
  std::function<void()> save_best;
  std::function<void()> restore_best;

  Matrix train_features, val_features;
  EmbeddingInputs train_inputs, val_inputs;
  MlpModel best_network;
  std::optional<EmbeddingModel> best_embedding;

  if (method == Method::embedding) {
    model.embedding = make_embedding_model(static_cast<std::size_t>(train.X.cols()), train.design, arch,
                                           train.output_dim(), init_rng);
    train_inputs = build_embedding_inputs(train.design);
    val_inputs = build_embedding_inputs(val.design);
    step = [&](const std::vector<std::size_t>& rows) {
      auto& em = *model.embedding;
      const Matrix in = embedding_features(em, train.X, train_inputs, rows);
      ForwardResult fw = forward(em.network, in, true, rng);
      LossResult loss = loss_and_grad(fw.logits, gather_rows(train.Y, rows), train.link);
      embedding_adam_step(em, embedding_backward(em, fw.cache, loss.d_logits, train_inputs, rows), lr);
      return loss.nll;
    };
    val_nll = [&] {
      const auto rows = all_rows(val.rows());
      const Matrix in = embedding_features(*model.embedding, val.X, val_inputs, rows);
      return loss_and_grad(predict_logits(model.embedding->network, in), val.Y, val.link).nll;
    };
    save_best = [&] { best_embedding = model.embedding; };
    restore_best = [&] { model.embedding = best_embedding; };
  } else {
    if (method == Method::target)
      model.target_encoding = fit_target_encoding(train.design, train.Y, config.te_smoothing);
    train_features = baseline_features(model, train.X, train.design);
    val_features = baseline_features(model, val.X, val.design);
    model.network = make_mlp(static_cast<std::size_t>(train_features.cols()), arch, train.output_dim(), init_rng);
    step = [&](const std::vector<std::size_t>& rows) {
      ForwardResult fw = forward(model.network, gather_rows(train_features, rows), true, rng);
      LossResult loss = loss_and_grad(fw.logits, gather_rows(train.Y, rows), train.link);
      adam_step(model.network, backward(model.network, fw.cache, loss.d_logits), lr);
      return loss.nll;
    };
    val_nll = [&] { return loss_and_grad(predict_logits(model.network, val_features), val.Y, val.link).nll; };
    save_best = [&] { best_network = model.network; };
    restore_best = [&] { model.network = best_network; };
  }

  EarlyStopping stopper;
  stopper.observe(val_nll(), 0);
  save_best();
  for (int epoch = 1; epoch <= config.trainer.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double sum = 0.0;
    std::size_t batches = 0;
    for (const auto& rows : shuffled_batches(train.rows(), config.trainer.batch_size, rng)) {
      sum += step(rows);
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_nll = sum / static_cast<double>(std::max<std::size_t>(batches, 1));
    log.val_nll = val_nll();
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    model.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (!std::isfinite(log.val_nll)) throw NumericalError("non-finite validation NLL");
    if (stopper.observe(log.val_nll, epoch)) save_best();
    if (stopper.should_stop(config.trainer.patience)) break;
  }
  restore_best();
  model.best_epoch = stopper.best_epoch;
  model.best_val_nll = stopper.best;
  return model;
}

}  // namespace mcgmenn
