#pragma once

// One trained model of any method, its run configuration, and checkpoint
// serialization.

#include <chrono>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mcgmenn/baselines.hpp"
#include "mcgmenn/io.hpp"
#include "mcgmenn/mcem.hpp"
#include "mcgmenn/metrics.hpp"

namespace mcgmenn {

/// Method choice plus hyperparameters. The trainer block is shared by every
/// method so comparisons use one architecture and optimizer.
struct RunConfig {
  Method method = Method::mcgmenn;
  McemConfig mcem;
  double te_smoothing = 10.0;

  const TrainerConfig& trainer() const { return mcem.trainer; }
  BaselineConfig baseline() const { return {mcem.trainer, te_smoothing}; }
  void validate() const {
    mcem.validate();
    if (!(te_smoothing >= 0.0)) throw ConfigError("te_smoothing must be non-negative");
  }
};

inline json to_json(const RunConfig& c) {
  json m = to_json(c.mcem);
  json trainer = m["trainer"];
  m.erase("trainer");
  return {{"method", to_string(c.method)}, {"trainer", trainer}, {"mcem", m}, {"te_smoothing", c.te_smoothing}};
}

/// Accepts {"method", "trainer": {...}, "mcem": {...}, "te_smoothing"}; any
/// key may be omitted.
inline RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");
  RunConfig c;
  try {
    if (j.contains("method")) c.method = method_from_string(j["method"].get<std::string>());
    if (j.contains("mcem")) update_from_json(c.mcem, j["mcem"]);
    if (j.contains("trainer")) update_from_json(c.mcem.trainer, j["trainer"]);
    if (j.contains("te_smoothing")) c.te_smoothing = j["te_smoothing"].get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad run configuration: ") + e.what());
  }
  c.validate();
  return c;
}

/// What MC-GMENN keeps after training.
struct MixedModel {
  MlpModel network;
  VarianceComponents variances;
  RandomEffects effects_hat;
  RandomEffects effects_sd;
  std::size_t retained_draws = 0;
  int epochs_run = 0;
};

struct TrainedModel {
  Method method = Method::mcgmenn;
  Link link = Link::softmax;
  std::vector<std::string> feature_names;
  std::optional<MixedModel> mixed;
  std::optional<BaselineModel> baseline;
  int best_epoch = 0;
  double best_val_nll = 0.0;
  std::vector<EpochLog> log;
  double seconds = 0.0;

  std::optional<Matrix> sigma2() const {
    if (mixed) return mixed->variances.sigma2;
    return std::nullopt;
  }
};

inline MixedModel mixed_from_state(const TrainState& s) {
  MixedModel m;
  m.network = s.model;
  m.variances = s.variances;
  m.effects_hat = s.effects_hat;
  m.effects_sd = s.retained_history.empty() ? RandomEffects::zeros(s.cardinalities, s.classes)
                                            : posterior_sd(s.retained_history);
  m.retained_draws = s.retained_history.size();
  m.epochs_run = s.epoch;
  return m;
}

/// Trains `config.method` on `train`, early-stopping on `val`.
inline TrainedModel train_model(const Dataset& train, const Dataset& val, const RunConfig& config,
                                const FitCallbacks& callbacks = {}) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainedModel out;
  out.method = config.method;
  out.link = train.link;
  out.feature_names = train.feature_names;
  if (config.method == Method::mcgmenn) {
    TrainState s = fit(train, val, config.mcem, callbacks);
    out.mixed = mixed_from_state(s);
    out.best_epoch = s.best_epoch;
    out.best_val_nll = s.best_val_nll;
    out.log = std::move(s.log);
  } else {
    BaselineModel b = fit_baseline(config.method, train, val, config.baseline(), callbacks.on_epoch);
    out.best_epoch = b.best_epoch;
    out.best_val_nll = b.best_val_nll;
    out.log = b.log;
    out.baseline = std::move(b);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline Matrix predict(const TrainedModel& m, const Matrix& X, const ClusterDesign& design) {
  if (m.mixed) {
    detail::require_shape(static_cast<std::size_t>(X.cols()) == m.mixed->network.input_dim(),
                          "input has " + std::to_string(X.cols()) + " columns, model expects " +
                              std::to_string(m.mixed->network.input_dim()));
    return apply_link(predict_logits(m.mixed->network, X) + apply_effects(design, m.mixed->effects_hat), m.link);
  }
  if (!m.baseline) throw ContractError("trained model holds no parameters");
  return predict(*m.baseline, X, design);
}

inline Matrix predict(const TrainedModel& m, const Dataset& d) { return predict(m, d.X, d.design); }

inline double auc(const TrainedModel& m, const Dataset& d) { return auc_multiclass(predict(m, d), d.Y); }

inline json log_to_json(const TrainedModel& m) {
  json arr = json::array();
  for (const auto& e : m.log) {
    json j = to_json(e, m.feature_names);
    if (!m.mixed) j.erase("sigma2"), j.erase("epsilon"), j.erase("accept_rate");
    arr.push_back(j);
  }
  return arr;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline json effects_to_json(const RandomEffects& b) {
  json arr = json::array();
  for (const auto& t : b.tables) arr.push_back(matrix_to_json(t));
  return arr;
}

inline RandomEffects effects_from_json(const json& j, std::size_t classes) {
  RandomEffects b;
  for (const auto& t : j) b.tables.push_back(matrix_from_json(t, static_cast<Eigen::Index>(classes)));
  return b;
}

inline json to_json(const TrainedModel& m) {
  json j = {{"format", "mcgmenn-checkpoint"},
            {"version", 1},
            {"method", to_string(m.method)},
            {"link", to_string(m.link)},
            {"feature_names", m.feature_names},
            {"best_epoch", m.best_epoch},
            {"best_val_nll", m.best_val_nll},
            {"seconds", m.seconds}};
  if (m.mixed) {
    const auto& x = *m.mixed;
    j["network"] = to_json(x.network);
    j["sigma2"] = matrix_to_json(x.variances.sigma2);
    j["variance_floor"] = x.variances.floor;
    j["effects_hat"] = effects_to_json(x.effects_hat);
    j["effects_sd"] = effects_to_json(x.effects_sd);
    j["retained_draws"] = x.retained_draws;
    j["epochs_run"] = x.epochs_run;
  } else if (m.baseline) {
    const auto& b = *m.baseline;
    j["cardinalities"] = b.cardinalities;
    if (b.embedding)
      j["embedding"] = to_json(*b.embedding);
    else
      j["network"] = to_json(b.network);
    if (b.target_encoding) j["target_encoding"] = to_json(*b.target_encoding);
  }
  return j;
}

inline TrainedModel trained_model_from_json(const json& j) {
  try {
    if (j.value("format", std::string()) != "mcgmenn-checkpoint") throw ConfigError("not a checkpoint file");
    TrainedModel m;
    m.method = method_from_string(j.at("method").get<std::string>());
    m.link = link_from_string(j.at("link").get<std::string>());
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.best_epoch = j.at("best_epoch").get<int>();
    m.best_val_nll = j.at("best_val_nll").get<double>();
    m.seconds = j.value("seconds", 0.0);
    if (m.method == Method::mcgmenn) {
      MixedModel x;
      x.network = mlp_from_json(j.at("network"));
      const std::size_t classes = x.network.output_dim();
      x.variances.sigma2 = matrix_from_json(j.at("sigma2"), static_cast<Eigen::Index>(classes));
      x.variances.floor = j.at("variance_floor").get<double>();
      x.effects_hat = effects_from_json(j.at("effects_hat"), classes);
      x.effects_sd = effects_from_json(j.at("effects_sd"), classes);
      x.retained_draws = j.at("retained_draws").get<std::size_t>();
      x.epochs_run = j.at("epochs_run").get<int>();
      detail::require_shape(x.effects_hat.num_features() == m.feature_names.size() &&
                                x.effects_sd.num_features() == m.feature_names.size() &&
                                static_cast<std::size_t>(x.variances.sigma2.rows()) == m.feature_names.size(),
                            "checkpoint effect tables do not match its feature list");
      m.mixed = std::move(x);
    } else {
      BaselineModel b;
      b.method = m.method;
      b.link = m.link;
      b.cardinalities = j.at("cardinalities").get<std::vector<std::size_t>>();
      b.best_epoch = m.best_epoch;
      b.best_val_nll = m.best_val_nll;
      if (m.method == Method::embedding)
        b.embedding = embedding_model_from_json(j.at("embedding"));
      else
        b.network = mlp_from_json(j.at("network"));
      if (j.contains("target_encoding")) b.target_encoding = target_encoding_from_json(j.at("target_encoding"));
      if (m.method == Method::target && !b.target_encoding) throw ConfigError("target-encoding checkpoint lacks its encoder");
      m.baseline = std::move(b);
    }
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid checkpoint: ") + e.what());
  }
}

/// Checkpoint file contents: the model plus the preprocessing fitted on the
/// training CSV.
inline json checkpoint_json(const TrainedModel& m, const Preprocessor& p, const RunConfig& config) {
  json j = to_json(m);
  j["preprocessor"] = to_json(p);
  j["config"] = to_json(config);
  return j;
}

/// Random-effects export with one row per (feature, cluster, class).
/// `cluster_ids` maps table rows back to the original level labels.
inline void write_effects_csv(std::ostream& os, const TrainedModel& m,
                              const std::vector<std::vector<std::string>>& cluster_ids = {}) {
  if (!m.mixed) throw ContractError("only MC-GMENN models have random effects");
  const auto& x = *m.mixed;
  os << "feature_name,cluster_id,class_index,b_hat,posterior_sd,sigma2_hat\n";
  for (std::size_t l = 0; l < x.effects_hat.num_features(); ++l) {
    const auto& t = x.effects_hat.tables[l];
    const auto& sd = x.effects_sd.tables[l];
    const std::string name = l < m.feature_names.size() ? m.feature_names[l] : "feature" + std::to_string(l);
    for (Eigen::Index q = 0; q < t.rows(); ++q) {
      const std::string id = l < cluster_ids.size() && static_cast<std::size_t>(q) < cluster_ids[l].size()
                                 ? cluster_ids[l][static_cast<std::size_t>(q)]
                                 : std::to_string(q);
      for (Eigen::Index c = 0; c < t.cols(); ++c)
        os << detail::csv_escape(name) << ',' << detail::csv_escape(id) << ',' << c << ',' << format_double(t(q, c))
           << ',' << format_double(sd(q, c)) << ',' << format_double(x.variances.sigma2(static_cast<Eigen::Index>(l), c))
           << '\n';
    }
  }
}

/// Histogram of the estimated effects per feature and class; counts sum to Q_l.
inline json effect_histograms(const TrainedModel& m, std::size_t bins = 20) {
  if (!m.mixed) return json::array();
  detail::require(bins >= 1, "histogram needs at least one bin");
  json out = json::array();
  const auto& b = m.mixed->effects_hat;
  for (std::size_t l = 0; l < b.num_features(); ++l)
    for (Eigen::Index c = 0; c < b.tables[l].cols(); ++c) {
      const auto col = b.tables[l].col(c);
      double lo = col.size() ? col.minCoeff() : 0.0, hi = col.size() ? col.maxCoeff() : 0.0;
      if (!(hi > lo)) lo -= 0.5, hi += 0.5;
      std::vector<double> edges(bins + 1);
      for (std::size_t k = 0; k <= bins; ++k) edges[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
      std::vector<std::size_t> counts(bins, 0);
      for (Eigen::Index q = 0; q < col.size(); ++q) {
        auto k = static_cast<std::size_t>((col(q) - lo) / (hi - lo) * static_cast<double>(bins));
        ++counts[std::min(k, bins - 1)];
      }
      out.push_back({{"feature", l < m.feature_names.size() ? m.feature_names[l] : "feature" + std::to_string(l)},
                     {"class_index", c},
                     {"bin_edges", edges},
                     {"counts", counts}});
    }
  return out;
}

}  // namespace mcgmenn
