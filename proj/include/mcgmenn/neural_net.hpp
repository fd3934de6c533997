#pragma once

// Dense feed-forward network used as the fixed-effects function: forward
// pass with cached activations, exact backward pass, inverted dropout, Adam,
// and the negative log-likelihood losses for the three supported links.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "mcgmenn/errors.hpp"

namespace mcgmenn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;
using json = nlohmann::json;

enum class Activation { relu };

/// Maps logits to the response scale.
enum class Link { identity, sigmoid, softmax };

inline std::string to_string(Link link) {
  switch (link) {
    case Link::identity: return "identity";
    case Link::sigmoid: return "sigmoid";
    case Link::softmax: return "softmax";
  }
  return "?";
}

inline Link link_from_string(const std::string& s) {
  if (s == "identity") return Link::identity;
  if (s == "sigmoid") return Link::sigmoid;
  if (s == "softmax") return Link::softmax;
  throw ConfigError("unknown link function '" + s + "'");
}

struct DenseLayer {
  Matrix weight;  // in x out
  Vector bias;    // out
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m_weight, v_weight;
  std::vector<Vector> m_bias, v_bias;
  std::int64_t step = 0;
};

namespace detail {
inline std::uint64_t next_model_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

/// Feed-forward network with ReLU hidden layers and a linear output layer.
///
/// `instance_id` and `version` tie forward caches to the parameters they were
/// computed from; `version` increases on every parameter update.
struct MlpModel {
  std::vector<DenseLayer> layers;
  Activation hidden_activation = Activation::relu;
  double dropout_rate = 0.0;
  AdamState adam;
  std::uint64_t instance_id = detail::next_model_id();
  std::uint64_t version = 0;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }
};

/// Zero Adam moments matching the current parameter shapes.
inline void reset_adam(MlpModel& model) {
  model.adam = AdamState{};
  for (const auto& l : model.layers) {
    model.adam.m_weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    model.adam.v_weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    model.adam.m_bias.push_back(Vector::Zero(l.bias.size()));
    model.adam.v_bias.push_back(Vector::Zero(l.bias.size()));
  }
}

inline void validate(const MlpModel& model) {
  detail::require_shape(!model.layers.empty(), "model has no layers");
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    detail::require_shape(l.bias.size() == l.weight.cols(),
                          "layer " + std::to_string(i) + " bias length differs from output width");
    if (i + 1 < model.layers.size()) {
      detail::require_shape(l.weight.cols() == model.layers[i + 1].weight.rows(),
                            "layer " + std::to_string(i) + " output does not feed layer " +
                                std::to_string(i + 1));
    }
  }
  if (!(model.dropout_rate >= 0.0 && model.dropout_rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1)");
  const auto& a = model.adam;
  detail::require_shape(a.m_weight.size() == model.layers.size() &&
                            a.v_weight.size() == model.layers.size() &&
                            a.m_bias.size() == model.layers.size() &&
                            a.v_bias.size() == model.layers.size(),
                        "Adam state does not match layer count");
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    detail::require_shape(a.m_weight[i].rows() == l.weight.rows() && a.m_weight[i].cols() == l.weight.cols() &&
                              a.v_weight[i].rows() == l.weight.rows() &&
                              a.v_weight[i].cols() == l.weight.cols() && a.m_bias[i].size() == l.bias.size() &&
                              a.v_bias[i].size() == l.bias.size(),
                          "Adam moments differ in shape from parameters");
  }
}

/// Hidden widths and dropout shared by every method in a comparison.
struct ArchitectureSpec {
  std::string name = "custom";
  std::vector<std::size_t> hidden;
  double dropout = 0.0;

  /// Four ReLU layers of 100, 50, 25 and 12 units with 25% dropout.
  static ArchitectureSpec paper_sim() { return {"paper_sim", {100, 50, 25, 12}, 0.25}; }
  static ArchitectureSpec small() { return {"small", {32, 16}, 0.0}; }
};

inline ArchitectureSpec architecture_preset(const std::string& name) {
  if (name == "paper_sim") return ArchitectureSpec::paper_sim();
  if (name == "small") return ArchitectureSpec::small();
  throw ConfigError("unknown architecture preset '" + name + "' (known: paper_sim, small)");
}

/// Builds a network with He-uniform weights and zero biases.
inline MlpModel make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t output_dim,
                         double dropout, Rng& rng) {
  if (input_dim == 0 || output_dim == 0) throw ConfigError("network input and output widths must be positive");
  MlpModel model;
  model.dropout_rate = dropout;
  std::size_t fan_in = input_dim;
  auto add_layer = [&](std::size_t out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-limit, limit);
    DenseLayer layer{Matrix(fan_in, out), Vector::Zero(out)};
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = u(rng);
    model.layers.push_back(std::move(layer));
    fan_in = out;
  };
  for (auto h : hidden) add_layer(h);
  add_layer(output_dim);
  reset_adam(model);
  validate(model);
  return model;
}

inline MlpModel make_mlp(std::size_t input_dim, const ArchitectureSpec& arch, std::size_t output_dim, Rng& rng) {
  return make_mlp(input_dim, arch.hidden, output_dim, arch.dropout, rng);
}

struct ForwardCache {
  std::vector<Matrix> inputs;  // inputs[i] feeds layer i (after activation and dropout)
  std::vector<Matrix> pre;     // pre-activations of the hidden layers
  std::vector<Matrix> masks;   // dropout masks, already scaled by 1/(1-p); empty when not training
  bool training = false;
  std::uint64_t model_id = 0;
  std::uint64_t model_version = 0;
};

struct ForwardResult {
  Matrix logits;
  ForwardCache cache;
};

/// Raw logits (no link). Dropout is active only when `training` is set.
inline ForwardResult forward(const MlpModel& model, const Matrix& X, bool training, Rng& rng) {
  detail::require_shape(!model.layers.empty(), "model has no layers");
  detail::require_shape(static_cast<std::size_t>(X.cols()) == model.input_dim(),
                        "input has " + std::to_string(X.cols()) + " columns, network expects " +
                            std::to_string(model.input_dim()));
  ForwardResult out;
  auto& cache = out.cache;
  cache.training = training;
  cache.model_id = model.instance_id;
  cache.model_version = model.version;
  const bool drop = training && model.dropout_rate > 0.0;
  const double keep_scale = 1.0 / (1.0 - model.dropout_rate);
  std::bernoulli_distribution keep(1.0 - model.dropout_rate);

  Matrix a = X;
  const std::size_t n_layers = model.layers.size();
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& layer = model.layers[i];
    Matrix z = a * layer.weight;
    z.rowwise() += layer.bias.transpose();
    cache.inputs.push_back(std::move(a));
    if (i + 1 == n_layers) {
      out.logits = std::move(z);
      break;
    }
    a = z.cwiseMax(0.0);
    cache.pre.push_back(std::move(z));
    if (drop) {
      Matrix mask(a.rows(), a.cols());
      for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = keep(rng) ? keep_scale : 0.0;
      a.array() *= mask.array();
      cache.masks.push_back(std::move(mask));
    }
  }
  return out;
}

/// Deterministic inference-mode logits.
inline Matrix predict_logits(const MlpModel& model, const Matrix& X) {
  Rng unused(0);
  return forward(model, X, false, unused).logits;
}

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
  Matrix input;  // d loss / d X, consumed by embedding tables
};

/// Gradients of a loss with respect to every parameter given d loss / d logits.
inline Gradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& d_logits) {
  const std::size_t n_layers = model.layers.size();
  if (cache.model_id != model.instance_id || cache.model_version != model.version ||
      cache.inputs.size() != n_layers || cache.pre.size() + 1 != n_layers)
    throw ContractError("forward cache does not belong to the current model parameters");
  if (cache.training && model.dropout_rate > 0.0 && cache.masks.size() + 1 != n_layers)
    throw ContractError("forward cache is missing dropout masks");
  detail::require_shape(d_logits.rows() == cache.inputs.front().rows() &&
                            static_cast<std::size_t>(d_logits.cols()) == model.output_dim(),
                        "d_logits shape does not match the cached forward pass");

  Gradients g;
  g.weight.resize(n_layers);
  g.bias.resize(n_layers);
  Matrix dz = d_logits;
  for (std::size_t k = n_layers; k-- > 0;) {
    const auto& layer = model.layers[k];
    g.weight[k] = cache.inputs[k].transpose() * dz;
    g.bias[k] = dz.colwise().sum().transpose();
    Matrix da = dz * layer.weight.transpose();
    if (k == 0) {
      g.input = std::move(da);
      break;
    }
    if (!cache.masks.empty()) da.array() *= cache.masks[k - 1].array();
    da.array() *= (cache.pre[k - 1].array() > 0.0).cast<double>();
    dz = std::move(da);
  }
  return g;
}

/// One Adam update of `param` in place. Moments must match `param` in shape.
template <typename P, typename G, typename M, typename V>
void adam_apply(Eigen::MatrixBase<P>& param, const Eigen::MatrixBase<G>& grad, Eigen::MatrixBase<M>& m,
                Eigen::MatrixBase<V>& v, std::int64_t step, double lr, const AdamConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + ((1.0 - cfg.beta2) * grad.array().square()).matrix();
  param -= (lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon)).matrix();
}

/// Applies one Adam step to every parameter and increments the step counter.
inline void adam_step(MlpModel& model, const Gradients& grads, double lr, const AdamConfig& cfg = {}) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  const std::size_t n = model.layers.size();
  detail::require_shape(grads.weight.size() == n && grads.bias.size() == n, "gradient set has wrong layer count");
  for (std::size_t i = 0; i < n; ++i) {
    detail::require_shape(grads.weight[i].rows() == model.layers[i].weight.rows() &&
                              grads.weight[i].cols() == model.layers[i].weight.cols() &&
                              grads.bias[i].size() == model.layers[i].bias.size(),
                          "gradient shape differs from parameter shape in layer " + std::to_string(i));
    if (!grads.weight[i].allFinite() || !grads.bias[i].allFinite())
      throw NumericalError("non-finite gradient in layer " + std::to_string(i));
  }
  auto& s = model.adam;
  ++s.step;
  for (std::size_t i = 0; i < n; ++i) {
    adam_apply(model.layers[i].weight, grads.weight[i], s.m_weight[i], s.v_weight[i], s.step, lr, cfg);
    adam_apply(model.layers[i].bias, grads.bias[i], s.m_bias[i], s.v_bias[i], s.step, lr, cfg);
  }
  ++model.version;
}

/// Row-wise log-sum-exp.
inline Vector log_sum_exp_rows(const Matrix& z) {
  Vector out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    out(i) = m + std::log((z.row(i).array() - m).exp().sum());
  }
  return out;
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Logits to response scale: probabilities for sigmoid/softmax, identity otherwise.
inline Matrix apply_link(const Matrix& logits, Link link) {
  switch (link) {
    case Link::identity: return logits;
    case Link::sigmoid: return logits.unaryExpr([](double z) { return sigmoid(z); });
    case Link::softmax: {
      Matrix p = logits;
      const Vector lse = log_sum_exp_rows(logits);
      for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) = (p.row(i).array() - lse(i)).exp();
      return p;
    }
  }
  return logits;
}

/// Rejects targets that cannot be scored under `link`.
inline void check_targets(const Matrix& Y, Link link) {
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    if (!Y.row(i).allFinite()) throw DataError("target row " + std::to_string(i) + " is not finite");
    if (link == Link::sigmoid) {
      const double y = Y(i, 0);
      if (Y.cols() != 1 || (y != 0.0 && y != 1.0))
        throw DataError("invalid target: sigmoid link expects a single 0/1 column (row " + std::to_string(i) + ")");
    } else if (link == Link::softmax) {
      if ((Y.row(i).array() < 0.0).any() || std::abs(Y.row(i).sum() - 1.0) > 1e-9)
        throw DataError("invalid target: softmax row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

struct LossResult {
  double nll = 0.0;  // mean over rows
  Matrix d_logits;   // gradient of the mean NLL
};

/// Mean negative log-likelihood of `Y` given `logits` and its gradient.
///
/// identity: unit-variance Gaussian; sigmoid: Bernoulli; softmax: categorical
/// with log-sum-exp stabilization.
inline LossResult loss_and_grad(const Matrix& logits, const Matrix& Y, Link link) {
  detail::require_shape(logits.rows() == Y.rows() && logits.cols() == Y.cols(),
                        "logits are " + std::to_string(logits.rows()) + "x" + std::to_string(logits.cols()) +
                            " but targets are " + std::to_string(Y.rows()) + "x" + std::to_string(Y.cols()));
  detail::require_shape(logits.rows() > 0, "empty batch");
  check_targets(Y, link);
  const double n = static_cast<double>(logits.rows());
  LossResult r;
  switch (link) {
    case Link::identity: {
      const Matrix resid = logits - Y;
      r.nll = (0.5 * resid.array().square().sum()) / n + 0.5 * std::log(2.0 * M_PI) * logits.cols();
      r.d_logits = resid / n;
      break;
    }
    case Link::sigmoid: {
      double total = 0.0;
      r.d_logits.resize(logits.rows(), 1);
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double z = logits(i, 0);
        total += softplus(z) - Y(i, 0) * z;
        r.d_logits(i, 0) = (sigmoid(z) - Y(i, 0)) / n;
      }
      r.nll = total / n;
      break;
    }
    case Link::softmax: {
      const Vector lse = log_sum_exp_rows(logits);
      double total = 0.0;
      r.d_logits.resize(logits.rows(), logits.cols());
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        total += lse(i) - logits.row(i).dot(Y.row(i));
        r.d_logits.row(i) = ((logits.row(i).array() - lse(i)).exp() - Y.row(i).array()) / n;
      }
      r.nll = total / n;
      break;
    }
  }
  if (!std::isfinite(r.nll)) throw NumericalError("non-finite loss");
  return r;
}

// Checkpoint format:
//   {"layers":[{"w":[[...],...],"b":[...]}], "activation":"relu", "dropout":p, "output_dim":C}
// Each "w" is stored row-major as in x out.

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, Eigen::Index expected_cols = -1) {
  if (!j.is_array()) throw DataError("expected a JSON matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : std::max<Eigen::Index>(expected_cols, 0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw DataError("ragged JSON matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

inline json vector_to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline json to_json(const MlpModel& model) {
  json layers = json::array();
  for (const auto& l : model.layers) layers.push_back({{"w", matrix_to_json(l.weight)}, {"b", vector_to_json(l.bias)}});
  return {{"layers", layers}, {"activation", "relu"}, {"dropout", model.dropout_rate}, {"output_dim", model.output_dim()}};
}

inline MlpModel mlp_from_json(const json& j) {
  try {
    MlpModel model;
    if (j.at("activation").get<std::string>() != "relu") throw DataError("unsupported activation in checkpoint");
    model.dropout_rate = j.at("dropout").get<double>();
    for (const auto& l : j.at("layers")) {
      DenseLayer layer{matrix_from_json(l.at("w")), vector_from_json(l.at("b"))};
      model.layers.push_back(std::move(layer));
    }
    reset_adam(model);
    validate(model);
    if (j.at("output_dim").get<std::size_t>() != model.output_dim())
      throw ShapeError("checkpoint output_dim disagrees with its last layer");
    return model;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed network checkpoint: ") + e.what());
  }
}

}  // namespace mcgmenn
