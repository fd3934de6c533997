#pragma once

// Baseline treatments of clustering features: one-hot columns, smoothed
// target means, and trainable entity embeddings. Everything is fitted on
// training rows only; unseen clusters map to an all-zero one-hot row, the
// global target mean, or a dedicated all-zero embedding row.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mcgmenn/dataset.hpp"
#include "mcgmenn/errors.hpp"
#include "mcgmenn/neural_net.hpp"
#include "mcgmenn/random_effects.hpp"

namespace mcgmenn {

enum class EncoderKind { ignore, one_hot, target, embedding };

/// {0,1}^{N x Q_l} indicator matrix for feature `l`.
inline Matrix fit_transform_one_hot(const ClusterDesign& design, std::size_t l) {
  detail::require_shape(l < design.num_features(), "feature index out of range");
  return design.dense(l);
}

/// One-hot blocks of every clustering feature side by side.
inline Matrix one_hot_all(const ClusterDesign& design) {
  const auto total = static_cast<Eigen::Index>(design.total_clusters());
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(design.num_rows()), total);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < design.num_features(); ++l) {
    for (std::size_t i = 0; i < design.num_rows(); ++i) {
      const auto q = design.assignments[l][i];
      if (q != kUnseenCluster) out(static_cast<Eigen::Index>(i), offset + q) = 1.0;
    }
    offset += static_cast<Eigen::Index>(design.cardinalities[l]);
  }
  return out;
}

/// Smoothed per-cluster target means,
///   enc(q, c) = (n_q * mean_q(y_c) + m * mean(y_c)) / (n_q + m).
struct TargetEncoding {
  double smoothing = 10.0;
  Vector global_mean;          // one entry per encoded column
  std::vector<Matrix> values;  // per feature: Q_l x columns

  std::size_t columns() const { return static_cast<std::size_t>(global_mean.size()); }

  Matrix transform(const ClusterDesign& design) const {
    detail::require_shape(design.num_features() == values.size(), "target encoding fitted on a different design");
    const auto cols = static_cast<Eigen::Index>(columns());
    Matrix out(static_cast<Eigen::Index>(design.num_rows()), cols * static_cast<Eigen::Index>(values.size()));
    for (std::size_t l = 0; l < values.size(); ++l)
      for (std::size_t i = 0; i < design.num_rows(); ++i) {
        const auto q = design.assignments[l][i];
        auto block = out.block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l) * cols, 1, cols);
        if (q == kUnseenCluster || q >= values[l].rows())
          block = global_mean.transpose();
        else
          block = values[l].row(q);
      }
    return out;
  }
};

/// Encoded target columns: the single column for binary/regression targets,
/// class 1 for two-class one-hot, one column per class otherwise.
inline Matrix target_columns(const Matrix& Y) {
  if (Y.cols() == 2) return Y.col(1);
  return Y;
}

inline TargetEncoding fit_target_encoding(const ClusterDesign& design, const Matrix& Y, double smoothing) {
  if (Y.rows() == 0) throw ConfigError("target encoding needs a non-empty training set");
  if (!(smoothing >= 0.0)) throw ConfigError("target-encoding smoothing must be non-negative");
  detail::require_shape(static_cast<std::size_t>(Y.rows()) == design.num_rows(), "targets and design differ in rows");
  const Matrix T = target_columns(Y);
  TargetEncoding enc;
  enc.smoothing = smoothing;
  enc.global_mean = T.colwise().mean().transpose();
  for (std::size_t l = 0; l < design.num_features(); ++l) {
    const auto Q = static_cast<Eigen::Index>(design.cardinalities[l]);
    Matrix sums = Matrix::Zero(Q, T.cols());
    Vector counts = Vector::Zero(Q);
    for (std::size_t i = 0; i < design.num_rows(); ++i) {
      const auto q = design.assignments[l][i];
      if (q == kUnseenCluster) continue;
      sums.row(q) += T.row(static_cast<Eigen::Index>(i));
      counts(q) += 1.0;
    }
    Matrix values(Q, T.cols());
    for (Eigen::Index q = 0; q < Q; ++q) {
      const double denom = counts(q) + smoothing;
      if (denom == 0.0)
        values.row(q) = enc.global_mean.transpose();
      else
        values.row(q) = (sums.row(q) + smoothing * enc.global_mean.transpose()) / denom;
    }
    enc.values.push_back(std::move(values));
  }
  return enc;
}

inline json to_json(const TargetEncoding& enc) {
  json values = json::array();
  for (const auto& v : enc.values) values.push_back(matrix_to_json(v));
  return {{"smoothing", enc.smoothing}, {"global_mean", vector_to_json(enc.global_mean)}, {"values", values}};
}

inline TargetEncoding target_encoding_from_json(const json& j) {
  TargetEncoding enc;
  enc.smoothing = j.at("smoothing").get<double>();
  enc.global_mean = vector_from_json(j.at("global_mean"));
  for (const auto& v : j.at("values")) enc.values.push_back(matrix_from_json(v, enc.global_mean.size()));
  return enc;
}

/// Embedding width for a feature with `cardinality` levels:
/// min(100, ceil(1.6 * Q^0.56)).
inline std::size_t embedding_dim(std::size_t cardinality) {
  const double d = std::ceil(1.6 * std::pow(static_cast<double>(cardinality), 0.56));
  return std::min<std::size_t>(100, static_cast<std::size_t>(std::max(1.0, d)));
}

struct EmbeddingSpec {
  std::size_t cardinality = 0;
  std::size_t dim = 0;
  std::size_t rows() const { return cardinality + 1; }  // last row serves unseen clusters
};

struct EmbeddingInputs {
  std::vector<std::vector<std::size_t>> indices;  // [l][row], unseen mapped to Q_l
  std::vector<EmbeddingSpec> specs;
};

inline EmbeddingInputs build_embedding_inputs(const ClusterDesign& design) {
  design.validate();
  EmbeddingInputs in;
  for (std::size_t l = 0; l < design.num_features(); ++l) {
    const std::size_t Q = design.cardinalities[l];
    in.specs.push_back({Q, embedding_dim(Q)});
    std::vector<std::size_t> idx(design.num_rows());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto q = design.assignments[l][i];
      idx[i] = q == kUnseenCluster ? Q : q;
    }
    in.indices.push_back(std::move(idx));
  }
  return in;
}

/// Lookup tables whose rows are concatenated after X and fed to a network.
struct EmbeddingModel {
  std::vector<EmbeddingSpec> specs;
  std::vector<Matrix> tables;  // rows() x dim
  std::vector<Matrix> m, v;    // lazy Adam moments
  std::vector<std::vector<std::int64_t>> row_steps;
  MlpModel network;
  std::size_t fixed_dim = 0;

  std::size_t embedded_width() const {
    std::size_t w = 0;
    for (const auto& s : specs) w += s.dim;
    return w;
  }
};

inline EmbeddingModel make_embedding_model(std::size_t fixed_dim, const ClusterDesign& design,
                                           const ArchitectureSpec& arch, std::size_t output_dim, Rng& rng) {
  EmbeddingModel model;
  model.fixed_dim = fixed_dim;
  model.specs = build_embedding_inputs(design).specs;
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (const auto& s : model.specs) {
    Matrix t(static_cast<Eigen::Index>(s.rows()), static_cast<Eigen::Index>(s.dim));
    for (Eigen::Index c = 0; c < t.cols(); ++c)
      for (Eigen::Index r = 0; r < t.rows(); ++r) t(r, c) = u(rng);
    t.row(t.rows() - 1).setZero();
    model.m.push_back(Matrix::Zero(t.rows(), t.cols()));
    model.v.push_back(Matrix::Zero(t.rows(), t.cols()));
    model.row_steps.emplace_back(s.rows(), 0);
    model.tables.push_back(std::move(t));
  }
  model.network = make_mlp(fixed_dim + model.embedded_width(), arch, output_dim, rng);
  return model;
}

/// [X | E_1[idx_1] | ... | E_L[idx_L]] for the listed rows.
inline Matrix embedding_features(const EmbeddingModel& model, const Matrix& X, const EmbeddingInputs& in,
                                 std::span<const std::size_t> rows) {
  detail::require_shape(static_cast<std::size_t>(X.cols()) == model.fixed_dim, "fixed-effects width mismatch");
  detail::require_shape(in.indices.size() == model.tables.size(), "embedding inputs do not match tables");
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(model.fixed_dim + model.embedded_width()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.row(r).head(X.cols()) = X.row(static_cast<Eigen::Index>(rows[i]));
    Eigen::Index col = X.cols();
    for (std::size_t l = 0; l < model.tables.size(); ++l) {
      const auto idx = std::min(in.indices[l][rows[i]], model.specs[l].cardinality);
      const auto d = static_cast<Eigen::Index>(model.specs[l].dim);
      out.row(r).segment(col, d) = model.tables[l].row(static_cast<Eigen::Index>(idx));
      col += d;
    }
  }
  return out;
}

struct EmbeddingGradients {
  Gradients network;
  std::vector<Matrix> tables;                      // dense, zero outside touched rows
  std::vector<std::vector<std::size_t>> touched;  // distinct rows per table
};

/// Scatters the network's input gradient into the looked-up table rows.
inline EmbeddingGradients embedding_backward(const EmbeddingModel& model, const ForwardCache& cache,
                                             const Matrix& d_logits, const EmbeddingInputs& in,
                                             std::span<const std::size_t> rows) {
  EmbeddingGradients g;
  g.network = backward(model.network, cache, d_logits);
  for (std::size_t l = 0; l < model.tables.size(); ++l) {
    g.tables.push_back(Matrix::Zero(model.tables[l].rows(), model.tables[l].cols()));
    g.touched.emplace_back();
  }
  std::vector<std::vector<char>> seen;
  for (const auto& t : model.tables) seen.emplace_back(static_cast<std::size_t>(t.rows()), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Eigen::Index col = static_cast<Eigen::Index>(model.fixed_dim);
    for (std::size_t l = 0; l < model.tables.size(); ++l) {
      const auto idx = std::min(in.indices[l][rows[i]], model.specs[l].cardinality);
      const auto d = static_cast<Eigen::Index>(model.specs[l].dim);
      g.tables[l].row(static_cast<Eigen::Index>(idx)) += g.network.input.row(static_cast<Eigen::Index>(i)).segment(col, d);
      if (!seen[l][idx]) {
        seen[l][idx] = 1;
        g.touched[l].push_back(idx);
      }
      col += d;
    }
  }
  return g;
}

/// Adam on the network plus lazy Adam on the touched table rows only.
inline void embedding_adam_step(EmbeddingModel& model, const EmbeddingGradients& g, double lr,
                                const AdamConfig& cfg = {}) {
  adam_step(model.network, g.network, lr, cfg);
  for (std::size_t l = 0; l < model.tables.size(); ++l) {
    for (auto r : g.touched[l]) {
      const auto row = static_cast<Eigen::Index>(r);
      if (!g.tables[l].row(row).allFinite()) throw NumericalError("non-finite embedding gradient");
      const auto step = ++model.row_steps[l][r];
      auto p = model.tables[l].row(row);
      auto m = model.m[l].row(row);
      auto v = model.v[l].row(row);
      adam_apply(p, g.tables[l].row(row), m, v, step, lr, cfg);
    }
  }
}

inline json to_json(const EmbeddingModel& model) {
  json tables = json::array();
  for (std::size_t l = 0; l < model.tables.size(); ++l)
    tables.push_back({{"cardinality", model.specs[l].cardinality},
                      {"dim", model.specs[l].dim},
                      {"table", matrix_to_json(model.tables[l])}});
  return {{"fixed_dim", model.fixed_dim}, {"tables", tables}, {"network", to_json(model.network)}};
}

inline EmbeddingModel embedding_model_from_json(const json& j) {
  EmbeddingModel model;
  model.fixed_dim = j.at("fixed_dim").get<std::size_t>();
  for (const auto& t : j.at("tables")) {
    EmbeddingSpec s{t.at("cardinality").get<std::size_t>(), t.at("dim").get<std::size_t>()};
    Matrix table = matrix_from_json(t.at("table"), static_cast<Eigen::Index>(s.dim));
    detail::require_shape(static_cast<std::size_t>(table.rows()) == s.rows() && static_cast<std::size_t>(table.cols()) == s.dim,
                          "embedding table shape does not match its spec");
    model.specs.push_back(s);
    model.m.push_back(Matrix::Zero(table.rows(), table.cols()));
    model.v.push_back(Matrix::Zero(table.rows(), table.cols()));
    model.row_steps.emplace_back(s.rows(), 0);
    model.tables.push_back(std::move(table));
  }
  model.network = mlp_from_json(j.at("network"));
  detail::require_shape(model.network.input_dim() == model.fixed_dim + model.embedded_width(),
                        "embedding network input width mismatch");
  return model;
}

}  // namespace mcgmenn
