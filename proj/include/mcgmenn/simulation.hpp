#pragma once

// Seeded synthetic datasets with known random-effects variances.
//
// Fixed effects come from a frozen random teacher network applied to
// X ~ U(0,1)^{N x D}: one tanh hidden layer of width 4D with N(0,1)/sqrt(fan_in)
// weights, outputs standardized to zero mean and unit variance per column.
// Cluster levels are drawn uniformly, effects b ~ N(0, sigma^2_lc), and targets
// are sampled from the sigmoid / softmax of teacher logits plus effects.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mcgmenn/dataset.hpp"
#include "mcgmenn/errors.hpp"
#include "mcgmenn/random_effects.hpp"
#include "mcgmenn/training.hpp"

namespace mcgmenn {

enum class TaskMode { binary, multiclass };

struct ScenarioSpec {
  std::string name;
  TaskMode mode = TaskMode::multiclass;
  std::size_t N = 0;
  std::size_t D = 0;
  std::size_t C = 2;               // number of classes; binary tasks use one logit column
  std::vector<std::size_t> Q;      // cardinality per clustering feature
  Matrix sigma2;                   // L x output_dim true variances
  std::uint64_t teacher_seed = 0;
  std::uint64_t noise_seed = 0;
  bool desk = false;
  double train_fraction = 0.6;
  double val_fraction = 0.2;

  std::size_t num_features() const { return Q.size(); }
  std::size_t output_dim() const { return mode == TaskMode::binary ? 1 : C; }

  void validate() const {
    if (N == 0 || D == 0) throw ConfigError("scenario '" + name + "' needs N > 0 and D > 0");
    if (mode == TaskMode::multiclass && C < 2) throw ConfigError("multi-class scenario needs C >= 2");
    if (mode == TaskMode::binary && C != 2) throw ConfigError("binary scenario must have C = 2");
    if (sigma2.rows() != static_cast<Eigen::Index>(Q.size()) || sigma2.cols() != static_cast<Eigen::Index>(output_dim()))
      throw ConfigError("scenario '" + name + "' variance table must be L x output_dim");
    if ((sigma2.array() < 0.0).any()) throw ConfigError("true variances must be non-negative");
    for (auto q : Q)
      if (q == 0) throw ConfigError("cardinalities must be positive");
    if (!(train_fraction > 0.0 && val_fraction > 0.0 && train_fraction + val_fraction < 1.0))
      throw ConfigError("split fractions must leave a non-empty test split");
  }
};

inline ScenarioSpec with_seed(ScenarioSpec spec, std::uint64_t seed) {
  spec.teacher_seed = seed;
  spec.noise_seed = seed;
  return spec;
}

struct GeneratedDataset {
  ScenarioSpec spec;
  Dataset data;          // all rows
  Matrix fixed_logits;   // teacher output, before effects
  RandomEffects true_effects;
  Matrix true_sigma2;
  std::vector<std::size_t> train_rows, val_rows, test_rows;

  Dataset train() const { return subset(data, train_rows); }
  Dataset val() const { return subset(data, val_rows); }
  Dataset test() const { return subset(data, test_rows); }
};

inline GeneratedDataset generate(const ScenarioSpec& spec) {
  spec.validate();
  Rng teacher = make_rng(spec.teacher_seed, 101);
  Rng noise = make_rng(spec.noise_seed, 202);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto N = static_cast<Eigen::Index>(spec.N);
  const auto D = static_cast<Eigen::Index>(spec.D);
  const auto H = 4 * D;
  const auto out_dim = static_cast<Eigen::Index>(spec.output_dim());

  GeneratedDataset g;
  g.spec = spec;
  Dataset& d = g.data;
  d.link = spec.mode == TaskMode::binary ? Link::sigmoid : Link::softmax;
  for (std::size_t l = 0; l < spec.num_features(); ++l) d.feature_names.push_back("z" + std::to_string(l));

  d.X.resize(N, D);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < D; ++j) d.X(i, j) = unif(noise);

  Matrix w1(D, H), w2(H, out_dim);
  for (Eigen::Index j = 0; j < H; ++j)
    for (Eigen::Index i = 0; i < D; ++i) w1(i, j) = normal(teacher) / std::sqrt(static_cast<double>(D));
  for (Eigen::Index j = 0; j < out_dim; ++j)
    for (Eigen::Index i = 0; i < H; ++i) w2(i, j) = normal(teacher) / std::sqrt(static_cast<double>(H));
  const Vector b1 = -0.5 * w1.colwise().sum().transpose();  // centers the hidden pre-activations
  Matrix hidden = d.X * w1;
  hidden.rowwise() += b1.transpose();
  g.fixed_logits = hidden.array().tanh().matrix() * w2;
  for (Eigen::Index c = 0; c < out_dim; ++c) {
    auto col = g.fixed_logits.col(c);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(N - 1, 1)));
    col = (col.array() - mean) / (sd > 0.0 ? sd : 1.0);
  }

  d.design.cardinalities = spec.Q;
  for (auto q : spec.Q) {
    std::uniform_int_distribution<ClusterIndex> pick(0, static_cast<ClusterIndex>(q - 1));
    std::vector<ClusterIndex> a(spec.N);
    for (auto& v : a) v = pick(noise);
    d.design.assignments.push_back(std::move(a));
  }

  g.true_sigma2 = spec.sigma2;
  g.true_effects = RandomEffects::zeros(spec.Q, spec.output_dim());
  for (std::size_t l = 0; l < spec.num_features(); ++l) {
    auto& t = g.true_effects.tables[l];
    for (Eigen::Index q = 0; q < t.rows(); ++q)
      for (Eigen::Index c = 0; c < t.cols(); ++c)
        t(q, c) = std::sqrt(spec.sigma2(static_cast<Eigen::Index>(l), c)) * normal(noise);
  }

  const Matrix logits = g.fixed_logits + apply_effects(d.design, g.true_effects);
  const Matrix probs = apply_link(logits, d.link);
  d.Y = Matrix::Zero(N, out_dim);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double u = unif(noise);
    if (spec.mode == TaskMode::binary) {
      d.Y(i, 0) = u < probs(i, 0) ? 1.0 : 0.0;
    } else {
      double acc = 0.0;
      Eigen::Index cls = out_dim - 1;
      for (Eigen::Index c = 0; c < out_dim; ++c) {
        acc += probs(i, c);
        if (u < acc) {
          cls = c;
          break;
        }
      }
      d.Y(i, cls) = 1.0;
    }
  }

  std::vector<std::size_t> order = all_rows(spec.N);
  std::shuffle(order.begin(), order.end(), noise);
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(spec.N)));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_fraction * static_cast<double>(spec.N)));
  g.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  g.val_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                    order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  g.test_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return g;
}

// Registry

inline constexpr std::size_t kDeskMaxRows = 20000;
inline constexpr std::size_t kDeskMaxCardinality = 2000;
inline constexpr std::size_t kDeskBinaryRows = 5000;

/// Desk-scale copy: binary tasks use 5,000 rows, multi-class tasks N/10 capped
/// at 20,000 rows; cardinalities are capped at 2,000. D, C and variances are kept.
inline ScenarioSpec desk_variant(const ScenarioSpec& full) {
  ScenarioSpec d = full;
  d.name = full.name + "_desk";
  d.desk = true;
  d.N = full.mode == TaskMode::binary ? std::min(full.N, kDeskBinaryRows) : std::min(kDeskMaxRows, full.N / 10);
  for (auto& q : d.Q) q = std::min(q, kDeskMaxCardinality);
  return d;
}

namespace detail {

inline ScenarioSpec multiclass_base() {
  ScenarioSpec s;
  s.name = "base";
  s.mode = TaskMode::multiclass;
  s.N = 100000;
  s.D = 10;
  s.C = 5;
  s.Q = {1000, 10, 1000};
  s.sigma2.resize(3, 5);
  s.sigma2.row(0).setConstant(0.0001);
  s.sigma2.row(1).setConstant(0.5);
  s.sigma2.row(2).setConstant(0.5);
  return s;
}

inline std::string format_sigma(double s) {
  if (s == 0.1) return "0.1";
  if (s == 1.0) return "1";
  if (s == 10.0) return "10";
  return std::to_string(s);
}

}  // namespace detail

/// Binary grid over Q in {100, 1000, 10000} x sigma^2 in {0.1, 1, 10}, and the
/// multi-class base scenario with its eight variations; each followed by its
/// desk-scale variant.
inline std::vector<ScenarioSpec> scenario_registry() {
  std::vector<ScenarioSpec> full;
  for (std::size_t q : {100, 1000, 10000})
    for (double s : {0.1, 1.0, 10.0}) {
      ScenarioSpec b;
      b.name = "binary_q" + std::to_string(q) + "_s" + detail::format_sigma(s);
      b.mode = TaskMode::binary;
      b.N = 100000;
      b.D = 10;
      b.C = 2;
      b.Q = {q};
      b.sigma2 = Matrix::Constant(1, 1, s);
      full.push_back(b);
    }

  const ScenarioSpec base = detail::multiclass_base();
  full.push_back(base);
  {
    ScenarioSpec s = base;
    s.name = "1m_samples";
    s.N = 1000000;
    full.push_back(s);
  }
  {
    ScenarioSpec s = base;
    s.name = "high_dimensionality";
    s.D = 1000;
    full.push_back(s);
  }
  {
    ScenarioSpec s = base;
    s.name = "100_classes";
    s.C = 100;
    s.sigma2.resize(3, 100);
    s.sigma2.row(0).setConstant(0.0001);
    s.sigma2.row(1).setConstant(0.5);
    s.sigma2.row(2).setConstant(0.5);
    full.push_back(s);
  }
  {
    ScenarioSpec s = base;
    s.name = "high_cardinality";
    s.Q = {20000, 20000, 20000};
    full.push_back(s);
  }
  {
    ScenarioSpec s = base;
    s.name = "dominant_res";
    s.sigma2.row(0).setConstant(5.0);
    full.push_back(s);
  }
  {
    ScenarioSpec s = base;
    s.name = "irrelevant_res";
    s.sigma2.setConstant(0.0001);
    full.push_back(s);
  }
  {
    ScenarioSpec s = base;
    s.name = "variance_per_class";
    s.sigma2.row(1) << 0.0001, 0.25, 0.5, 0.75, 0.5;
    full.push_back(s);
  }
  {
    ScenarioSpec s = base;
    s.name = "10_res";
    s.Q.assign(10, 1000);
    s.sigma2.resize(10, 5);
    for (Eigen::Index l = 0; l < 10; ++l) s.sigma2.row(l).setConstant(0.1 * static_cast<double>(l + 1));
    full.push_back(s);
  }

  std::vector<ScenarioSpec> all;
  for (const auto& s : full) {
    all.push_back(s);
    all.push_back(desk_variant(s));
  }
  return all;
}

inline std::vector<std::string> scenario_names() {
  std::vector<std::string> names;
  for (const auto& s : scenario_registry()) names.push_back(s.name);
  return names;
}

inline ScenarioSpec find_scenario(const std::string& name) {
  for (auto& s : scenario_registry())
    if (s.name == name) return s;
  std::string known;
  for (const auto& n : scenario_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown scenario '" + name + "'; available: " + known);
}

inline json to_json(const ScenarioSpec& s) {
  return {{"name", s.name},
          {"mode", s.mode == TaskMode::binary ? "binary" : "multiclass"},
          {"N", s.N},
          {"D", s.D},
          {"C", s.C},
          {"Q", s.Q},
          {"sigma2", matrix_to_json(s.sigma2)},
          {"teacher_seed", s.teacher_seed},
          {"noise_seed", s.noise_seed},
          {"desk", s.desk},
          {"train_fraction", s.train_fraction},
          {"val_fraction", s.val_fraction}};
}

/// Spec from JSON. "sigma2" may be a scalar, one value per feature, or an
/// L x output_dim table.
inline ScenarioSpec scenario_from_json(const json& j) {
  try {
    ScenarioSpec s;
    s.name = j.value("name", std::string("custom"));
    const std::string mode = j.value("mode", std::string("multiclass"));
    if (mode != "binary" && mode != "multiclass") throw ConfigError("mode must be binary or multiclass");
    s.mode = mode == "binary" ? TaskMode::binary : TaskMode::multiclass;
    s.N = j.at("N").get<std::size_t>();
    s.D = j.at("D").get<std::size_t>();
    s.C = j.value("C", std::size_t{2});
    s.Q = j.at("Q").get<std::vector<std::size_t>>();
    const auto L = static_cast<Eigen::Index>(s.Q.size());
    const auto out = static_cast<Eigen::Index>(s.output_dim());
    const json& v = j.at("sigma2");
    if (v.is_number()) {
      s.sigma2 = Matrix::Constant(L, out, v.get<double>());
    } else if (!v.empty() && v[0].is_number()) {
      const auto per = v.get<std::vector<double>>();
      if (static_cast<Eigen::Index>(per.size()) != L) throw ConfigError("sigma2 needs one value per feature");
      s.sigma2.resize(L, out);
      for (Eigen::Index l = 0; l < L; ++l) s.sigma2.row(l).setConstant(per[static_cast<std::size_t>(l)]);
    } else {
      s.sigma2 = matrix_from_json(v, out);
    }
    s.teacher_seed = j.value("teacher_seed", std::uint64_t{0});
    s.noise_seed = j.value("noise_seed", s.teacher_seed);
    s.desk = j.value("desk", false);
    s.train_fraction = j.value("train_fraction", 0.6);
    s.val_fraction = j.value("val_fraction", 0.2);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad scenario specification: ") + e.what());
  }
}

}  // namespace mcgmenn
