#pragma once

// Random-intercept model for L clustering features and C logit columns.
//
// Flat layout of the coefficient vector is feature-major, then cluster, then
// class: index(l, q, c) = offset(l) + q * C + c, with offset(l) = C * sum_{m<l} Q_m.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mcgmenn/errors.hpp"
#include "mcgmenn/neural_net.hpp"

namespace mcgmenn {

using ClusterIndex = std::uint32_t;

/// Assignment value for a cluster level that was not seen during training.
inline constexpr ClusterIndex kUnseenCluster = std::numeric_limits<ClusterIndex>::max();

/// Index form of the 0/1 design matrices: one cluster per row and feature.
struct ClusterDesign {
  std::vector<std::size_t> cardinalities;            // Q_l
  std::vector<std::vector<ClusterIndex>> assignments;  // [l][row]

  std::size_t num_features() const { return cardinalities.size(); }
  std::size_t num_rows() const { return assignments.empty() ? 0 : assignments.front().size(); }
  std::size_t total_clusters() const { return std::accumulate(cardinalities.begin(), cardinalities.end(), std::size_t{0}); }

  void validate() const {
    detail::require_shape(assignments.size() == cardinalities.size(), "assignment lists do not match feature count");
    const std::size_t n = num_rows();
    for (std::size_t l = 0; l < assignments.size(); ++l) {
      detail::require_shape(assignments[l].size() == n, "feature " + std::to_string(l) + " has a different row count");
      for (auto q : assignments[l])
        if (q != kUnseenCluster && q >= cardinalities[l])
          throw ShapeError("cluster index " + std::to_string(q) + " out of range for feature " + std::to_string(l));
    }
  }

  /// Design restricted to `rows`, in the given order.
  ClusterDesign subset(std::span<const std::size_t> rows) const {
    ClusterDesign out;
    out.cardinalities = cardinalities;
    out.assignments.resize(num_features());
    for (std::size_t l = 0; l < num_features(); ++l) {
      out.assignments[l].reserve(rows.size());
      for (auto r : rows) out.assignments[l].push_back(assignments[l][r]);
    }
    return out;
  }

  /// Dense Z^(l) in {0,1}^{N x Q_l}; unseen rows are all zero.
  Matrix dense(std::size_t l) const {
    Matrix z = Matrix::Zero(static_cast<Eigen::Index>(num_rows()), static_cast<Eigen::Index>(cardinalities[l]));
    for (std::size_t i = 0; i < num_rows(); ++i)
      if (assignments[l][i] != kUnseenCluster) z(static_cast<Eigen::Index>(i), assignments[l][i]) = 1.0;
    return z;
  }
};

/// Coefficient tables B^(l) in R^{Q_l x C}.
struct RandomEffects {
  std::vector<Matrix> tables;

  static RandomEffects zeros(std::span<const std::size_t> cardinalities, std::size_t num_classes) {
    RandomEffects b;
    for (auto q : cardinalities)
      b.tables.push_back(Matrix::Zero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(num_classes)));
    return b;
  }

  std::size_t num_features() const { return tables.size(); }
  std::size_t num_classes() const { return tables.empty() ? 0 : static_cast<std::size_t>(tables.front().cols()); }
  std::size_t flat_size() const {
    std::size_t n = 0;
    for (const auto& t : tables) n += t.size();
    return n;
  }

  Vector flatten() const {
    Vector v(static_cast<Eigen::Index>(flat_size()));
    Eigen::Index k = 0;
    for (const auto& t : tables)
      for (Eigen::Index q = 0; q < t.rows(); ++q)
        for (Eigen::Index c = 0; c < t.cols(); ++c) v(k++) = t(q, c);
    return v;
  }

  static RandomEffects unflatten(const Vector& flat, std::span<const std::size_t> cardinalities,
                                 std::size_t num_classes) {
    RandomEffects b = zeros(cardinalities, num_classes);
    detail::require_shape(static_cast<std::size_t>(flat.size()) == b.flat_size(),
                          "flat vector length " + std::to_string(flat.size()) + " does not match tables of size " +
                              std::to_string(b.flat_size()));
    Eigen::Index k = 0;
    for (auto& t : b.tables)
      for (Eigen::Index q = 0; q < t.rows(); ++q)
        for (Eigen::Index c = 0; c < t.cols(); ++c) t(q, c) = flat(k++);
    return b;
  }

  void check_against(const ClusterDesign& design) const {
    detail::require_shape(tables.size() == design.num_features(), "effect tables do not match clustering features");
    for (std::size_t l = 0; l < tables.size(); ++l)
      detail::require_shape(static_cast<std::size_t>(tables[l].rows()) == design.cardinalities[l],
                            "effect table " + std::to_string(l) + " has wrong cluster count");
  }
};

/// Per-(feature, class) random-intercept variances with a lower floor.
struct VarianceComponents {
  Matrix sigma2;  // L x C
  double floor = 1e-6;

  static VarianceComponents constant(std::size_t features, std::size_t classes, double value, double floor = 1e-6) {
    return {Matrix::Constant(static_cast<Eigen::Index>(features), static_cast<Eigen::Index>(classes),
                             std::max(value, floor)),
            floor};
  }

  void check() const {
    if ((sigma2.array() < floor).any()) throw ContractError("variance component below floor");
  }
};

/// Offsets sum_l B^(l)[assignment_l(i), :] for the listed rows.
inline Matrix apply_effects(const ClusterDesign& design, const RandomEffects& b, std::span<const std::size_t> rows) {
  b.check_against(design);
  const auto C = static_cast<Eigen::Index>(b.num_classes());
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), C);
  const std::size_t n = design.num_rows();
  for (std::size_t l = 0; l < design.num_features(); ++l) {
    const auto& assign = design.assignments[l];
    const auto& table = b.tables[l];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= n) throw ShapeError("row index out of range");
      const auto q = assign[rows[i]];
      if (q != kUnseenCluster) out.row(static_cast<Eigen::Index>(i)) += table.row(q);
    }
  }
  return out;
}

inline Matrix apply_effects(const ClusterDesign& design, const RandomEffects& b) {
  std::vector<std::size_t> rows(design.num_rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return apply_effects(design, b, rows);
}

/// Gaussian log-density of every coefficient under its (feature, class) variance.
inline double log_prior(const RandomEffects& b, const VarianceComponents& s) {
  s.check();
  detail::require_shape(static_cast<std::size_t>(s.sigma2.rows()) == b.num_features() &&
                            static_cast<std::size_t>(s.sigma2.cols()) == b.num_classes(),
                        "variance components do not match effect tables");
  double total = 0.0;
  for (std::size_t l = 0; l < b.num_features(); ++l) {
    const auto& t = b.tables[l];
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      const double v = s.sigma2(static_cast<Eigen::Index>(l), c);
      total += -0.5 * static_cast<double>(t.rows()) * std::log(2.0 * M_PI * v) - t.col(c).squaredNorm() / (2.0 * v);
    }
  }
  return total;
}

struct LogDensityValue {
  double value = 0.0;
  Vector gradient;
};

/// Conditional log-posterior ln p(Y | B; fixed logits) + ln p(B | S) and its
/// gradient in the flat layout. The data term uses the same normalization as
/// the mean NLL of `loss_and_grad`, scaled to a sum over rows.
class EffectsPosterior {
 public:
  EffectsPosterior(const Matrix& fixed_logits, const Matrix& Y, const ClusterDesign& design,
                   const VarianceComponents& s, Link link)
      : fixed_(fixed_logits), y_(Y), design_(design), s_(s), link_(link) {
    design.validate();
    s.check();
    detail::require_shape(fixed_logits.rows() == Y.rows() && fixed_logits.cols() == Y.cols(),
                          "fixed logits and targets differ in shape");
    detail::require_shape(static_cast<std::size_t>(Y.rows()) == design.num_rows(),
                          "design row count differs from targets");
    detail::require_shape(static_cast<std::size_t>(s.sigma2.rows()) == design.num_features() &&
                              s.sigma2.cols() == Y.cols(),
                          "variance components do not match design and classes");
    if (!fixed_logits.allFinite()) throw NumericalError("non-finite fixed-effects logits");
    classes_ = static_cast<std::size_t>(Y.cols());
    offsets_.push_back(0);
    for (auto q : design.cardinalities) offsets_.push_back(offsets_.back() + q * classes_);
    eta_.resize(Y.rows(), Y.cols());
  }

  std::size_t dimension() const { return offsets_.back(); }
  std::size_t evaluations() const { return evaluations_; }

  /// Evaluates the log-posterior at `flat`, writing the gradient into `grad`.
  double operator()(const Vector& flat, Vector& grad) const {
    detail::require_shape(static_cast<std::size_t>(flat.size()) == dimension(), "flat effects vector has wrong length");
    ++evaluations_;
    const auto N = static_cast<Eigen::Index>(design_.num_rows());
    const auto C = static_cast<Eigen::Index>(classes_);
    eta_ = fixed_;
    for (std::size_t l = 0; l < design_.num_features(); ++l) {
      const auto& assign = design_.assignments[l];
      const double* base = flat.data() + offsets_[l];
      for (Eigen::Index i = 0; i < N; ++i) {
        const auto q = assign[static_cast<std::size_t>(i)];
        if (q == kUnseenCluster) continue;
        for (Eigen::Index c = 0; c < C; ++c) eta_(i, c) += base[static_cast<std::size_t>(q) * classes_ + c];
      }
    }

    // resid holds d(loglik)/d(eta)
    double loglik = 0.0;
    Matrix& resid = eta_;
    switch (link_) {
      case Link::identity:
        for (Eigen::Index i = 0; i < N; ++i)
          for (Eigen::Index c = 0; c < C; ++c) {
            const double r = y_(i, c) - eta_(i, c);
            loglik += -0.5 * r * r - 0.5 * std::log(2.0 * M_PI);
            resid(i, c) = r;
          }
        break;
      case Link::sigmoid:
        for (Eigen::Index i = 0; i < N; ++i) {
          const double z = eta_(i, 0);
          loglik += y_(i, 0) * z - softplus(z);
          resid(i, 0) = y_(i, 0) - sigmoid(z);
        }
        break;
      case Link::softmax:
        for (Eigen::Index i = 0; i < N; ++i) {
          const double m = eta_.row(i).maxCoeff();
          double sum = 0.0;
          for (Eigen::Index c = 0; c < C; ++c) {
            const double shifted = eta_(i, c) - m;
            loglik += y_(i, c) * shifted;
            resid(i, c) = std::exp(shifted);
            sum += resid(i, c);
          }
          double ysum = 0.0;
          for (Eigen::Index c = 0; c < C; ++c) ysum += y_(i, c);
          loglik -= ysum * std::log(sum);
          for (Eigen::Index c = 0; c < C; ++c) resid(i, c) = y_(i, c) - resid(i, c) / sum;
        }
        break;
    }

    grad.setZero(static_cast<Eigen::Index>(dimension()));
    for (std::size_t l = 0; l < design_.num_features(); ++l) {
      const auto& assign = design_.assignments[l];
      double* g = grad.data() + offsets_[l];
      for (Eigen::Index i = 0; i < N; ++i) {
        const auto q = assign[static_cast<std::size_t>(i)];
        if (q == kUnseenCluster) continue;
        for (Eigen::Index c = 0; c < C; ++c) g[static_cast<std::size_t>(q) * classes_ + c] += resid(i, c);
      }
    }

    double prior = 0.0;
    for (std::size_t l = 0; l < design_.num_features(); ++l) {
      const std::size_t q_count = design_.cardinalities[l];
      for (std::size_t c = 0; c < classes_; ++c) {
        const double v = s_.sigma2(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(c));
        const double norm = -0.5 * std::log(2.0 * M_PI * v);
        for (std::size_t q = 0; q < q_count; ++q) {
          const std::size_t k = offsets_[l] + q * classes_ + c;
          const double b = flat(static_cast<Eigen::Index>(k));
          prior += norm - b * b / (2.0 * v);
          grad(static_cast<Eigen::Index>(k)) -= b / v;
        }
      }
    }
    const double total = loglik + prior;
    if (!std::isfinite(total)) throw NumericalError("non-finite log-posterior");
    return total;
  }

 private:
  const Matrix& fixed_;
  const Matrix& y_;
  const ClusterDesign& design_;
  const VarianceComponents& s_;
  Link link_;
  std::size_t classes_ = 0;
  std::vector<std::size_t> offsets_;
  mutable Matrix eta_;
  mutable std::size_t evaluations_ = 0;
};

inline LogDensityValue log_posterior_and_grad(const Vector& flat, const Matrix& fixed_logits, const Matrix& Y,
                                              const ClusterDesign& design, const VarianceComponents& s, Link link) {
  EffectsPosterior target(fixed_logits, Y, design, s, link);
  LogDensityValue out;
  out.value = target(flat, out.gradient);
  return out;
}

/// Mean of b^2 over clusters and samples for every (feature, class).
inline Matrix second_moments(std::span<const RandomEffects> samples) {
  if (samples.empty()) throw ContractError("variance update needs at least one sample");
  const auto& first = samples.front();
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(first.num_features()), static_cast<Eigen::Index>(first.num_classes()));
  for (const auto& s : samples) {
    detail::require_shape(s.num_features() == first.num_features() && s.num_classes() == first.num_classes(),
                          "samples differ in shape");
    for (std::size_t l = 0; l < s.num_features(); ++l) {
      detail::require_shape(s.tables[l].rows() == first.tables[l].rows(), "samples differ in shape");
      m.row(static_cast<Eigen::Index>(l)) += s.tables[l].colwise().squaredNorm();
    }
  }
  for (std::size_t l = 0; l < first.num_features(); ++l) {
    const double denom = static_cast<double>(first.tables[l].rows()) * static_cast<double>(samples.size());
    m.row(static_cast<Eigen::Index>(l)) /= std::max(denom, 1.0);
  }
  return m;
}

/// Closed-form variance update: zero-mean second moment of the draws, floored.
inline VarianceComponents variance_update(std::span<const RandomEffects> samples, double floor = 1e-6) {
  VarianceComponents s{second_moments(samples), floor};
  s.sigma2 = s.sigma2.cwiseMax(floor);
  return s;
}

/// Derivative of the Monte Carlo mean log-prior with respect to ln sigma^2.
inline Matrix variance_log_prior_gradient(const VarianceComponents& s, std::span<const RandomEffects> samples) {
  const Matrix m2 = second_moments(samples);
  const auto& first = samples.front();
  Matrix g(m2.rows(), m2.cols());
  for (Eigen::Index l = 0; l < m2.rows(); ++l) {
    const double q = static_cast<double>(first.tables[static_cast<std::size_t>(l)].rows());
    for (Eigen::Index c = 0; c < m2.cols(); ++c) g(l, c) = 0.5 * q * (m2(l, c) / s.sigma2(l, c) - 1.0);
  }
  return g;
}

/// One gradient-ascent step on ln sigma^2. Stationary at the closed-form update.
inline VarianceComponents gradient_variance_step(const VarianceComponents& s, std::span<const RandomEffects> samples,
                                                 double lr) {
  s.check();
  const Matrix g = variance_log_prior_gradient(s, samples);
  VarianceComponents out = s;
  out.sigma2 = (s.sigma2.array().log() + lr * g.array()).exp().cwiseMax(s.floor).matrix();
  return out;
}

/// Element-wise mean of the retained draws.
inline RandomEffects point_estimate(std::span<const RandomEffects> history) {
  if (history.empty()) throw ContractError("point estimate needs at least one retained sample");
  RandomEffects mean = history.front();
  for (std::size_t k = 1; k < history.size(); ++k)
    for (std::size_t l = 0; l < mean.tables.size(); ++l) mean.tables[l] += history[k].tables[l];
  for (auto& t : mean.tables) t /= static_cast<double>(history.size());
  return mean;
}

/// Element-wise standard deviation of the retained draws (zero for a single draw).
inline RandomEffects posterior_sd(std::span<const RandomEffects> history) {
  const RandomEffects mean = point_estimate(history);
  RandomEffects sd = RandomEffects::zeros(std::vector<std::size_t>{}, 0);
  for (const auto& t : mean.tables) sd.tables.push_back(Matrix::Zero(t.rows(), t.cols()));
  if (history.size() < 2) return sd;
  for (const auto& h : history)
    for (std::size_t l = 0; l < sd.tables.size(); ++l)
      sd.tables[l].array() += (h.tables[l] - mean.tables[l]).array().square();
  for (auto& t : sd.tables) t = (t.array() / static_cast<double>(history.size() - 1)).sqrt().matrix();
  return sd;
}

}  // namespace mcgmenn
