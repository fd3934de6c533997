#pragma once

#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mcgmenn/neural_net.hpp"
#include "mcgmenn/random_effects.hpp"

namespace mcgmenn {

/// Fixed-effects inputs, targets, and clustering assignments for one split.
///
/// Y is N x 1 with 0/1 entries for sigmoid, N x C one-hot for softmax, and
/// N x 1 real for identity.
struct Dataset {
  Matrix X;
  Matrix Y;
  ClusterDesign design;
  Link link = Link::softmax;
  std::vector<std::string> feature_names;  // one per clustering feature

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(Y.cols()); }

  void validate() const {
    detail::require_shape(X.rows() == Y.rows(), "X and Y row counts differ");
    detail::require_shape(design.num_features() == 0 || design.num_rows() == rows(),
                          "design row count differs from X");
    design.validate();
    check_targets(Y, link);
    if (!X.allFinite()) throw DataError("fixed-effects matrix contains non-finite values");
  }

  std::string feature_name(std::size_t l) const {
    return l < feature_names.size() ? feature_names[l] : "feature" + std::to_string(l);
  }
};

inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

inline Dataset subset(const Dataset& d, std::span<const std::size_t> rows) {
  Dataset out;
  out.X = gather_rows(d.X, rows);
  out.Y = gather_rows(d.Y, rows);
  out.design = d.design.subset(rows);
  out.link = d.link;
  out.feature_names = d.feature_names;
  return out;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace mcgmenn
