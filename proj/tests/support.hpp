#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <unistd.h>

#include "mcgmenn/mcgmenn.hpp"

namespace mcgmenn::testing {

/// Central finite-difference gradient of `f` at `x`.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp(i);
    xp(i) = orig + h;
    const double up = f(xp);
    xp(i) = orig - h;
    const double down = f(xp);
    xp(i) = orig;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, tiny)
inline double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

/// Targets valid for `link`: one-hot rows, 0/1 column, or Gaussian values.
inline Matrix random_targets(Eigen::Index n, Eigen::Index c, Link link, Rng& rng) {
  if (link == Link::identity) return random_matrix(n, c, rng);
  if (link == Link::sigmoid) {
    Matrix y(n, 1);
    std::bernoulli_distribution b(0.5);
    for (Eigen::Index i = 0; i < n; ++i) y(i, 0) = b(rng);
    return y;
  }
  Matrix y = Matrix::Zero(n, c);
  std::uniform_int_distribution<Eigen::Index> k(0, c - 1);
  for (Eigen::Index i = 0; i < n; ++i) y(i, k(rng)) = 1.0;
  return y;
}

inline ClusterDesign random_design(std::size_t n, std::vector<std::size_t> cards, Rng& rng) {
  ClusterDesign d;
  d.cardinalities = std::move(cards);
  for (auto q : d.cardinalities) {
    std::uniform_int_distribution<ClusterIndex> u(0, static_cast<ClusterIndex>(q - 1));
    std::vector<ClusterIndex> a(n);
    for (auto& v : a) v = u(rng);
    d.assignments.push_back(std::move(a));
  }
  return d;
}

/// Small clustered dataset for fast end-to-end tests.
inline Dataset random_dataset(std::size_t n, std::size_t dim, std::vector<std::size_t> cards, Link link,
                              std::size_t classes, Rng& rng) {
  Dataset d;
  d.link = link;
  d.X = random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim), rng);
  const auto out = static_cast<Eigen::Index>(link == Link::sigmoid ? 1 : classes);
  d.Y = random_targets(static_cast<Eigen::Index>(n), out, link, rng);
  d.design = random_design(n, std::move(cards), rng);
  for (std::size_t l = 0; l < d.design.num_features(); ++l) d.feature_names.push_back("g" + std::to_string(l));
  return d;
}

/// Fresh directory under the system temp path, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("mcgmenn_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace mcgmenn::testing
