#include <gtest/gtest.h>

#include "support.hpp"

using namespace mcgmenn;
using namespace mcgmenn::testing;

namespace {

// Direct pairwise counting over all (positive, negative) pairs.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

CellResult cell(std::string ds, std::string method, std::uint64_t seed, std::optional<double> auc, double secs = 1.0) {
  CellResult c;
  c.dataset = std::move(ds);
  c.method = std::move(method);
  c.seed = seed;
  c.auc = auc;
  c.seconds = secs;
  return c;
}

const MethodSummary& summary(const AggregateTable& t, const std::string& m) {
  for (const auto& s : t.summaries)
    if (s.method == m) return s;
  throw std::runtime_error("missing method " + m);
}

}  // namespace

TEST(AucBinary, WorkedExample) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auc_binary(s, y), 0.75);
}

TEST(AucBinary, SeparatedInvertedAndDegenerate) {
  const std::vector<double> s{0.1, 0.2, 0.7, 0.9};
  EXPECT_DOUBLE_EQ(auc_binary(s, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(auc_binary(s, std::vector<int>{1, 1, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(auc_binary(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}), 0.5);
  EXPECT_THROW(auc_binary(s, std::vector<int>{1, 1, 1, 1}), DataError);
  EXPECT_THROW(auc_binary(s, std::vector<int>{0, 1}), ShapeError);
}

TEST(AucBinary, MatchesPairwiseOracleWithTies) {
  Rng rng(1);
  for (int inst = 0; inst < 100; ++inst) {
    std::uniform_int_distribution<int> n_dist(2, 60), score(0, 9);
    const int n = n_dist(rng);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = score(rng) / 10.0;  // coarse grid forces ties
      y[static_cast<std::size_t>(i)] = i % 2 == 0 ? 1 : (score(rng) < 5);
    }
    y[1] = 0;
    EXPECT_NEAR(auc_binary(s, y), pairwise_auc(s, y), 1e-12) << "instance " << inst;
  }
}

TEST(AucBinary, Invariances) {
  Rng rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> s(200), t(200), neg(200);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    s[i] = n(rng);
    y[i] = n(rng) + s[i] > 0;
    t[i] = std::exp(3.0 * s[i]) + 7.0;  // strictly increasing
    neg[i] = -s[i];
  }
  const double a = auc_binary(s, y);
  EXPECT_GE(a, 0.0);
  EXPECT_LE(a, 1.0);
  EXPECT_NEAR(auc_binary(t, y), a, 1e-15);
  EXPECT_NEAR(auc_binary(neg, y) + a, 1.0, 1e-12);
}

TEST(AucMulticlass, ReducesToBinaryForTwoClasses) {
  Rng rng(3);
  const Matrix Y = random_targets(80, 2, Link::softmax, rng);
  const Matrix P = apply_link(random_matrix(80, 2, rng), Link::softmax);
  std::vector<int> y(80);
  for (Eigen::Index i = 0; i < 80; ++i) y[static_cast<std::size_t>(i)] = Y(i, 1) > 0.5;
  EXPECT_NEAR(auc_multiclass(P, Y), auc_binary(Vector(P.col(1)), y), 1e-12);
}

TEST(AucMulticlass, PerfectAndOracle) {
  Rng rng(4);
  const Matrix Y = random_targets(120, 4, Link::softmax, rng);
  EXPECT_DOUBLE_EQ(auc_multiclass(Y, Y), 1.0);
  const Matrix P = apply_link(random_matrix(120, 4, rng), Link::softmax);
  double expected = 0.0;
  for (Eigen::Index c = 0; c < 4; ++c) {
    std::vector<double> s(120);
    std::vector<int> y(120);
    for (Eigen::Index i = 0; i < 120; ++i) {
      s[static_cast<std::size_t>(i)] = P(i, c);
      y[static_cast<std::size_t>(i)] = Y(i, c) > 0.5;
    }
    expected += pairwise_auc(s, y) / 4.0;
  }
  EXPECT_NEAR(auc_multiclass(P, Y), expected, 1e-12);
}

TEST(AucMulticlass, AbsentClassesSkipped) {
  Matrix Y = Matrix::Zero(4, 3), P(4, 3);
  Y(0, 0) = Y(1, 0) = Y(2, 1) = Y(3, 1) = 1.0;
  P << 0.9, 0.05, 0.05, 0.8, 0.1, 0.1, 0.2, 0.7, 0.1, 0.3, 0.6, 0.1;
  std::vector<std::size_t> skipped;
  EXPECT_DOUBLE_EQ(auc_multiclass(P, Y, &skipped), 1.0);
  EXPECT_EQ(skipped, std::vector<std::size_t>{2});
}

TEST(VarianceMae, Examples) {
  Matrix t = Matrix::Ones(1, 2), e(1, 2);
  e << 1.2, 0.9;
  EXPECT_DOUBLE_EQ(variance_mae(t, t), 0.0);
  EXPECT_NEAR(variance_mae(e, t), 0.15, 1e-15);
  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 1.5, 2, 2, 4;
  Matrix ap(2, 2), bp(2, 2);
  ap << 3, 4, 1, 2;
  bp << 2, 4, 1.5, 2;
  EXPECT_DOUBLE_EQ(variance_mae(a, b), variance_mae(ap, bp));
  EXPECT_THROW(variance_mae(a, Matrix::Ones(1, 2)), ShapeError);
}

TEST(PairedTTest, KnownValues) {
  // reference: t = 2.1997067253202993, p = 0.11520352425525615 (df 3)
  const std::vector<double> a{1, 2, 3, 4}, b{0.5, 2.1, 2.4, 3.0};
  const TTestResult r = paired_t_test(a, b);
  EXPECT_NEAR(r.t, 2.1997067253202993, 1e-12);
  EXPECT_NEAR(r.p_value, 0.11520352425525615, 1e-10);
  EXPECT_EQ(r.df, 3u);
  EXPECT_DOUBLE_EQ(paired_t_test(a, a).p_value, 1.0);
}

TEST(Aggregate, SingleMethod) {
  std::vector<CellResult> cells{cell("d", "ignore", 0, 0.7), cell("d", "ignore", 1, 0.8)};
  const auto t = aggregate(cells);
  EXPECT_DOUBLE_EQ(summary(t, "ignore").mrr, 1.0);
  EXPECT_DOUBLE_EQ(summary(t, "ignore").diff_pct, 0.0);
  EXPECT_DOUBLE_EQ(*summary(t, "ignore").time_ratio, 1.0);
}

TEST(Aggregate, RelativeDifference) {
  std::vector<CellResult> cells{cell("d", "ignore", 0, 0.6), cell("d", "mcgmenn", 0, 0.8)};
  const auto t = aggregate(cells);
  EXPECT_NEAR(summary(t, "ignore").diff_pct, 25.0, 1e-12);
  EXPECT_DOUBLE_EQ(summary(t, "ignore").mrr, 0.5);
}

TEST(Aggregate, HandComputedThreeByThree) {
  // d1: A .9 > B .8 > C .7; d2: B = C .8 > A .6; d3: A = C .5 > B .4.
  // A = ignore (2 s), B = ohe (4 s), C = mcgmenn (10 s).
  std::vector<CellResult> cells;
  const std::vector<std::pair<std::string, std::array<double, 3>>> grid{
      {"d1", {0.9, 0.8, 0.7}}, {"d2", {0.6, 0.8, 0.8}}, {"d3", {0.5, 0.4, 0.5}}};
  const std::array<std::string, 3> methods{"ignore", "ohe", "mcgmenn"};
  const std::array<double, 3> secs{2.0, 4.0, 10.0};
  for (const auto& [ds, aucs] : grid)
    for (std::size_t m = 0; m < 3; ++m) cells.push_back(cell(ds, methods[m], 0, aucs[m], secs[m]));
  const auto t = aggregate(cells);
  EXPECT_NEAR(summary(t, "ignore").mrr, (1.0 + 1.0 / 3 + 0.75) / 3, 1e-12);
  EXPECT_NEAR(summary(t, "ohe").mrr, (0.5 + 0.75 + 1.0 / 3) / 3, 1e-12);
  EXPECT_NEAR(summary(t, "mcgmenn").mrr, (1.0 / 3 + 0.75 + 0.75) / 3, 1e-12);
  EXPECT_NEAR(summary(t, "ignore").diff_pct, 25.0 / 3, 1e-9);
  EXPECT_NEAR(summary(t, "ohe").diff_pct, (100.0 / 9 + 20.0) / 3, 1e-9);
  EXPECT_NEAR(summary(t, "mcgmenn").diff_pct, (200.0 / 9) / 3, 1e-9);
  EXPECT_NEAR(*summary(t, "ohe").time_ratio, 2.0, 1e-12);
  EXPECT_NEAR(*summary(t, "mcgmenn").time_ratio, 5.0, 1e-12);
  EXPECT_DOUBLE_EQ(*summary(t, "ignore").time_ratio, 1.0);

  // row order does not matter
  std::reverse(cells.begin(), cells.end());
  const auto r = aggregate(cells);
  for (const auto& m : methods) {
    EXPECT_EQ(summary(r, m).mrr, summary(t, m).mrr);
    EXPECT_EQ(summary(r, m).diff_pct, summary(t, m).diff_pct);
  }
  std::ostringstream a, b;
  write_aggregate_csv(a, t);
  write_aggregate_csv(b, r);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Aggregate, MissingCellsAreFlagged) {
  std::vector<CellResult> cells{cell("d1", "ignore", 0, 0.6), cell("d1", "mcgmenn", 0, std::nullopt),
                                cell("d2", "ignore", 0, 0.7), cell("d2", "mcgmenn", 0, 0.9)};
  const auto t = aggregate(cells);
  EXPECT_TRUE(summary(t, "mcgmenn").flagged);
  EXPECT_EQ(summary(t, "mcgmenn").missing_cells, 1u);
  EXPECT_EQ(summary(t, "mcgmenn").datasets_ranked, 1u);
  EXPECT_DOUBLE_EQ(summary(t, "mcgmenn").mrr, 1.0);
  EXPECT_FALSE(summary(t, "ignore").flagged);
  std::ostringstream csv;
  write_aggregate_csv(csv, t);
  EXPECT_NE(csv.str().find("NA"), std::string::npos);
}

TEST(Aggregate, HighlightsTiesByPairedTest) {
  std::vector<CellResult> cells;
  const std::vector<double> a{0.80, 0.82, 0.81}, close{0.79, 0.83, 0.80}, far{0.60, 0.61, 0.62};
  for (std::uint64_t s = 0; s < 3; ++s) {
    cells.push_back(cell("d", "mcgmenn", s, a[s]));
    cells.push_back(cell("d", "ohe", s, close[s]));
    cells.push_back(cell("d", "ignore", s, far[s]));
  }
  const auto t = aggregate(cells);
  EXPECT_TRUE(t.highlighted.at("d").count("mcgmenn"));
  EXPECT_TRUE(t.highlighted.at("d").count("ohe"));
  EXPECT_FALSE(t.highlighted.at("d").count("ignore"));
  std::ostringstream txt;
  write_aggregate_text(txt, t);
  EXPECT_NE(txt.str().find("MRR"), std::string::npos);
}
