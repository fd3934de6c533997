#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "mcgmenn/errors.hpp"
#include "mcgmenn/neural_net.hpp"

namespace mcgmenn {

/// Mann-Whitney AUC; tied scores count one half.
inline double auc_binary(std::span<const double> scores, std::span<const int> labels) {
  detail::require_shape(scores.size() == labels.size(), "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] != 0) rank_sum_pos += mid_rank;
    i = j;
  }
  for (int y : labels) n_pos += y != 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("AUC is undefined when only one class is present");
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

inline double auc_binary(const Vector& scores, const std::vector<int>& labels) {
  return auc_binary(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), labels);
}

/// Macro one-vs-rest AUC over the classes that have both positives and
/// negatives. Single-column inputs are treated as binary.
inline double auc_multiclass(const Matrix& probs, const Matrix& Y, std::vector<std::size_t>* skipped = nullptr) {
  detail::require_shape(probs.rows() == Y.rows() && probs.cols() == Y.cols(), "probabilities and targets differ in shape");
  if (probs.cols() == 1) {
    std::vector<int> labels(static_cast<std::size_t>(Y.rows()));
    for (Eigen::Index i = 0; i < Y.rows(); ++i) labels[static_cast<std::size_t>(i)] = Y(i, 0) > 0.5;
    return auc_binary(Vector(probs.col(0)), labels);
  }
  double total = 0.0;
  std::size_t used = 0;
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    std::vector<int> labels(static_cast<std::size_t>(Y.rows()));
    std::size_t pos = 0;
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
      labels[static_cast<std::size_t>(i)] = Y(i, c) > 0.5;
      pos += labels[static_cast<std::size_t>(i)];
    }
    if (pos == 0 || pos == labels.size()) {
      if (skipped) skipped->push_back(static_cast<std::size_t>(c));
      continue;
    }
    total += auc_binary(Vector(probs.col(c)), labels);
    ++used;
  }
  if (used == 0) throw DataError("AUC is undefined: no class has both positive and negative rows");
  return total / static_cast<double>(used);
}

/// Mean absolute difference between estimated and true variance components.
inline double variance_mae(const Matrix& estimated, const Matrix& truth) {
  detail::require_shape(estimated.rows() == truth.rows() && estimated.cols() == truth.cols(),
                        "estimated and true variance tables differ in shape");
  if (estimated.size() == 0) throw ShapeError("no variance components to compare");
  return (estimated - truth).cwiseAbs().mean();
}

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;
  std::size_t df = 0;
};

/// Two-sided paired t-test of mean(a - b) = 0.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  detail::require_shape(a.size() == b.size(), "paired samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) return {0.0, 1.0, 0};
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  TTestResult r;
  r.df = n - 1;
  if (sd == 0.0) {
    r.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    r.p_value = mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(r.df));
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

/// Outcome of one (dataset, method, seed) run. A missing AUC marks a failed cell.
struct CellResult {
  std::string dataset;
  std::string method;
  std::uint64_t seed = 0;
  std::optional<double> auc;
  double seconds = 0.0;
  std::optional<double> variance_mae;
  std::string error;
};

struct MethodSummary {
  std::string method;
  double mrr = std::numeric_limits<double>::quiet_NaN();
  double diff_pct = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> time_ratio;
  std::optional<double> mean_variance_mae;
  std::size_t datasets_ranked = 0;
  std::size_t missing_cells = 0;
  bool flagged = false;  // some cells were NA and were excluded from the means
};

struct AggregateTable {
  std::vector<std::string> datasets;
  std::vector<std::string> methods;
  std::map<std::string, std::map<std::string, double>> mean_auc;  // [dataset][method]
  std::map<std::string, std::map<std::string, double>> sd_auc;
  std::map<std::string, std::set<std::string>> highlighted;  // best or not significantly different
  std::vector<MethodSummary> summaries;
  std::string reference_method;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Ranks methods per dataset by mean AUC over seeds (1 = best; tied methods
/// share the mean of their reciprocal ranks) and summarizes MRR, mean
/// relative difference to the best in percent, and training time relative to
/// `reference_method`.
inline AggregateTable aggregate(std::span<const CellResult> cells, const std::string& reference_method = "ignore",
                                double alpha = 0.05) {
  AggregateTable table;
  table.reference_method = reference_method;
  std::set<std::string> dataset_set, method_set;
  for (const auto& c : cells) {
    dataset_set.insert(c.dataset);
    method_set.insert(c.method);
  }
  table.datasets.assign(dataset_set.begin(), dataset_set.end());
  table.methods.assign(method_set.begin(), method_set.end());

  // [dataset][method] -> seed -> value
  std::map<std::string, std::map<std::string, std::map<std::uint64_t, double>>> auc_by_seed;
  std::map<std::string, std::map<std::string, std::vector<double>>> seconds;
  std::map<std::string, std::vector<double>> var_mae;
  std::map<std::string, std::size_t> missing;
  for (const auto& c : cells) {
    if (!c.auc) {
      ++missing[c.method];
      continue;
    }
    auc_by_seed[c.dataset][c.method][c.seed] = *c.auc;
    seconds[c.dataset][c.method].push_back(c.seconds);
    if (c.variance_mae) var_mae[c.method].push_back(*c.variance_mae);
  }

  std::map<std::string, std::vector<double>> recip, diffs, ratios;
  for (const auto& ds : table.datasets) {
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [method, by_seed] : auc_by_seed[ds]) {
      std::vector<double> v;
      for (const auto& [seed, auc] : by_seed) v.push_back(auc);
      table.mean_auc[ds][method] = detail::mean_of(v);
      table.sd_auc[ds][method] = detail::sd_of(v);
      ranked.emplace_back(table.mean_auc[ds][method], method);
    }
    if (ranked.empty()) continue;
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const double best = ranked.front().first;
    for (std::size_t i = 0; i < ranked.size();) {
      std::size_t j = i;
      while (j < ranked.size() && ranked[j].first == ranked[i].first) ++j;
      double shared = 0.0;
      for (std::size_t r = i + 1; r <= j; ++r) shared += 1.0 / static_cast<double>(r);
      shared /= static_cast<double>(j - i);
      for (std::size_t k = i; k < j; ++k) recip[ranked[k].second].push_back(shared);
      i = j;
    }
    for (const auto& [auc, method] : ranked) diffs[method].push_back((best - auc) / best * 100.0);

    // Highlight the best method and every method whose paired difference to it is not significant.
    const std::string& best_method = ranked.front().second;
    for (const auto& [auc, method] : ranked) {
      if (auc == best) {
        table.highlighted[ds].insert(method);
        continue;
      }
      std::vector<double> a, b;
      for (const auto& [seed, value] : auc_by_seed[ds][best_method]) {
        auto it = auc_by_seed[ds][method].find(seed);
        if (it == auc_by_seed[ds][method].end()) continue;
        a.push_back(value);
        b.push_back(it->second);
      }
      if (a.size() >= 2 && paired_t_test(a, b).p_value >= alpha) table.highlighted[ds].insert(method);
    }

    const auto ref = seconds[ds].find(reference_method);
    if (ref != seconds[ds].end()) {
      const double ref_time = detail::mean_of(ref->second);
      for (const auto& [method, secs] : seconds[ds])
        if (ref_time > 0.0) ratios[method].push_back(detail::mean_of(secs) / ref_time);
    }
  }

  for (const auto& method : table.methods) {
    MethodSummary s;
    s.method = method;
    s.missing_cells = missing[method];
    s.flagged = s.missing_cells > 0;
    if (!recip[method].empty()) {
      s.mrr = detail::mean_of(recip[method]);
      s.diff_pct = detail::mean_of(diffs[method]);
      s.datasets_ranked = recip[method].size();
    }
    if (!ratios[method].empty()) s.time_ratio = detail::mean_of(ratios[method]);
    if (!var_mae[method].empty()) s.mean_variance_mae = detail::mean_of(var_mae[method]);
    table.summaries.push_back(std::move(s));
  }
  return table;
}

namespace detail {
inline std::string fmt_number(double v, int precision) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}
}  // namespace detail

/// Wide CSV: one row per dataset with mean AUC per method, then summary rows.
inline void write_aggregate_csv(std::ostream& os, const AggregateTable& t) {
  os << "row";
  for (const auto& m : t.methods) os << ',' << m;
  os << '\n';
  os.precision(17);
  for (const auto& ds : t.datasets) {
    os << ds;
    for (const auto& m : t.methods) {
      auto it = t.mean_auc.find(ds);
      if (it != t.mean_auc.end() && it->second.count(m))
        os << ',' << it->second.at(m);
      else
        os << ",NA";
    }
    os << '\n';
  }
  auto summary_row = [&](const char* label, auto get) {
    os << label;
    for (const auto& s : t.summaries) {
      const std::optional<double> v = get(s);
      if (v && std::isfinite(*v))
        os << ',' << *v;
      else
        os << ",NA";
    }
    os << '\n';
  };
  summary_row("MRR", [](const MethodSummary& s) { return std::optional<double>(s.mrr); });
  summary_row("diff_pct", [](const MethodSummary& s) { return std::optional<double>(s.diff_pct); });
  summary_row("time_ratio", [](const MethodSummary& s) { return s.time_ratio; });
  summary_row("variance_mae", [](const MethodSummary& s) { return s.mean_variance_mae; });
  summary_row("missing_cells", [](const MethodSummary& s) { return std::optional<double>(static_cast<double>(s.missing_cells)); });
}

/// Plain-text table: mean (sd) AUC per dataset, '*' marks highlighted cells.
inline void write_aggregate_text(std::ostream& os, const AggregateTable& t) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"Variation"};
  header.insert(header.end(), t.methods.begin(), t.methods.end());
  grid.push_back(header);
  for (const auto& ds : t.datasets) {
    std::vector<std::string> row{ds};
    for (const auto& m : t.methods) {
      auto it = t.mean_auc.find(ds);
      if (it == t.mean_auc.end() || !it->second.count(m)) {
        row.push_back("--");
        continue;
      }
      std::string cell = detail::fmt_number(it->second.at(m), 3) + " (" + detail::fmt_number(t.sd_auc.at(ds).at(m), 3) + ")";
      auto hl = t.highlighted.find(ds);
      if (hl != t.highlighted.end() && hl->second.count(m)) cell += " *";
      row.push_back(cell);
    }
    grid.push_back(row);
  }
  auto add_summary = [&](const std::string& label, auto get, int precision) {
    std::vector<std::string> row{label};
    for (const auto& s : t.summaries) {
      const std::optional<double> v = get(s);
      row.push_back(v ? detail::fmt_number(*v, precision) : "NA");
    }
    grid.push_back(row);
  };
  add_summary("MRR", [](const MethodSummary& s) { return std::optional<double>(s.mrr); }, 2);
  add_summary("Diff. %", [](const MethodSummary& s) { return std::optional<double>(s.diff_pct); }, 2);
  add_summary("Train time", [](const MethodSummary& s) { return s.time_ratio; }, 2);
  add_summary("MAE(sigma2)", [](const MethodSummary& s) { return s.mean_variance_mae; }, 2);

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : grid)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (std::size_t c = 0; c < grid[r].size(); ++c) {
      if (c == 0)
        os << std::left << std::setw(static_cast<int>(width[c])) << grid[r][c];
      else
        os << "  " << std::right << std::setw(static_cast<int>(width[c])) << grid[r][c];
    }
    os << '\n';
    if (r == 0 || r == t.datasets.size()) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total - 2, '-') << '\n';
    }
  }
  bool any_flag = false;
  for (const auto& s : t.summaries) any_flag = any_flag || s.flagged;
  if (any_flag) {
    os << "NA cells excluded from means:";
    for (const auto& s : t.summaries)
      if (s.flagged) os << ' ' << s.method << '(' << s.missing_cells << ')';
    os << '\n';
  }
}

}  // namespace mcgmenn
