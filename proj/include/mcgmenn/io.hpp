#pragma once

// CSV tables, dataset schemas, train-fitted preprocessing, and the on-disk
// layout written by `simulate`.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mcgmenn/dataset.hpp"
#include "mcgmenn/errors.hpp"
#include "mcgmenn/simulation.hpp"

namespace mcgmenn {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("column '" + name + "' not found");
    return static_cast<std::size_t>(it - header.begin());
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no, const std::string& source) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  if (quoted) throw DataError(source + ":" + std::to_string(line_no) + ": unterminated quoted field");
  out.push_back(std::move(cell));
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

/// Reads a comma-separated table with a header row. Rows whose cell count
/// differs from the header are rejected with their 1-based line number.
inline CsvTable read_csv(std::istream& in, const std::string& source = "<csv>") {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line, line_no, source);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw DataError(source + ": missing header row");
  return t;
}

inline CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_csv(in, path.string());
}

inline void write_csv(std::ostream& os, const CsvTable& t) {
  auto row_out = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << detail::csv_escape(cells[i]);
    os << '\n';
  };
  row_out(t.header);
  for (const auto& r : t.rows) row_out(r);
}

/// Shortest round-trip decimal text for a double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Schema

enum class ColumnRole { numeric, low_card_onehot, clustering, categorical, dropped, target };

inline std::string to_string(ColumnRole r) {
  switch (r) {
    case ColumnRole::numeric: return "numeric";
    case ColumnRole::low_card_onehot: return "low_card_onehot";
    case ColumnRole::clustering: return "clustering";
    case ColumnRole::categorical: return "categorical";
    case ColumnRole::dropped: return "dropped";
    case ColumnRole::target: return "target";
  }
  return "?";
}

inline ColumnRole column_role_from_string(const std::string& s) {
  for (auto r : {ColumnRole::numeric, ColumnRole::low_card_onehot, ColumnRole::clustering, ColumnRole::categorical,
                 ColumnRole::dropped, ColumnRole::target})
    if (to_string(r) == s) return r;
  throw ConfigError("unknown column role '" + s + "'");
}

enum class TaskKind { binary, multiclass, regression };

inline std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::binary: return "binary";
    case TaskKind::multiclass: return "multiclass";
    case TaskKind::regression: return "regression";
  }
  return "?";
}

inline TaskKind task_from_string(const std::string& s) {
  if (s == "binary") return TaskKind::binary;
  if (s == "multiclass") return TaskKind::multiclass;
  if (s == "regression") return TaskKind::regression;
  throw ConfigError("unknown task '" + s + "' (known: binary, multiclass, regression)");
}

inline Link link_for(TaskKind t) {
  switch (t) {
    case TaskKind::binary: return Link::sigmoid;
    case TaskKind::multiclass: return Link::softmax;
    case TaskKind::regression: return Link::identity;
  }
  return Link::softmax;
}

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::numeric;
};

/// Column roles for one CSV layout. A `categorical` column is resolved at
/// fit time: more than `cardinality_threshold` levels makes it a clustering
/// feature, otherwise it is one-hot encoded.
struct DatasetSchema {
  std::string target;
  TaskKind task = TaskKind::binary;
  std::vector<std::string> classes;  // multiclass label order; empty = derived from training data
  std::vector<ColumnSpec> columns;   // every non-target column
  std::size_t cardinality_threshold = 10;

  std::vector<std::string> columns_with(ColumnRole role) const {
    std::vector<std::string> out;
    for (const auto& c : columns)
      if (c.role == role) out.push_back(c.name);
    return out;
  }

  void validate() const {
    if (target.empty()) throw ConfigError("schema has no target column");
    std::map<std::string, int> seen{{target, 1}};
    for (const auto& c : columns) {
      if (c.role == ColumnRole::target) throw ConfigError("target role is implied by the 'target' field");
      if (seen[c.name]++) throw ConfigError("column '" + c.name + "' is assigned more than one role");
    }
    if (task == TaskKind::multiclass && classes.size() == 1) throw ConfigError("multiclass schema needs at least two classes");
  }

  /// Every header column must have exactly one role, and every schema column
  /// must exist.
  void check_header(const std::vector<std::string>& header, const std::string& source = "<csv>") const {
    validate();
    std::map<std::string, int> roles{{target, 0}};
    for (const auto& c : columns) roles[c.name] = 0;
    for (const auto& h : header) {
      auto it = roles.find(h);
      if (it == roles.end()) throw DataError(source + ": column '" + h + "' has no role in the schema");
      if (it->second++) throw DataError(source + ": duplicate column '" + h + "'");
    }
    for (const auto& [name, count] : roles)
      if (count == 0) throw DataError(source + ": schema column '" + name + "' is missing from the header");
  }
};

inline json to_json(const DatasetSchema& s) {
  json cols = json::array();
  for (const auto& c : s.columns) cols.push_back({{"name", c.name}, {"role", to_string(c.role)}});
  json j = {{"target", s.target}, {"task", to_string(s.task)}, {"columns", cols},
            {"cardinality_threshold", s.cardinality_threshold}};
  if (!s.classes.empty()) j["classes"] = s.classes;
  return j;
}

inline DatasetSchema schema_from_json(const json& j) {
  try {
    DatasetSchema s;
    s.target = j.at("target").get<std::string>();
    s.task = task_from_string(j.value("task", std::string("binary")));
    s.cardinality_threshold = j.value("cardinality_threshold", std::size_t{10});
    if (j.contains("classes"))
      for (const auto& c : j.at("classes")) s.classes.push_back(c.is_string() ? c.get<std::string>() : c.dump());
    for (const auto& c : j.at("columns"))
      s.columns.push_back({c.at("name").get<std::string>(), column_role_from_string(c.at("role").get<std::string>())});
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid schema: ") + e.what());
  }
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Preprocessing

/// Level-to-index map in first-appearance order.
struct Vocabulary {
  std::vector<std::string> levels;
  std::map<std::string, std::size_t> index;

  void add(const std::string& level) {
    if (index.emplace(level, levels.size()).second) levels.push_back(level);
  }
  std::optional<std::size_t> find(const std::string& level) const {
    auto it = index.find(level);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }
  std::size_t size() const { return levels.size(); }
};

inline Vocabulary vocabulary_from_levels(const std::vector<std::string>& levels) {
  Vocabulary v;
  for (const auto& l : levels) v.add(l);
  return v;
}

struct TransformReport {
  std::size_t unseen_cluster_levels = 0;  // cells mapped to the unseen sentinel
  std::size_t unseen_onehot_levels = 0;   // cells encoded as all-zero one-hot
};

/// Train-fitted transformation from a CSV table to a Dataset: numeric
/// columns standardized with training mean/sd, low-cardinality categoricals
/// one-hot encoded, clustering columns mapped to indices.
struct Preprocessor {
  DatasetSchema schema;
  std::vector<std::string> numeric;
  Vector mean, sd;
  std::vector<std::string> onehot;
  std::vector<Vocabulary> onehot_vocab;
  std::vector<std::string> clustering;
  std::vector<Vocabulary> cluster_vocab;
  Vocabulary classes;

  Link link() const { return link_for(schema.task); }
  std::vector<std::size_t> cardinalities() const {
    std::vector<std::size_t> out;
    for (const auto& v : cluster_vocab) out.push_back(v.size());
    return out;
  }
  std::size_t fixed_dim() const {
    std::size_t n = numeric.size();
    for (const auto& v : onehot_vocab) n += v.size();
    return n;
  }
};

namespace detail {

inline bool parse_number(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && e[-1] == ' ') --e;
  if (b < e && *b == '+') ++b;
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e && std::isfinite(out);
}

/// Parses the named numeric columns; any empty, NaN, or non-numeric cell is
/// collected into a per-column report before throwing.
inline Matrix parse_numeric_columns(const CsvTable& t, const std::vector<std::string>& names, const std::string& source) {
  Matrix out(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(names.size()));
  std::string report;
  for (std::size_t j = 0; j < names.size(); ++j) {
    const std::size_t col = t.column(names[j]);
    std::size_t bad = 0, first_line = 0;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      double v = 0.0;
      if (!parse_number(t.rows[i][col], v)) {
        if (bad++ == 0) first_line = t.line_numbers[i];
        v = 0.0;
      }
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
    if (bad)
      report += "\n  " + names[j] + ": " + std::to_string(bad) + " missing/non-numeric cell(s), first at line " +
                std::to_string(first_line);
  }
  if (!report.empty()) throw DataError(source + ": rejected NaN or missing values" + report);
  return out;
}

inline std::vector<std::string> sorted_levels(std::vector<std::string> levels) {
  // integers in numeric order, then everything else lexicographically
  auto as_int = [](const std::string& s, long long& v) {
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
  };
  std::sort(levels.begin(), levels.end(), [&](const std::string& a, const std::string& b) {
    long long x = 0, y = 0;
    const bool ia = as_int(a, x), ib = as_int(b, y);
    if (ia && ib) return x < y;
    if (ia != ib) return ia;
    return a < b;
  });
  return levels;
}

}  // namespace detail

inline Preprocessor fit_preprocessor(const DatasetSchema& schema, const CsvTable& train,
                                     const std::string& source = "<train>") {
  schema.check_header(train.header, source);
  if (train.rows.empty()) throw DataError(source + ": no data rows");
  Preprocessor p;
  p.schema = schema;
  p.numeric = schema.columns_with(ColumnRole::numeric);
  const Matrix num = detail::parse_numeric_columns(train, p.numeric, source);
  p.mean = num.colwise().mean().transpose();
  p.sd.resize(num.cols());
  for (Eigen::Index j = 0; j < num.cols(); ++j) {
    const double var = (num.col(j).array() - p.mean(j)).square().mean();
    p.sd(j) = var > 0.0 ? std::sqrt(var) : 1.0;
  }

  auto build_vocab = [&](const std::string& name) {
    const std::size_t col = train.column(name);
    Vocabulary v;
    for (const auto& r : train.rows) v.add(r[col]);
    return v;
  };
  for (const auto& c : schema.columns) {
    if (c.role == ColumnRole::low_card_onehot) {
      p.onehot.push_back(c.name);
      p.onehot_vocab.push_back(build_vocab(c.name));
    } else if (c.role == ColumnRole::clustering) {
      p.clustering.push_back(c.name);
      p.cluster_vocab.push_back(build_vocab(c.name));
    } else if (c.role == ColumnRole::categorical) {
      Vocabulary v = build_vocab(c.name);
      if (v.size() > schema.cardinality_threshold) {
        p.clustering.push_back(c.name);
        p.cluster_vocab.push_back(std::move(v));
      } else {
        p.onehot.push_back(c.name);
        p.onehot_vocab.push_back(std::move(v));
      }
    }
  }

  if (schema.task == TaskKind::multiclass) {
    if (!schema.classes.empty()) {
      p.classes = vocabulary_from_levels(schema.classes);
    } else {
      const std::size_t col = train.column(schema.target);
      std::vector<std::string> seen;
      for (const auto& r : train.rows) seen.push_back(r[col]);
      std::sort(seen.begin(), seen.end());
      seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
      p.classes = vocabulary_from_levels(detail::sorted_levels(seen));
    }
    if (p.classes.size() < 2) throw DataError(source + ": multiclass target needs at least two classes");
  }
  return p;
}

inline Dataset transform(const Preprocessor& p, const CsvTable& t, TransformReport* report = nullptr,
                         const std::string& source = "<csv>") {
  p.schema.check_header(t.header, source);
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  Dataset d;
  d.link = p.link();
  d.feature_names = p.clustering;

  Matrix num = detail::parse_numeric_columns(t, p.numeric, source);
  for (Eigen::Index j = 0; j < num.cols(); ++j) num.col(j) = (num.col(j).array() - p.mean(j)) / p.sd(j);
  d.X.resize(n, static_cast<Eigen::Index>(p.fixed_dim()));
  d.X.leftCols(num.cols()) = num;
  TransformReport rep;
  Eigen::Index at = num.cols();
  for (std::size_t k = 0; k < p.onehot.size(); ++k) {
    const std::size_t col = t.column(p.onehot[k]);
    const auto width = static_cast<Eigen::Index>(p.onehot_vocab[k].size());
    d.X.middleCols(at, width).setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (auto idx = p.onehot_vocab[k].find(t.rows[static_cast<std::size_t>(i)][col]))
        d.X(i, at + static_cast<Eigen::Index>(*idx)) = 1.0;
      else
        ++rep.unseen_onehot_levels;
    }
    at += width;
  }

  d.design.cardinalities = p.cardinalities();
  d.design.assignments.resize(p.clustering.size());
  for (std::size_t l = 0; l < p.clustering.size(); ++l) {
    const std::size_t col = t.column(p.clustering[l]);
    auto& assign = d.design.assignments[l];
    assign.reserve(t.rows.size());
    for (const auto& r : t.rows) {
      if (auto idx = p.cluster_vocab[l].find(r[col])) {
        assign.push_back(static_cast<ClusterIndex>(*idx));
      } else {
        assign.push_back(kUnseenCluster);
        ++rep.unseen_cluster_levels;
      }
    }
  }

  const std::size_t ycol = t.column(p.schema.target);
  switch (p.schema.task) {
    case TaskKind::binary:
    case TaskKind::regression:
      d.Y = detail::parse_numeric_columns(t, {p.schema.target}, source);
      if (p.schema.task == TaskKind::binary)
        for (Eigen::Index i = 0; i < n; ++i)
          if (d.Y(i, 0) != 0.0 && d.Y(i, 0) != 1.0)
            throw DataError(source + ":" + std::to_string(t.line_numbers[static_cast<std::size_t>(i)]) +
                            ": binary target must be 0 or 1");
      break;
    case TaskKind::multiclass:
      d.Y = Matrix::Zero(n, static_cast<Eigen::Index>(p.classes.size()));
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& cell = t.rows[static_cast<std::size_t>(i)][ycol];
        auto idx = p.classes.find(cell);
        if (!idx)
          throw DataError(source + ":" + std::to_string(t.line_numbers[static_cast<std::size_t>(i)]) +
                          ": unknown class '" + cell + "'");
        d.Y(i, static_cast<Eigen::Index>(*idx)) = 1.0;
      }
      break;
  }
  if (report) *report = rep;
  return d;
}

inline json vocabulary_to_json(const Vocabulary& v) { return v.levels; }

inline json to_json(const Preprocessor& p) {
  json onehot = json::array(), clustering = json::array();
  for (std::size_t k = 0; k < p.onehot.size(); ++k)
    onehot.push_back({{"name", p.onehot[k]}, {"levels", vocabulary_to_json(p.onehot_vocab[k])}});
  for (std::size_t l = 0; l < p.clustering.size(); ++l)
    clustering.push_back({{"name", p.clustering[l]}, {"levels", vocabulary_to_json(p.cluster_vocab[l])}});
  return {{"schema", to_json(p.schema)},
          {"numeric", p.numeric},
          {"mean", vector_to_json(p.mean)},
          {"sd", vector_to_json(p.sd)},
          {"onehot", onehot},
          {"clustering", clustering},
          {"classes", p.classes.levels}};
}

inline Preprocessor preprocessor_from_json(const json& j) {
  try {
    Preprocessor p;
    p.schema = schema_from_json(j.at("schema"));
    p.numeric = j.at("numeric").get<std::vector<std::string>>();
    p.mean = vector_from_json(j.at("mean"));
    p.sd = vector_from_json(j.at("sd"));
    for (const auto& o : j.at("onehot")) {
      p.onehot.push_back(o.at("name").get<std::string>());
      p.onehot_vocab.push_back(vocabulary_from_levels(o.at("levels").get<std::vector<std::string>>()));
    }
    for (const auto& c : j.at("clustering")) {
      p.clustering.push_back(c.at("name").get<std::string>());
      p.cluster_vocab.push_back(vocabulary_from_levels(c.at("levels").get<std::vector<std::string>>()));
    }
    p.classes = vocabulary_from_levels(j.at("classes").get<std::vector<std::string>>());
    detail::require_shape(static_cast<std::size_t>(p.mean.size()) == p.numeric.size() &&
                              static_cast<std::size_t>(p.sd.size()) == p.numeric.size(),
                          "preprocessor statistics do not match numeric columns");
    return p;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid preprocessor: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Simulated datasets on disk

/// CSV rows for the listed rows of a simulated dataset: x0..x{D-1},
/// z0..z{L-1} (cluster ids), y (0/1 or class index).
inline CsvTable simulated_table(const GeneratedDataset& g, std::span<const std::size_t> rows) {
  const Dataset& d = g.data;
  CsvTable t;
  for (Eigen::Index j = 0; j < d.X.cols(); ++j) t.header.push_back("x" + std::to_string(j));
  for (std::size_t l = 0; l < d.design.num_features(); ++l) t.header.push_back(d.feature_name(l));
  t.header.push_back("y");
  for (auto r : rows) {
    const auto i = static_cast<Eigen::Index>(r);
    std::vector<std::string> cells;
    cells.reserve(t.header.size());
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) cells.push_back(format_double(d.X(i, j)));
    for (std::size_t l = 0; l < d.design.num_features(); ++l) cells.push_back(std::to_string(d.design.assignments[l][r]));
    if (d.link == Link::softmax) {
      Eigen::Index c = 0;
      d.Y.row(i).maxCoeff(&c);
      cells.push_back(std::to_string(c));
    } else {
      cells.push_back(format_double(d.Y(i, 0)));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline DatasetSchema simulated_schema(const GeneratedDataset& g) {
  DatasetSchema s;
  s.target = "y";
  s.task = g.data.link == Link::softmax ? TaskKind::multiclass : TaskKind::binary;
  if (s.task == TaskKind::multiclass)
    for (std::size_t c = 0; c < g.data.output_dim(); ++c) s.classes.push_back(std::to_string(c));
  for (Eigen::Index j = 0; j < g.data.X.cols(); ++j) s.columns.push_back({"x" + std::to_string(j), ColumnRole::numeric});
  for (std::size_t l = 0; l < g.data.design.num_features(); ++l)
    s.columns.push_back({g.data.feature_name(l), ColumnRole::clustering});
  return s;
}

/// Ground truth keyed by feature name: variance matrix and effect tables with
/// cluster ids as row order.
inline json simulated_truth(const GeneratedDataset& g) {
  json sigma2 = json::object(), effects = json::object();
  for (std::size_t l = 0; l < g.data.design.num_features(); ++l) {
    const auto& name = g.data.feature_name(l);
    sigma2[name] = std::vector<double>(g.true_sigma2.cols());
    for (Eigen::Index c = 0; c < g.true_sigma2.cols(); ++c)
      sigma2[name][static_cast<std::size_t>(c)] = g.true_sigma2(static_cast<Eigen::Index>(l), c);
    effects[name] = matrix_to_json(g.true_effects.tables[l]);
  }
  return {{"scenario", to_json(g.spec)}, {"sigma2", sigma2}, {"effects", effects}};
}

/// Writes train.csv, val.csv, test.csv, schema.json and truth.json into `dir`.
inline void write_simulated(const GeneratedDataset& g, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
  auto emit = [&](const char* name, const std::vector<std::size_t>& rows) {
    std::ofstream out(dir / name);
    if (!out) throw ConfigError("cannot write " + (dir / name).string());
    write_csv(out, simulated_table(g, rows));
  };
  emit("train.csv", g.train_rows);
  emit("val.csv", g.val_rows);
  emit("test.csv", g.test_rows);
  write_json_file(dir / "schema.json", to_json(simulated_schema(g)));
  write_json_file(dir / "truth.json", simulated_truth(g));
}

/// True variances in the preprocessor's clustering-feature order.
inline Matrix truth_sigma2(const json& truth, const std::vector<std::string>& features, std::size_t classes) {
  Matrix out(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(classes));
  try {
    for (std::size_t l = 0; l < features.size(); ++l) {
      const auto row = truth.at("sigma2").at(features[l]).get<std::vector<double>>();
      if (row.size() != classes) throw DataError("truth for '" + features[l] + "' has the wrong class count");
      for (std::size_t c = 0; c < classes; ++c) out(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(c)) = row[c];
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("truth file does not match the model: ") + e.what());
  }
  return out;
}

}  // namespace mcgmenn
