#pragma once

// Command-line front end: simulate, train, evaluate, benchmark, aggregate.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mcgmenn/io.hpp"
#include "mcgmenn/runner.hpp"
#include "mcgmenn/simulation.hpp"

namespace mcgmenn {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Benchmark cells

struct BenchmarkGrid {
  std::vector<std::string> scenarios;
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  RunConfig run;  // method field unused
};

inline BenchmarkGrid grid_from_json(const json& j) {
  BenchmarkGrid g;
  try {
    g.scenarios = j.at("scenarios").get<std::vector<std::string>>();
    g.methods = j.value("methods", std::vector<std::string>{"mcgmenn", "ignore", "ohe", "te", "embedding"});
    g.seeds = j.value("seeds", std::vector<std::uint64_t>{0, 1, 2});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad benchmark grid: ") + e.what());
  }
  json rest = j;
  rest.erase("scenarios"), rest.erase("methods"), rest.erase("seeds");
  g.run = run_config_from_json(rest);
  if (g.scenarios.empty() || g.methods.empty() || g.seeds.empty()) throw ConfigError("benchmark grid has an empty axis");
  for (const auto& s : g.scenarios) find_scenario(s);
  for (const auto& m : g.methods) method_from_string(m);
  return g;
}

inline json to_json(const CellResult& c) {
  json j = {{"dataset", c.dataset}, {"method", c.method}, {"seed", c.seed}, {"seconds", c.seconds}};
  j["auc"] = c.auc ? json(*c.auc) : json(nullptr);
  j["variance_mae"] = c.variance_mae ? json(*c.variance_mae) : json(nullptr);
  if (!c.error.empty()) j["error"] = c.error;
  return j;
}

inline CellResult cell_from_json(const json& j) {
  try {
    CellResult c;
    c.dataset = j.at("dataset").get<std::string>();
    c.method = j.at("method").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.seconds = j.at("seconds").get<double>();
    if (!j.at("auc").is_null()) c.auc = j["auc"].get<double>();
    if (j.contains("variance_mae") && !j["variance_mae"].is_null()) c.variance_mae = j["variance_mae"].get<double>();
    c.error = j.value("error", std::string());
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad cell result: ") + e.what());
  }
}

inline std::string cell_file_name(const std::string& dataset, const std::string& method, std::uint64_t seed) {
  return dataset + "__" + method + "__" + std::to_string(seed) + ".json";
}

/// Trains and scores one (scenario, method, seed) cell in memory. Failures
/// become NA cells carrying the error text.
inline json run_cell(const std::string& scenario, const std::string& method, std::uint64_t seed, RunConfig run) {
  CellResult cell;
  cell.dataset = scenario;
  cell.method = method;
  cell.seed = seed;
  json extra = json::object();
  try {
    const GeneratedDataset g = generate(with_seed(find_scenario(scenario), seed));
    run.method = method_from_string(method);
    run.mcem.trainer.seed = seed;
    const TrainedModel m = train_model(g.train(), g.val(), run);
    cell.seconds = m.seconds;
    cell.auc = auc(m, g.test());
    if (auto s2 = m.sigma2()) {
      cell.variance_mae = variance_mae(*s2, g.true_sigma2);
      extra["sigma2_hat"] = matrix_to_json(*s2);
      extra["sigma2_true"] = matrix_to_json(g.true_sigma2);
    }
    extra["best_epoch"] = m.best_epoch;
  } catch (const std::exception& e) {
    cell.auc.reset();
    cell.error = e.what();
  }
  json j = to_json(cell);
  j.update(extra);
  return j;
}

inline std::vector<CellResult> load_cells(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("no cell directory at " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<CellResult> cells;
  for (const auto& f : files) {
    std::ifstream in(f);
    try {
      cells.push_back(cell_from_json(json::parse(in)));
    } catch (const json::parse_error& e) {
      throw DataError(f.string() + ": " + e.what());
    }
  }
  if (cells.empty()) throw DataError("no cell results in " + dir.string());
  return cells;
}

/// Writes aggregate.csv and aggregate.txt next to the cell directory.
inline AggregateTable write_aggregate(const fs::path& out_dir, std::ostream& log) {
  const auto cells = load_cells(out_dir / "cells");
  const AggregateTable t = aggregate(cells);
  {
    std::ofstream csv(out_dir / "aggregate.csv");
    write_aggregate_csv(csv, t);
  }
  {
    std::ofstream txt(out_dir / "aggregate.txt");
    write_aggregate_text(txt, t);
  }
  write_aggregate_text(log, t);
  return t;
}

// ---------------------------------------------------------------------------
// Subcommands

struct CliOptions {
  std::string config, schema, out, scenario, method, data, train, val, checkpoint, truth;
  std::uint64_t seed = 0;
  bool seed_given = false;
  unsigned jobs = 1;
  std::size_t bins = 20;
};

inline int cmd_simulate(const CliOptions& o, std::ostream& log) {
  if (o.out.empty()) throw ConfigError("simulate needs --out");
  ScenarioSpec spec;
  if (!o.scenario.empty())
    spec = find_scenario(o.scenario);
  else if (!o.config.empty())
    spec = scenario_from_json(read_json_file(o.config));
  else
    throw ConfigError("simulate needs --scenario or --config");
  const GeneratedDataset g = generate(with_seed(spec, o.seed));
  write_simulated(g, o.out);
  log << "wrote " << g.train_rows.size() << '/' << g.val_rows.size() << '/' << g.test_rows.size()
      << " train/val/test rows of " << spec.name << " to " << o.out << '\n';
  return 0;
}

inline int cmd_train(const CliOptions& o, std::ostream& log) {
  if (o.out.empty()) throw ConfigError("train needs --out");
  const fs::path data = o.data;
  const fs::path train_path = !o.train.empty() ? fs::path(o.train) : data / "train.csv";
  const fs::path val_path = !o.val.empty() ? fs::path(o.val) : data / "val.csv";
  const fs::path schema_path = !o.schema.empty() ? fs::path(o.schema) : data / "schema.json";
  if (o.data.empty() && (o.train.empty() || o.val.empty() || o.schema.empty()))
    throw ConfigError("train needs --data DIR or all of --train, --val, --schema");

  RunConfig run = o.config.empty() ? RunConfig{} : run_config_from_json(read_json_file(o.config));
  if (!o.method.empty()) run.method = method_from_string(o.method);
  if (o.seed_given) run.mcem.trainer.seed = o.seed;
  run.validate();

  const DatasetSchema schema = schema_from_json(read_json_file(schema_path));
  const CsvTable train_csv = read_csv_file(train_path);
  const CsvTable val_csv = read_csv_file(val_path);
  const Preprocessor prep = fit_preprocessor(schema, train_csv, train_path.string());
  const Dataset train = transform(prep, train_csv, nullptr, train_path.string());
  TransformReport val_report;
  const Dataset val = transform(prep, val_csv, &val_report, val_path.string());

  fs::create_directories(o.out);
  std::vector<DrawTraceRow> trace;
  FitCallbacks cb;
  cb.on_epoch = [&](const EpochLog& e) {
    log << "epoch " << e.epoch << (e.refinement ? " (variance refinement)" : "") << " val_nll " << e.val_nll << '\n';
  };
  cb.on_draw = [&](const DrawTraceRow& r) { trace.push_back(r); };
  const TrainedModel m = train_model(train, val, run, cb);

  write_json_file(fs::path(o.out) / "checkpoint.json", checkpoint_json(m, prep, run));
  const double train_auc = auc(m, train);
  json summary = {{"method", to_string(m.method)},
                  {"best_epoch", m.best_epoch},
                  {"best_val_nll", m.best_val_nll},
                  {"train_auc", train_auc},
                  {"val_auc", auc(m, val)},
                  {"seconds", m.seconds},
                  {"val_unseen_cluster_levels", val_report.unseen_cluster_levels}};
  if (auto s2 = m.sigma2()) summary["sigma2"] = matrix_to_json(*s2);
  write_json_file(fs::path(o.out) / "log.json", {{"epochs", log_to_json(m)}, {"summary", summary}});
  if (m.mixed) {
    std::vector<std::vector<std::string>> ids;
    for (const auto& v : prep.cluster_vocab) ids.push_back(v.levels);
    std::ofstream effects(fs::path(o.out) / "effects.csv");
    write_effects_csv(effects, m, ids);
    std::ofstream draws(fs::path(o.out) / "draws.csv");
    write_draw_trace(draws, trace);
  }
  log << "trained " << to_string(m.method) << " in " << m.seconds << " s, best epoch " << m.best_epoch
      << ", train AUC " << train_auc << '\n';
  return 0;
}

inline int cmd_evaluate(const CliOptions& o, std::ostream& out, std::ostream& log) {
  if (o.checkpoint.empty() || o.data.empty()) throw ConfigError("evaluate needs --checkpoint and --data");
  const json ck = read_json_file(o.checkpoint);
  if (!ck.contains("preprocessor")) throw ConfigError(o.checkpoint + " has no preprocessing section");
  const TrainedModel m = trained_model_from_json(ck);
  const Preprocessor prep = preprocessor_from_json(ck.at("preprocessor"));
  const CsvTable csv = read_csv_file(o.data);
  TransformReport rep;
  const Dataset d = transform(prep, csv, &rep, o.data);

  std::vector<std::size_t> skipped;
  const double value = auc_multiclass(predict(m, d), d.Y, &skipped);
  json metrics = {{"method", to_string(m.method)},
                  {"rows", d.rows()},
                  {"auc", value},
                  {"skipped_classes", skipped},
                  {"warnings", {{"unseen_cluster_levels", rep.unseen_cluster_levels},
                                {"unseen_onehot_levels", rep.unseen_onehot_levels}}}};
  if (rep.unseen_cluster_levels + rep.unseen_onehot_levels > 0)
    log << "warning: " << rep.unseen_cluster_levels << " clustering and " << rep.unseen_onehot_levels
        << " one-hot cells had levels unseen in training\n";
  if (auto s2 = m.sigma2()) {
    metrics["sigma2_hat"] = matrix_to_json(*s2);
    metrics["histograms"] = effect_histograms(m, o.bins);
    if (!o.truth.empty()) {
      const Matrix truth = truth_sigma2(read_json_file(o.truth), m.feature_names, static_cast<std::size_t>(s2->cols()));
      metrics["variance_mae"] = variance_mae(*s2, truth);
    }
  }
  if (o.out.empty()) {
    out << metrics.dump(2) << '\n';
  } else {
    write_json_file(o.out, metrics);
    log << "AUC " << value << " written to " << o.out << '\n';
  }
  return 0;
}

inline int cmd_benchmark(const CliOptions& o, std::ostream& log) {
  if (o.config.empty() || o.out.empty()) throw ConfigError("benchmark needs --config and --out");
  BenchmarkGrid grid = grid_from_json(read_json_file(o.config));
  if (!o.scenario.empty()) grid.scenarios = {o.scenario};
  if (!o.method.empty()) grid.methods = {o.method};
  if (o.seed_given) grid.seeds = {o.seed};
  const fs::path cells_dir = fs::path(o.out) / "cells";
  fs::create_directories(cells_dir);

  struct Task {
    std::string scenario, method;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& s : grid.scenarios)
    for (const auto& m : grid.methods)
      for (auto seed : grid.seeds)
        if (!fs::exists(cells_dir / cell_file_name(s, m, seed))) tasks.push_back({s, m, seed});

  std::atomic<std::size_t> next{0};
  std::mutex io;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& t = tasks[i];
      const json cell = run_cell(t.scenario, t.method, t.seed, grid.run);
      write_json_file(cells_dir / cell_file_name(t.scenario, t.method, t.seed), cell);
      std::lock_guard lock(io);
      log << t.scenario << ' ' << t.method << " seed " << t.seed << ": AUC "
          << (cell["auc"].is_null() ? std::string("NA (") + cell.value("error", std::string()) + ")"
                                    : format_double(cell["auc"].get<double>()))
          << '\n';
    }
  };
  const unsigned jobs = std::max(1u, o.jobs);
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < jobs; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  write_aggregate(o.out, log);
  return 0;
}

inline int cmd_aggregate(const CliOptions& o, std::ostream& log) {
  if (o.out.empty()) throw ConfigError("aggregate needs --out (the benchmark directory)");
  write_aggregate(o.out, log);
  return 0;
}

/// Parses arguments and runs one subcommand. Errors map to exit codes:
/// 2 configuration, 3 data, 4 numerical failure.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Monte Carlo EM training of generalized mixed effects neural networks"};
  app.require_subcommand(1);
  CliOptions o;

  auto add_seed = [&](CLI::App* c) {
    c->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { o.seed = s, o.seed_given = true; },
                                          "Random seed");
  };
  auto* sim = app.add_subcommand("simulate", "Generate a simulated dataset (CSV + schema + truth)");
  sim->add_option("--scenario", o.scenario, "Registered scenario name");
  sim->add_option("--config", o.config, "Scenario spec JSON (instead of --scenario)");
  sim->add_option("--out", o.out, "Output directory");
  add_seed(sim);

  auto* train = app.add_subcommand("train", "Train one method on CSV data");
  train->add_option("--data", o.data, "Directory with train.csv, val.csv, schema.json");
  train->add_option("--train", o.train, "Training CSV");
  train->add_option("--val", o.val, "Validation CSV");
  train->add_option("--schema", o.schema, "Schema JSON");
  train->add_option("--config", o.config, "Run configuration JSON");
  train->add_option("--method", o.method, "mcgmenn, ignore, ohe, te, embedding");
  train->add_option("--out", o.out, "Output directory");
  add_seed(train);

  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on a CSV file");
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint.json written by train");
  eval->add_option("--data", o.data, "CSV to score");
  eval->add_option("--truth", o.truth, "truth.json from simulate");
  eval->add_option("--bins", o.bins, "Histogram bins for the effects export");
  eval->add_option("--out", o.out, "Metrics JSON (stdout if omitted)");

  auto* bench = app.add_subcommand("benchmark", "Run a scenarios x methods x seeds grid");
  bench->add_option("--config", o.config, "Grid JSON");
  bench->add_option("--out", o.out, "Output directory");
  bench->add_option("--scenario", o.scenario, "Restrict to one scenario");
  bench->add_option("--method", o.method, "Restrict to one method");
  bench->add_option("--jobs", o.jobs, "Concurrent cells");
  add_seed(bench);

  auto* agg = app.add_subcommand("aggregate", "Rebuild the aggregate table from cell results");
  agg->add_option("--out", o.out, "Benchmark directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::configuration);
  }

  try {
    if (sim->parsed()) return cmd_simulate(o, err);
    if (train->parsed()) return cmd_train(o, err);
    if (eval->parsed()) return cmd_evaluate(o, out, err);
    if (bench->parsed()) return cmd_benchmark(o, err);
    if (agg->parsed()) return cmd_aggregate(o, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::configuration);
  }
  return static_cast<int>(ExitCode::configuration);
}

}  // namespace mcgmenn
