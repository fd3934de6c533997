#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "mcgmenn/errors.hpp"
#include "mcgmenn/neural_net.hpp"

namespace mcgmenn {

/// Optimizer and loop settings shared by every method in a comparison.
struct TrainerConfig {
  int max_epochs = 200;
  int patience = 10;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  ArchitectureSpec architecture = ArchitectureSpec::paper_sim();

  void validate() const {
    if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(architecture.dropout >= 0.0 && architecture.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }
};

inline json to_json(const TrainerConfig& c) {
  return {{"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"architecture", {{"name", c.architecture.name}, {"hidden", c.architecture.hidden}, {"dropout", c.architecture.dropout}}}};
}

/// Reads the keys present in `j` over the defaults in `c`.
inline void update_from_json(TrainerConfig& c, const json& j) {
  try {
    if (j.contains("max_epochs")) c.max_epochs = j["max_epochs"].get<int>();
    if (j.contains("patience")) c.patience = j["patience"].get<int>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("architecture")) {
      const auto& a = j["architecture"];
      if (a.is_string()) {
        c.architecture = architecture_preset(a.get<std::string>());
      } else {
        c.architecture.name = a.value("name", std::string("custom"));
        c.architecture.hidden = a.at("hidden").get<std::vector<std::size_t>>();
        c.architecture.dropout = a.value("dropout", 0.0);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad trainer configuration: ") + e.what());
  }
}

/// Independent generator for one purpose (`stream`) of a seeded run.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x6d63676du};
  return Rng(seq);
}

namespace streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t chain = 2;
inline constexpr std::uint64_t batches = 3;
}  // namespace streams

/// Mini-batches of a seeded permutation of 0..n-1; the last batch may be short.
inline std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  return batches;
}

struct EarlyStopping {
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int since_best = 0;

  /// Returns true when `value` improves on the best seen so far.
  bool observe(double value, int epoch) {
    if (value < best) {
      best = value;
      best_epoch = epoch;
      since_best = 0;
      return true;
    }
    ++since_best;
    return false;
  }

  bool should_stop(int patience) const { return since_best >= patience; }
};

}  // namespace mcgmenn
