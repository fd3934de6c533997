#pragma once

// No-U-Turn sampler with an identity mass matrix and multinomial trajectory
// sampling, a step-size controller that only ever halves, a random-walk
// Metropolis comparator, and chain diagnostics.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "mcgmenn/errors.hpp"
#include "mcgmenn/neural_net.hpp"

namespace mcgmenn {

/// Log density and its gradient: returns log p(q) and writes d log p / dq.
using LogDensityFn = std::function<double(const Vector&, Vector&)>;

struct PhasePoint {
  Vector position;
  Vector momentum;
  Vector gradient;
  double logp = 0.0;
};

/// Half kick, drift, half kick (identity mass matrix), in place.
inline void leapfrog(PhasePoint& z, double epsilon, const LogDensityFn& target) {
  z.momentum.noalias() += 0.5 * epsilon * z.gradient;
  z.position.noalias() += epsilon * z.momentum;
  z.logp = target(z.position, z.gradient);
  z.momentum.noalias() += 0.5 * epsilon * z.gradient;
}

/// One leapfrog step from (position, momentum). Throws NumericalError when
/// the target is not finite at the start.
inline std::pair<Vector, Vector> leapfrog(const Vector& position, const Vector& momentum, double epsilon,
                                          const LogDensityFn& target) {
  if (!(epsilon > 0.0)) throw ContractError("leapfrog step size must be positive");
  PhasePoint z{position, momentum, Vector(), 0.0};
  z.logp = target(z.position, z.gradient);
  if (!std::isfinite(z.logp)) throw NumericalError("target is not finite at the leapfrog start");
  leapfrog(z, epsilon, target);
  return {std::move(z.position), std::move(z.momentum)};
}

inline double hamiltonian(const PhasePoint& z) { return -z.logp + 0.5 * z.momentum.squaredNorm(); }

struct ChainState {
  Vector position;
  double last_logp = 0.0;
  Vector last_gradient;
  Rng rng;
  // Metropolis acceptance tallies for the current adaptation window.
  double accept_sum = 0.0;
  std::size_t propose_count = 0;
};

inline ChainState make_chain(Vector position, const LogDensityFn& target, std::uint64_t seed) {
  ChainState s;
  s.position = std::move(position);
  s.rng.seed(seed);
  s.last_logp = target(s.position, s.last_gradient);
  if (!std::isfinite(s.last_logp) || !s.last_gradient.allFinite())
    throw NumericalError("target is not finite at the initial position");
  return s;
}

/// Re-evaluates the target at the current position, e.g. after the target changed.
inline void refresh(ChainState& s, const LogDensityFn& target) {
  s.last_logp = target(s.position, s.last_gradient);
  if (!std::isfinite(s.last_logp) || !s.last_gradient.allFinite())
    throw NumericalError("target is not finite at the chain position");
}

/// Starts at a large step size and halves it whenever the window acceptance
/// rate falls strictly below `threshold`. Never increases.
struct StepSizeController {
  double epsilon0 = 0.1;
  double epsilon = 0.1;
  double threshold = 0.001;
  int halvings = 0;
  double min_epsilon = 1e-12;

  static StepSizeController starting_at(double eps0) {
    if (!(eps0 > 0.0)) throw ConfigError("initial step size must be positive");
    StepSizeController c;
    c.epsilon0 = eps0;
    c.epsilon = eps0;
    return c;
  }

  void halve() {
    ++halvings;
    epsilon = std::ldexp(epsilon0, -halvings);
  }
};

/// Evaluates the window tallies of `chain`, halves epsilon if needed, and
/// resets the tallies. Returns whether epsilon was halved.
inline bool adapt_step_size(StepSizeController& controller, ChainState& chain) {
  if (chain.propose_count == 0) throw ContractError("step-size adaptation needs at least one proposal in the window");
  const double rate = chain.accept_sum / static_cast<double>(chain.propose_count);
  const bool halve = rate < controller.threshold;
  if (halve) controller.halve();
  chain.accept_sum = 0.0;
  chain.propose_count = 0;
  return halve;
}

struct NutsConfig {
  int max_depth = 10;
  double divergence_threshold = 1000.0;
};

struct DrawStats {
  double logp = 0.0;
  int tree_depth = 0;
  std::size_t n_leapfrog = 0;
  double accept_stat = 0.0;  // mean Metropolis acceptance over the trajectory's states
  bool divergent = false;
  double epsilon = 0.0;
};

namespace detail {

inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// Original criterion: both ends still moving apart along (q+ - q-).
inline bool no_u_turn(const PhasePoint& left, const PhasePoint& right) {
  const Vector span = right.position - left.position;
  return span.dot(left.momentum) >= 0.0 && span.dot(right.momentum) >= 0.0;
}

struct Subtree {
  PhasePoint left, right, proposal;
  double log_weight = -std::numeric_limits<double>::infinity();
  bool valid = true;
  bool divergent = false;
  double accept_sum = 0.0;
  std::size_t n_leapfrog = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(const LogDensityFn& target, double epsilon, double h0, const NutsConfig& cfg, Rng& rng)
      : target_(target), epsilon_(epsilon), h0_(h0), cfg_(cfg), rng_(rng) {}

  // Extends the trajectory by 2^depth leapfrog steps from `edge` in direction `dir`.
  Subtree build(const PhasePoint& edge, int depth, int dir) {
    if (depth == 0) return single_step(edge, dir);
    Subtree inner = build(edge, depth - 1, dir);
    if (!inner.valid) return inner;
    Subtree outer = build(dir > 0 ? inner.right : inner.left, depth - 1, dir);
    inner.accept_sum += outer.accept_sum;
    inner.n_leapfrog += outer.n_leapfrog;
    if (!outer.valid) {
      inner.valid = false;
      inner.divergent = outer.divergent;
      return inner;
    }
    const double total = log_add_exp(inner.log_weight, outer.log_weight);
    if (std::log(uniform_(rng_)) < outer.log_weight - total) inner.proposal = std::move(outer.proposal);
    if (dir > 0)
      inner.right = std::move(outer.right);
    else
      inner.left = std::move(outer.left);
    inner.log_weight = total;
    inner.valid = no_u_turn(inner.left, inner.right);
    return inner;
  }

 private:
  Subtree single_step(const PhasePoint& edge, int dir) {
    Subtree t;
    t.n_leapfrog = 1;
    PhasePoint z = edge;
    double h = std::numeric_limits<double>::infinity();
    try {
      leapfrog(z, dir * epsilon_, target_);
      h = hamiltonian(z);
    } catch (const NumericalError&) {
    }
    if (!std::isfinite(h) || h - h0_ > cfg_.divergence_threshold) {
      t.valid = false;
      t.divergent = true;
      return t;
    }
    t.accept_sum = std::min(1.0, std::exp(h0_ - h));
    t.log_weight = h0_ - h;
    t.left = z;
    t.right = z;
    t.proposal = std::move(z);
    return t;
  }

  const LogDensityFn& target_;
  double epsilon_;
  double h0_;
  const NutsConfig& cfg_;
  Rng& rng_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace detail

/// One NUTS transition from `state`. Adds the trajectory's acceptance
/// statistics to the chain's window tallies.
inline DrawStats nuts_draw(ChainState& state, const LogDensityFn& target, const StepSizeController& controller,
                           const NutsConfig& cfg = {}) {
  const double eps = controller.epsilon;
  if (!(eps > 0.0)) throw ContractError("step size must be positive");
  if (cfg.max_depth < 1) throw ConfigError("max tree depth must be at least 1");
  const auto dim = state.position.size();

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  PhasePoint z0{state.position, Vector(dim), state.last_gradient, state.last_logp};
  for (Eigen::Index i = 0; i < dim; ++i) z0.momentum(i) = normal(state.rng);
  const double h0 = hamiltonian(z0);

  PhasePoint left = z0;
  PhasePoint right = z0;
  PhasePoint proposal = std::move(z0);
  double log_weight = 0.0;
  DrawStats stats;
  stats.epsilon = eps;
  double accept_sum = 0.0;
  detail::TreeBuilder builder(target, eps, h0, cfg, state.rng);

  for (int depth = 0; depth < cfg.max_depth; ++depth) {
    const int dir = uniform(state.rng) < 0.5 ? -1 : 1;
    detail::Subtree t = builder.build(dir > 0 ? right : left, depth, dir);
    accept_sum += t.accept_sum;
    stats.n_leapfrog += t.n_leapfrog;
    stats.tree_depth = depth + 1;
    if (!t.valid) {
      stats.divergent = t.divergent;
      break;
    }
    if (std::log(uniform(state.rng)) < t.log_weight - log_weight) proposal = std::move(t.proposal);
    log_weight = detail::log_add_exp(log_weight, t.log_weight);
    if (dir > 0)
      right = std::move(t.right);
    else
      left = std::move(t.left);
    if (!detail::no_u_turn(left, right)) break;
  }

  if (stats.divergent && stats.n_leapfrog == 1 && eps <= controller.min_epsilon)
    throw NumericalError("sampler diverges at the minimum step size");

  state.position = std::move(proposal.position);
  state.last_logp = proposal.logp;
  state.last_gradient = std::move(proposal.gradient);
  state.accept_sum += accept_sum;
  state.propose_count += stats.n_leapfrog;
  stats.accept_stat = stats.n_leapfrog > 0 ? accept_sum / static_cast<double>(stats.n_leapfrog) : 0.0;
  stats.logp = state.last_logp;
  return stats;
}

/// Gaussian-proposal Metropolis step. Returns whether the proposal was accepted.
inline bool rw_metropolis_draw(ChainState& state, const LogDensityFn& target, double proposal_sd) {
  if (!(proposal_sd >= 0.0)) throw ConfigError("proposal sd must be non-negative");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vector candidate = state.position;
  for (Eigen::Index i = 0; i < candidate.size(); ++i) candidate(i) += proposal_sd * normal(state.rng);
  Vector grad;
  double logp = -std::numeric_limits<double>::infinity();
  try {
    logp = target(candidate, grad);
  } catch (const NumericalError&) {
  }
  const double log_ratio = std::isfinite(logp) ? logp - state.last_logp : -std::numeric_limits<double>::infinity();
  const bool accept = std::log(uniform(state.rng)) < log_ratio;
  state.accept_sum += std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
  state.propose_count += 1;
  if (accept) {
    state.position = std::move(candidate);
    state.last_logp = logp;
    state.last_gradient = std::move(grad);
  }
  return accept;
}

struct DrawTraceRow {
  int epoch = 0;
  int draw_index = 0;
  DrawStats stats;
};

/// CSV dump of per-draw diagnostics.
inline void write_draw_trace(std::ostream& os, std::span<const DrawTraceRow> rows) {
  os << "epoch,draw_index,logp,tree_depth,accept_stat,epsilon\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.epoch << ',' << r.draw_index << ',' << r.stats.logp << ',' << r.stats.tree_depth << ','
       << r.stats.accept_stat << ',' << r.stats.epsilon << '\n';
}

// Diagnostics

/// Effective sample size of a scalar chain using Geyer's initial monotone
/// positive sequence estimator.
inline double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  if (var <= 0.0) return static_cast<double>(n);
  auto autocorr = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
    return s / (static_cast<double>(n) * var);
  };
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = autocorr(2 * k) + autocorr(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
  return static_cast<double>(n) / tau;
}

/// Monte Carlo standard error of the chain mean.
inline double mcse_mean(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) return std::numeric_limits<double>::infinity();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  return std::sqrt(var / effective_sample_size(x));
}

}  // namespace mcgmenn
