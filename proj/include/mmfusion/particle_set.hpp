#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mmfusion/log_math.hpp"
#include "mmfusion/random.hpp"
#include "mmfusion/ssm.hpp"

namespace mmfusion {

/// Every importance weight underflowed; the caller decides how to recover.
class WeightCollapse : public std::runtime_error {
 public:
  WeightCollapse() : std::runtime_error("all particle likelihoods are zero") {}
};

/// N weighted samples {x^i, w^i}, weights held in the log domain.
template <typename State>
class ParticleSet {
 public:
  using state_type = State;

  ParticleSet() = default;

  ParticleSet(std::vector<State> states, std::vector<double> log_weights)
      : states_{std::move(states)}, log_weights_{std::move(log_weights)} {
    if (states_.empty()) {
      throw std::invalid_argument("a particle set needs at least one particle");
    }
    if (states_.size() != log_weights_.size()) {
      throw std::invalid_argument("states and weights differ in length");
    }
  }

  /// Equally weighted set.
  explicit ParticleSet(std::vector<State> states) : states_{std::move(states)} {
    if (states_.empty()) {
      throw std::invalid_argument("a particle set needs at least one particle");
    }
    reset_weights();
  }

  [[nodiscard]] std::size_t size() const noexcept { return states_.size(); }

  [[nodiscard]] const std::vector<State>& states() const noexcept { return states_; }
  [[nodiscard]] std::vector<State>& states() noexcept { return states_; }
  [[nodiscard]] const State& state(std::size_t i) const { return states_[i]; }

  [[nodiscard]] std::span<const double> log_weights() const noexcept { return log_weights_; }
  [[nodiscard]] double log_weight(std::size_t i) const { return log_weights_[i]; }
  [[nodiscard]] double weight(std::size_t i) const { return std::exp(log_weights_[i]); }

  /// Replaces the weights; `log_weights` must have one entry per particle.
  void set_log_weights(std::vector<double> log_weights) {
    if (log_weights.size() != states_.size()) {
      throw std::invalid_argument("weight vector length does not match particle count");
    }
    log_weights_ = std::move(log_weights);
  }

  void reset_weights() { log_weights_.assign(states_.size(), -std::log(static_cast<double>(states_.size()))); }

  [[nodiscard]] double weight_sum() const {
    double sum = 0.0;
    for (const double lw : log_weights_) {
      sum += std::exp(lw);
    }
    return sum;
  }

 private:
  std::vector<State> states_;
  std::vector<double> log_weights_;
};

/// Draws N particles from `prior_sampler(rng)`, each with weight 1/N.
template <typename PriorSampler>
auto init_particles(PriorSampler&& prior_sampler, std::size_t n, Rng& rng) {
  using State = std::decay_t<decltype(prior_sampler(rng))>;
  if (n == 0) {
    throw std::invalid_argument("particle count must be at least 1");
  }
  std::vector<State> states;
  states.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    states.push_back(prior_sampler(rng));
  }
  return ParticleSet<State>(std::move(states));
}

/// Advances every particle through the transition prior. Weights are untouched.
template <TransitionModel Transition>
void propagate(ParticleSet<typename Transition::state_type>& p, const Transition& tm, Rng& rng) {
  for (auto& x : p.states()) {
    x = tm.sample(x, rng);
  }
}

/// Result of an importance update: normalized log weights and the log of the
/// normalizing constant, log sum_i w_prev^i L(x^i).
struct WeightUpdate {
  std::vector<double> log_weights;
  double log_normalizer = kNegInf;

  [[nodiscard]] bool collapsed() const noexcept { return !std::isfinite(log_normalizer); }
};

/// w^i = w_prev^i L^i / sum_j w_prev^j L^j, in the log domain.
/// On collapse `log_weights` is left empty.
inline WeightUpdate importance_update(std::span<const double> prev_log_weights,
                                      std::span<const double> log_likelihoods) {
  if (prev_log_weights.size() != log_likelihoods.size()) {
    throw std::invalid_argument("likelihood vector length does not match particle count");
  }
  WeightUpdate out;
  out.log_weights.resize(prev_log_weights.size());
  for (std::size_t i = 0; i < prev_log_weights.size(); ++i) {
    out.log_weights[i] = prev_log_weights[i] + log_likelihoods[i];
  }
  out.log_normalizer = log_sum_exp(out.log_weights);
  if (out.collapsed()) {
    out.log_weights.clear();
    return out;
  }
  for (double& lw : out.log_weights) {
    lw -= out.log_normalizer;
  }
  return out;
}

/// Multiplies the weights by exp(log_likelihoods) and renormalizes.
/// Throws WeightCollapse, leaving `p` unchanged, when every product underflows.
template <typename State>
void reweight(ParticleSet<State>& p, std::span<const double> log_likelihoods) {
  auto update = importance_update(p.log_weights(), log_likelihoods);
  if (update.collapsed()) {
    throw WeightCollapse{};
  }
  p.set_log_weights(std::move(update.log_weights));
}

template <typename State, typename LogLik>
  requires std::invocable<LogLik, const State&>
void reweight(ParticleSet<State>& p, LogLik&& loglik_at) {
  std::vector<double> ll(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    ll[i] = loglik_at(p.state(i));
  }
  reweight(p, std::span<const double>(ll));
}

/// Residual resampling: particle i is copied floor(N w_i) times, the remaining
/// slots are filled by multinomial draws over the residuals. The output is
/// equally weighted. Returns the parent index of every output particle.
template <typename State>
std::vector<std::size_t> residual_resample(ParticleSet<State>& p, Rng& rng) {
  const std::size_t n = p.size();
  const double nd = static_cast<double>(n);

  std::vector<std::size_t> counts(n);
  std::vector<double> residuals(n);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double expected = nd * p.weight(i);
    const double whole = std::floor(expected);
    counts[i] = static_cast<std::size_t>(whole);
    residuals[i] = expected - whole;
    assigned += counts[i];
  }
  // Rounding can push the deterministic part past N by a copy or two.
  for (std::size_t i = 0; assigned > n; i = (i + 1) % n) {
    if (counts[i] > 0) {
      --counts[i];
      --assigned;
    }
  }

  std::vector<std::size_t> parents;
  parents.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    parents.insert(parents.end(), counts[i], i);
  }

  if (assigned < n) {
    double residual_mass = 0.0;
    for (const double r : residuals) {
      residual_mass += r;
    }
    if (!(residual_mass > 0.0)) {
      for (std::size_t i = 0; i < n; ++i) {
        residuals[i] = p.weight(i);
      }
    }
    std::discrete_distribution<std::size_t> pick(residuals.begin(), residuals.end());
    for (std::size_t k = assigned; k < n; ++k) {
      parents.push_back(pick(rng));
    }
  }

  std::vector<State> next;
  next.reserve(n);
  for (const std::size_t parent : parents) {
    next.push_back(p.state(parent));
  }
  p = ParticleSet<State>(std::move(next));
  return parents;
}

/// Posterior mean sum_i w_i x^i.
template <typename State>
State estimate_mean(const ParticleSet<State>& p) {
  State mean = State::Zero(p.state(0).size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    mean += p.weight(i) * p.state(i);
  }
  return mean;
}

}  // namespace mmfusion
