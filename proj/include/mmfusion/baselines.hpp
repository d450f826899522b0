#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mmfusion/dma.hpp"
#include "mmfusion/log_math.hpp"
#include "mmfusion/particle_set.hpp"
#include "mmfusion/ssm.hpp"

namespace mmfusion {

namespace detail {

/// Per-modality log-likelihoods for every particle; rows of absent modalities
/// are left empty.
template <typename State>
void modality_logliks(const ParticleSet<State>& p, const ObservationFrame& frame, const ModalitySet<State>& models,
                      std::vector<std::vector<double>>& out) {
  if (frame.size() != models.size()) {
    throw std::invalid_argument("frame modality count does not match the model");
  }
  out.resize(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    out[i].clear();
    if (!frame[i].present()) {
      continue;
    }
    if (static_cast<std::size_t>(frame[i].value->size()) != models[i]->dim()) {
      throw std::invalid_argument("observation dimension does not match modality " + models[i]->name());
    }
    out[i].resize(p.size());
    const auto& y = *frame[i].value;
    for (std::size_t j = 0; j < p.size(); ++j) {
      out[i][j] = models[i]->log_likelihood(y, p.state(j));
    }
  }
}

}  // namespace detail

/// Bootstrap particle filter on the joint likelihood of all present modalities.
template <TransitionModel Transition>
class PfFilter {
 public:
  using State = typename Transition::state_type;

  struct StepResult {
    State estimate;
    bool weight_collapse = false;
  };

  PfFilter(ParticleSet<State> particles, Transition transition, ModalitySet<State> models, bool keep_trace = true)
      : particles_{std::move(particles)},
        transition_{std::move(transition)},
        models_{std::move(models)},
        keep_trace_{keep_trace} {}

  [[nodiscard]] const ParticleSet<State>& particles() const noexcept { return particles_; }
  [[nodiscard]] const DiagnosticsTrace<State>& trace() const noexcept { return trace_; }

  StepResult step(const ObservationFrame& frame, Rng& rng) {
    const std::size_t n = particles_.size();
    propagate(particles_, transition_, rng);
    detail::modality_logliks(particles_, frame, models_, loglik_);

    std::vector<double> joint(n);
    for (std::size_t j = 0; j < n; ++j) {
      double total = 0.0;
      for (std::size_t i = 0; i < models_.size(); ++i) {
        if (!frame[i].present()) {
          continue;
        }
        total += loglik_[i][j];
      }
      joint[j] = total;
    }

    auto update = importance_update(particles_.log_weights(), joint);
    const bool collapsed = update.collapsed();
    if (collapsed) {
      particles_.reset_weights();
    } else {
      particles_.set_log_weights(std::move(update.log_weights));
    }

    State estimate = estimate_mean(particles_);
    if (keep_trace_) {
      trace_.push_back({frame.time_index, {}, estimate, {update.log_normalizer}, collapsed, false});
    }
    residual_resample(particles_, rng);
    return {estimate, collapsed};
  }

 private:
  ParticleSet<State> particles_;
  Transition transition_;
  ModalitySet<State> models_;
  bool keep_trace_;
  DiagnosticsTrace<State> trace_;
  std::vector<std::vector<double>> loglik_;
};

/// Static model averaging: one particle filter per modality, each seeing only
/// its own modality; the output is the plain average of their estimates.
template <TransitionModel Transition>
class SmaFilter {
 public:
  using State = typename Transition::state_type;

  struct StepResult {
    State estimate;
    std::vector<State> sub_estimates;
  };

  SmaFilter(const ParticleSet<State>& particles, const Transition& transition, const ModalitySet<State>& models,
            bool keep_trace = true)
      : keep_trace_{keep_trace} {
    if (models.empty()) {
      throw std::invalid_argument("SMA needs at least one modality");
    }
    sub_filters_.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
      sub_filters_.emplace_back(particles, transition, models, false);
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return sub_filters_.size(); }
  [[nodiscard]] const PfFilter<Transition>& sub_filter(std::size_t i) const { return sub_filters_[i]; }
  [[nodiscard]] const DiagnosticsTrace<State>& trace() const noexcept { return trace_; }

  /// Sub-filters step in modality order and share `rng` sequentially.
  StepResult step(const ObservationFrame& frame, Rng& rng) {
    if (frame.size() != sub_filters_.size()) {
      throw std::invalid_argument("frame modality count does not match the model");
    }
    StepResult out;
    out.sub_estimates.reserve(sub_filters_.size());
    bool collapsed = false;
    for (std::size_t i = 0; i < sub_filters_.size(); ++i) {
      ObservationFrame own;
      own.time_index = frame.time_index;
      own.observations.resize(frame.size());
      for (std::size_t k = 0; k < frame.size(); ++k) {
        own.observations[k].modality_index = k;
      }
      own.observations[i] = frame[i];
      auto r = sub_filters_[i].step(own, rng);
      collapsed = collapsed || r.weight_collapse;
      out.sub_estimates.push_back(std::move(r.estimate));
    }
    out.estimate = average_estimates(out.sub_estimates);
    if (keep_trace_) {
      trace_.push_back({frame.time_index, {}, out.estimate, {}, collapsed, false});
    }
    return out;
  }

  /// Unweighted mean of the sub-filter estimates.
  static State average_estimates(std::span<const State> estimates) {
    if (estimates.empty()) {
      throw std::invalid_argument("nothing to average");
    }
    State sum = State::Zero(estimates.front().size());
    for (const auto& e : estimates) {
      sum += e;
    }
    return sum / static_cast<double>(estimates.size());
  }

 private:
  std::vector<PfFilter<Transition>> sub_filters_;
  bool keep_trace_;
  DiagnosticsTrace<State> trace_;
};

inline constexpr double kDefaultFailureSmoothing = 0.5;

/// Probability that a present modality's observation is useless, from the
/// two-hypothesis marginal ratio g0 / (g0 + g) with g = sum_j w^j L(x^j) and
/// g0 = 1/V, exponentially smoothed against the previous estimate.
inline double failure_probability_update(double prev_alpha, double log_g, double log_g0,
                                         double smoothing = kDefaultFailureSmoothing) {
  double raw = 0.0;
  if (log_g == kNegInf) {
    raw = 1.0;
  } else {
    const double d = log_g - log_g0;
    raw = d > 0.0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
  }
  return smoothing * prev_alpha + (1.0 - smoothing) * raw;
}

/// Updates every present modality's failure probability; absent modalities
/// keep their previous value. `p` carries the pre-update weights.
template <typename State>
std::vector<double> estimate_failure_prob(std::span<const double> prev_alpha, const ParticleSet<State>& p,
                                          const ObservationFrame& frame, const ModalitySet<State>& models,
                                          double smoothing = kDefaultFailureSmoothing) {
  std::vector<std::vector<double>> ll;
  detail::modality_logliks(p, frame, models, ll);
  if (prev_alpha.size() != models.size()) {
    throw std::invalid_argument("alpha length does not match modality count");
  }
  std::vector<double> alpha(prev_alpha.begin(), prev_alpha.end());
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (!frame[i].present()) {
      continue;
    }
    const double log_g = marginal_loglik(p, ll[i]);
    alpha[i] = failure_probability_update(prev_alpha[i], log_g, models[i]->null_log_likelihood(), smoothing);
  }
  return alpha;
}

struct TsOptions {
  double smoothing = kDefaultFailureSmoothing;
  /// When set, alpha is held at these values instead of being estimated.
  std::optional<std::vector<double>> pinned_alpha;
  bool keep_trace = true;
};

/// Two-stage detect-then-fuse filter: estimate each modality's failure
/// probability alpha_i, then weight with prod_i L_i^(1 - alpha_i).
template <TransitionModel Transition>
class TsFilter {
 public:
  using State = typename Transition::state_type;

  struct StepResult {
    State estimate;
    std::vector<double> alpha;
    bool weight_collapse = false;
  };

  TsFilter(ParticleSet<State> particles, Transition transition, ModalitySet<State> models, TsOptions options = {})
      : particles_{std::move(particles)},
        transition_{std::move(transition)},
        models_{std::move(models)},
        options_{std::move(options)},
        alpha_(models_.size(), 0.0) {
    if (options_.pinned_alpha) {
      if (options_.pinned_alpha->size() != models_.size()) {
        throw std::invalid_argument("pinned alpha length does not match modality count");
      }
      alpha_ = *options_.pinned_alpha;
    }
    for (const double a : alpha_) {
      if (!(a >= 0.0 && a <= 1.0)) {
        throw std::invalid_argument("alpha must lie in [0, 1]");
      }
    }
  }

  [[nodiscard]] const ParticleSet<State>& particles() const noexcept { return particles_; }
  [[nodiscard]] std::span<const double> alpha() const noexcept { return alpha_; }
  [[nodiscard]] const DiagnosticsTrace<State>& trace() const noexcept { return trace_; }

  StepResult step(const ObservationFrame& frame, Rng& rng) {
    const std::size_t n = particles_.size();
    propagate(particles_, transition_, rng);
    detail::modality_logliks(particles_, frame, models_, loglik_);

    if (!options_.pinned_alpha) {
      for (std::size_t i = 0; i < models_.size(); ++i) {
        if (!frame[i].present()) {
          continue;
        }
        const double log_g = marginal_loglik(particles_, loglik_[i]);
        alpha_[i] =
            failure_probability_update(alpha_[i], log_g, models_[i]->null_log_likelihood(), options_.smoothing);
      }
    }

    std::vector<double> tempered(n);
    for (std::size_t j = 0; j < n; ++j) {
      double total = 0.0;
      for (std::size_t i = 0; i < models_.size(); ++i) {
        if (!frame[i].present()) {
          continue;
        }
        total += (1.0 - alpha_[i]) * loglik_[i][j];
      }
      tempered[j] = total;
    }

    auto update = importance_update(particles_.log_weights(), tempered);
    const bool collapsed = update.collapsed();
    if (collapsed) {
      particles_.reset_weights();
    } else {
      particles_.set_log_weights(std::move(update.log_weights));
    }

    State estimate = estimate_mean(particles_);
    if (options_.keep_trace) {
      trace_.push_back({frame.time_index, alpha_, estimate, {update.log_normalizer}, collapsed, false});
    }
    residual_resample(particles_, rng);
    return {estimate, alpha_, collapsed};
  }

 private:
  ParticleSet<State> particles_;
  Transition transition_;
  ModalitySet<State> models_;
  TsOptions options_;
  std::vector<double> alpha_;
  DiagnosticsTrace<State> trace_;
  std::vector<std::vector<double>> loglik_;
};

}  // namespace mmfusion
