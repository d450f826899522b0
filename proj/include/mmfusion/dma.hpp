#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmfusion/log_math.hpp"
#include "mmfusion/particle_set.hpp"
#include "mmfusion/random.hpp"
#include "mmfusion/ssm.hpp"

namespace mmfusion {

/// One usefulness hypothesis: bits[i] is true when modality i is trusted.
struct UsefulnessVector {
  std::vector<bool> bits;

  [[nodiscard]] std::size_t size() const noexcept { return bits.size(); }
  [[nodiscard]] bool operator[](std::size_t i) const { return bits[i]; }
  bool operator==(const UsefulnessVector&) const = default;

  /// "11", "10", ... with modality 0 first.
  [[nodiscard]] std::string label() const {
    std::string s;
    for (const bool b : bits) {
      s.push_back(b ? '1' : '0');
    }
    return s;
  }

  [[nodiscard]] static UsefulnessVector all_ones(std::size_t n) { return {std::vector<bool>(n, true)}; }
};

inline constexpr std::size_t kMaxModalities = 16;

/// Ordered list of candidate models.
using CandidateModelSet = std::vector<UsefulnessVector>;

/// All 2^n usefulness vectors. Index m read as an n-bit binary number (modality
/// 0 most significant) is the bitwise complement of the vector, so the
/// all-ones hypothesis comes first and the all-zeros one last:
/// n = 2 gives [1,1], [1,0], [0,1], [0,0].
inline CandidateModelSet enumerate_candidates(std::size_t n) {
  if (n < 1 || n > kMaxModalities) {
    throw std::invalid_argument("modality count must be in [1, 16], got " + std::to_string(n));
  }
  const std::size_t m_count = std::size_t{1} << n;
  CandidateModelSet out;
  out.reserve(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    UsefulnessVector u{std::vector<bool>(n)};
    for (std::size_t i = 0; i < n; ++i) {
      u.bits[i] = ((m >> (n - 1 - i)) & 1u) == 0;
    }
    out.push_back(std::move(u));
  }
  return out;
}

/// ln L^(m)(x): sum over modalities of the modality log-likelihood when the
/// modality is trusted, its null log-likelihood when it is not. An ABSENT
/// observation contributes 0 under either hypothesis.
template <typename State>
double candidate_loglik(const UsefulnessVector& u, const ObservationFrame& frame, const State& x,
                        const ModalitySet<State>& models) {
  if (frame.size() != models.size() || u.size() != models.size()) {
    throw std::invalid_argument("frame, usefulness vector and modality set disagree on modality count");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (!frame[i].present()) {
      continue;
    }
    total += u[i] ? modality_loglik(*models[i], frame[i], x) : null_loglik(*models[i]);
  }
  return total;
}

/// log sum_i w^i exp(loglik^i) for the (propagated, not yet updated) set.
template <typename State>
double marginal_loglik(const ParticleSet<State>& p, std::span<const double> loglik_per_particle) {
  if (loglik_per_particle.size() != p.size()) {
    throw std::invalid_argument("likelihood vector length does not match particle count");
  }
  std::vector<double> terms(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    terms[i] = p.log_weight(i) + loglik_per_particle[i];
  }
  return log_sum_exp(terms);
}

/// Log weights over the candidate models.
class ModelPosterior {
 public:
  ModelPosterior() = default;
  explicit ModelPosterior(std::vector<double> log_pi) : log_pi_{std::move(log_pi)} {
    if (log_pi_.empty()) {
      throw std::invalid_argument("model posterior needs at least one model");
    }
  }

  [[nodiscard]] static ModelPosterior uniform(std::size_t m) {
    if (m == 0) {
      throw std::invalid_argument("model posterior needs at least one model");
    }
    return ModelPosterior(std::vector<double>(m, -std::log(static_cast<double>(m))));
  }

  [[nodiscard]] std::size_t size() const noexcept { return log_pi_.size(); }
  [[nodiscard]] std::span<const double> log_pi() const noexcept { return log_pi_; }
  [[nodiscard]] double log_prob(std::size_t m) const { return log_pi_[m]; }
  [[nodiscard]] double prob(std::size_t m) const { return std::exp(log_pi_[m]); }

  [[nodiscard]] std::vector<double> probabilities() const {
    std::vector<double> pi(log_pi_.size());
    std::transform(log_pi_.begin(), log_pi_.end(), pi.begin(), [](double lp) { return std::exp(lp); });
    return pi;
  }

 private:
  std::vector<double> log_pi_;
};

inline constexpr double kDefaultPosteriorFloor = 1e-6;

struct ModelPosteriorUpdate {
  ModelPosterior posterior;
  bool degenerate = false;  // every marginal was zero; posterior reset to uniform
};

/// pi_m <- pi_m g_m / sum_k pi_k g_k, with the identity prediction
/// pi_{t|t-1} = pi_{t-1|t-1}. Afterwards every pi_m is raised to at least
/// `floor` and the vector renormalized; floor = 0 disables the clamp.
inline ModelPosteriorUpdate update_model_posterior(const ModelPosterior& prev, std::span<const double> log_g,
                                                   double floor = kDefaultPosteriorFloor) {
  if (log_g.size() != prev.size()) {
    throw std::invalid_argument("marginal likelihood count does not match model count");
  }
  const std::size_t m = prev.size();
  std::vector<double> log_pi(m);
  for (std::size_t k = 0; k < m; ++k) {
    log_pi[k] = prev.log_prob(k) + log_g[k];
  }
  const double norm = log_sum_exp(log_pi);
  if (!std::isfinite(norm)) {
    return {ModelPosterior::uniform(m), true};
  }
  for (double& lp : log_pi) {
    lp -= norm;
  }
  if (floor > 0.0) {
    const double log_floor = std::log(floor);
    for (double& lp : log_pi) {
      lp = std::max(lp, log_floor);
    }
    const double renorm = log_sum_exp(log_pi);
    for (double& lp : log_pi) {
      lp -= renorm;
    }
  }
  return {ModelPosterior(std::move(log_pi)), false};
}

/// Per-step record kept by every filter: the model weights (DMA), the failure
/// probabilities (two-stage), or nothing (plain and averaged filters).
template <typename State>
struct StepDiagnostics {
  int t = 0;
  std::vector<double> weights;
  State estimate;
  std::vector<double> marginal_logliks;
  bool weight_collapse = false;
  bool model_degenerate = false;
};

template <typename State>
using DiagnosticsTrace = std::vector<StepDiagnostics<State>>;

struct DmaOptions {
  double posterior_floor = kDefaultPosteriorFloor;
  bool keep_trace = true;
};

/// Dynamic model averaging particle filter.
///
/// All candidate models share one particle population. Each step propagates
/// the particles once, weights them under every candidate likelihood, updates
/// the model posterior from the candidates' marginal likelihoods, mixes the
/// per-model weights by that posterior, and resamples.
template <TransitionModel Transition>
class DmaFilter {
 public:
  using State = typename Transition::state_type;

  struct StepResult {
    State estimate;
    ModelPosterior posterior;
  };

  DmaFilter(ParticleSet<State> particles, Transition transition, ModalitySet<State> models,
            CandidateModelSet candidates, DmaOptions options = {})
      : particles_{std::move(particles)},
        transition_{std::move(transition)},
        models_{std::move(models)},
        candidates_{std::move(candidates)},
        options_{options},
        posterior_{ModelPosterior::uniform(candidates_.empty() ? 1 : candidates_.size())} {
    if (candidates_.empty()) {
      throw std::invalid_argument("DMA needs at least one candidate model");
    }
    for (const auto& u : candidates_) {
      if (u.size() != models_.size()) {
        throw std::invalid_argument("candidate length does not match modality count");
      }
    }
  }

  /// Uses all 2^n candidates.
  DmaFilter(ParticleSet<State> particles, Transition transition, ModalitySet<State> models,
            DmaOptions options = {})
      : DmaFilter(std::move(particles), std::move(transition), models, enumerate_candidates(models.size()),
                  options) {}

  [[nodiscard]] const ParticleSet<State>& particles() const noexcept { return particles_; }
  [[nodiscard]] const ModelPosterior& posterior() const noexcept { return posterior_; }
  [[nodiscard]] const CandidateModelSet& candidates() const noexcept { return candidates_; }
  [[nodiscard]] const DiagnosticsTrace<State>& trace() const noexcept { return trace_; }

  /// Normalized log weights of the last step's mixture, before resampling.
  [[nodiscard]] std::span<const double> mixture_log_weights() const noexcept { return mixture_; }
  /// Row m holds candidate m's normalized log weights from the last step.
  [[nodiscard]] const std::vector<std::vector<double>>& per_model_log_weights() const noexcept {
    return per_model_;
  }
  /// Particle states the last step's weights refer to (pre-resampling support).
  [[nodiscard]] const std::vector<State>& weighted_states() const noexcept { return weighted_states_; }

  StepResult step(const ObservationFrame& frame, Rng& rng) {
    if (frame.size() != models_.size()) {
      throw std::invalid_argument("frame modality count does not match the model");
    }
    const std::size_t n = particles_.size();
    const std::size_t m_count = candidates_.size();

    propagate(particles_, transition_, rng);

    // Modality log-likelihoods are computed once and shared by every candidate.
    const std::size_t n_mod = models_.size();
    loglik_.resize(n_mod);
    for (std::size_t i = 0; i < n_mod; ++i) {
      loglik_[i].resize(n);
      if (!frame[i].present()) {
        continue;
      }
      if (static_cast<std::size_t>(frame[i].value->size()) != models_[i]->dim()) {
        throw std::invalid_argument("observation dimension does not match modality " + models_[i]->name());
      }
      const auto& y = *frame[i].value;
      const auto& model = *models_[i];
      for (std::size_t j = 0; j < n; ++j) {
        loglik_[i][j] = model.log_likelihood(y, particles_.state(j));
      }
    }

    // Per-candidate weights and marginal likelihoods, reduced in candidate order.
    per_model_.resize(m_count);
    std::vector<double> log_g(m_count);
    std::vector<double> cand(n);
    bool any_collapse = false;
    for (std::size_t m = 0; m < m_count; ++m) {
      const auto& u = candidates_[m];
      for (std::size_t j = 0; j < n; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < n_mod; ++i) {
          if (!frame[i].present()) {
            continue;
          }
          total += u[i] ? loglik_[i][j] : models_[i]->null_log_likelihood();
        }
        cand[j] = total;
      }
      auto update = importance_update(particles_.log_weights(), cand);
      log_g[m] = update.log_normalizer;
      if (update.collapsed()) {
        any_collapse = true;
        log_g[m] = kNegInf;
        const auto prev = particles_.log_weights();
        per_model_[m].assign(prev.begin(), prev.end());
      } else {
        per_model_[m] = std::move(update.log_weights);
      }
    }

    auto posterior_update = update_model_posterior(posterior_, log_g, options_.posterior_floor);
    posterior_ = std::move(posterior_update.posterior);

    // w^i = sum_m pi_m w_m^i
    mixture_.resize(n);
    std::vector<double> terms(m_count);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t m = 0; m < m_count; ++m) {
        terms[m] = posterior_.log_prob(m) + per_model_[m][j];
      }
      mixture_[j] = log_sum_exp(terms);
    }
    particles_.set_log_weights(mixture_);

    State estimate = estimate_mean(particles_);
    weighted_states_ = particles_.states();

    if (options_.keep_trace) {
      trace_.push_back({frame.time_index, posterior_.probabilities(), estimate, log_g, any_collapse,
                        posterior_update.degenerate});
    }

    residual_resample(particles_, rng);
    return {estimate, posterior_};
  }

 private:
  ParticleSet<State> particles_;
  Transition transition_;
  ModalitySet<State> models_;
  CandidateModelSet candidates_;
  DmaOptions options_;
  ModelPosterior posterior_;
  DiagnosticsTrace<State> trace_;

  std::vector<std::vector<double>> loglik_;
  std::vector<std::vector<double>> per_model_;
  std::vector<double> mixture_;
  std::vector<State> weighted_states_;
};

}  // namespace mmfusion
