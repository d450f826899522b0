#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmfusion/random.hpp"

namespace mmfusion {

template <int Dim>
using StateVector = Eigen::Matrix<double, Dim, 1>;

/// Observation value of one modality at one time step.
using ObservationValue = Eigen::VectorXd;

/// One modality's observation; `value` is empty when the observation is ABSENT.
struct ModalityObservation {
  std::size_t modality_index = 0;
  std::optional<ObservationValue> value;

  [[nodiscard]] bool present() const noexcept { return value.has_value(); }
};

/// All modalities' observations at time `time_index`, ordered by modality index.
struct ObservationFrame {
  int time_index = 1;
  std::vector<ModalityObservation> observations;

  [[nodiscard]] std::size_t size() const noexcept { return observations.size(); }
  [[nodiscard]] const ModalityObservation& operator[](std::size_t i) const { return observations[i]; }
};

/// Builds a frame whose i-th entry belongs to modality i.
inline ObservationFrame make_frame(int time_index, std::vector<std::optional<ObservationValue>> values) {
  ObservationFrame frame;
  frame.time_index = time_index;
  frame.observations.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    frame.observations.push_back({i, std::move(values[i])});
  }
  return frame;
}

/// Likelihood and generator of one observation modality.
///
/// The null likelihood is the density of an observation that carries no
/// information about the state: uniform over the modality's value space, so
/// its log is -ln(volume) regardless of the observation or the state.
template <typename State>
class ModalityModel {
 public:
  ModalityModel(std::size_t dim, double value_space_volume)
      : dim_{dim}, volume_{value_space_volume} {
    if (dim == 0) {
      throw std::invalid_argument("modality dimension must be positive");
    }
    if (!(value_space_volume > 0.0) || !std::isfinite(value_space_volume)) {
      throw std::invalid_argument("value space volume must be positive and finite");
    }
    null_loglik_ = -std::log(value_space_volume);
  }

  virtual ~ModalityModel() = default;
  ModalityModel(const ModalityModel&) = default;
  ModalityModel& operator=(const ModalityModel&) = default;

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] double value_space_volume() const noexcept { return volume_; }
  [[nodiscard]] double null_log_likelihood() const noexcept { return null_loglik_; }

  /// ln p(y | x). `y` must be present and of dimension dim().
  [[nodiscard]] virtual double log_likelihood(const ObservationValue& y, const State& x) const = 0;

  /// Draw from the observation model of a working sensor.
  [[nodiscard]] virtual ObservationValue sample(const State& x, Rng& rng) const = 0;

  /// Draw what a failed sensor emits.
  [[nodiscard]] virtual ObservationValue sample_failed(const State& x, Rng& rng) const = 0;

  [[nodiscard]] virtual std::string name() const = 0;

 private:
  std::size_t dim_;
  double volume_;
  double null_loglik_;
};

template <typename State>
using ModalityModelPtr = std::shared_ptr<const ModalityModel<State>>;

template <typename State>
using ModalitySet = std::vector<ModalityModelPtr<State>>;

/// ln p(y | x) for a modality observation; ABSENT is a contract violation.
template <typename State>
double modality_loglik(const ModalityModel<State>& model, const ModalityObservation& y, const State& x) {
  if (!y.present()) {
    throw std::logic_error("modality_loglik called with an ABSENT observation");
  }
  if (static_cast<std::size_t>(y.value->size()) != model.dim()) {
    throw std::invalid_argument("observation dimension does not match modality " + model.name());
  }
  return model.log_likelihood(*y.value, x);
}

template <typename State>
double null_loglik(const ModalityModel<State>& model) noexcept {
  return model.null_log_likelihood();
}

/// A state-transition prior p(x_t | x_{t-1}) that can be sampled.
template <typename T>
concept TransitionModel = requires(const T& tm, const typename T::state_type& x, Rng& rng) {
  typename T::state_type;
  { tm.sample(x, rng) } -> std::convertible_to<typename T::state_type>;
};

/// x_t = A x_{t-1} + w, w ~ N(0, Q), with Q symmetric positive semi-definite.
template <int Dim>
class LinearGaussianTransition {
 public:
  using state_type = StateVector<Dim>;
  using matrix_type = Eigen::Matrix<double, Dim, Dim>;

  LinearGaussianTransition(const matrix_type& transition, const matrix_type& covariance)
      : a_{transition}, q_{covariance} {
    if (!a_.allFinite() || !q_.allFinite()) {
      throw std::invalid_argument("transition parameters must be finite");
    }
    if (a_.rows() != a_.cols() || q_.rows() != a_.rows() || q_.cols() != a_.rows()) {
      throw std::invalid_argument("transition and covariance must be square and of equal size");
    }
    if ((q_ - q_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, q_.cwiseAbs().maxCoeff())) {
      throw std::invalid_argument("process covariance must be symmetric");
    }
    // Symmetric square root via eigen-decomposition so a zero (noiseless)
    // covariance is accepted alongside positive-definite ones.
    const Eigen::SelfAdjointEigenSolver<matrix_type> eig(q_);
    if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff())) {
      throw std::invalid_argument("process covariance must be positive semi-definite");
    }
    noisy_ = !q_.isZero(0.0);
    sqrt_q_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
              eig.eigenvectors().transpose();
  }

  [[nodiscard]] const matrix_type& transition_matrix() const noexcept { return a_; }
  [[nodiscard]] const matrix_type& covariance() const noexcept { return q_; }

  [[nodiscard]] state_type mean(const state_type& x_prev) const { return a_ * x_prev; }

  [[nodiscard]] state_type sample(const state_type& x_prev, Rng& rng) const {
    if (x_prev.size() != a_.cols()) {
      throw std::invalid_argument("state dimension does not match the transition model");
    }
    if (!noisy_) {
      return a_ * x_prev;
    }
    std::normal_distribution<double> normal;
    state_type z = state_type::Zero(a_.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      z[i] = normal(rng);
    }
    return a_ * x_prev + sqrt_q_ * z;
  }

 private:
  matrix_type a_;
  matrix_type q_;
  matrix_type sqrt_q_;
  bool noisy_ = true;
};

/// Samples x_t ~ p(. | x_prev).
template <TransitionModel Transition>
typename Transition::state_type transition_sample(const Transition& model,
                                                  const typename Transition::state_type& x_prev, Rng& rng) {
  if (!x_prev.allFinite()) {
    throw std::invalid_argument("previous state must be finite");
  }
  return model.sample(x_prev, rng);
}

}  // namespace mmfusion
