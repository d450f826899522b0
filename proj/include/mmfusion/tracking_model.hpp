#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "mmfusion/ssm.hpp"

namespace mmfusion::tracking {

// 2D target tracking with a bearing sensor and a range sensor.
// State layout: [v_x, v_y, d_x, d_y], positions relative to the observer.

using State = StateVector<4>;
using Matrix = Eigen::Matrix4d;
using Transition = LinearGaussianTransition<4>;

inline constexpr int kVx = 0;
inline constexpr int kVy = 1;
inline constexpr int kDx = 2;
inline constexpr int kDy = 3;

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) {
    r += 2.0 * kPi;
  }
  return r;
}

/// How the bearing of (d_x, d_y) is measured.
enum class BearingConvention {
  quadrant,   // atan2(d_x, d_y), continuous over the full circle
  principal,  // arctan(d_x / d_y) on (-pi/2, pi/2); jumps by pi where d_y changes sign
};

/// Bearing of the target measured from the d_y axis towards d_x. The origin
/// maps to 0; under the principal convention d_y = 0 maps to sign(d_x) * pi/2.
inline double bearing(double dx, double dy, BearingConvention convention = BearingConvention::quadrant) {
  if (convention == BearingConvention::quadrant) {
    return std::atan2(dx, dy);
  }
  if (dy == 0.0) {
    if (dx == 0.0) {
      return 0.0;
    }
    return std::copysign(kPi / 2.0, dx);
  }
  return std::atan(dx / dy);
}

inline double range(double dx, double dy) { return std::hypot(dx, dy); }

/// What a failed sensor emits.
enum class FailureMode {
  uniform,  // uniform over the modality's value space
  offset,   // normal reading plus a fixed bias
};

class AngleModality final : public ModalityModel<State> {
 public:
  explicit AngleModality(double sigma, FailureMode failure = FailureMode::uniform, double failure_offset = 0.0,
                         BearingConvention convention = BearingConvention::quadrant)
      : ModalityModel<State>(1, 2.0 * kPi),
        sigma_{sigma},
        failure_{failure},
        offset_{failure_offset},
        convention_{convention} {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
      throw std::invalid_argument("angle noise must be finite and non-negative");
    }
    log_norm_ = -std::log(sigma * std::sqrt(2.0 * kPi));
  }

  [[nodiscard]] double sigma() const noexcept { return sigma_; }

  [[nodiscard]] double log_likelihood(const ObservationValue& y, const State& x) const override {
    const double r = wrap_angle(y[0] - bearing(x[kDx], x[kDy], convention_)) / sigma_;
    return log_norm_ - 0.5 * r * r;
  }

  [[nodiscard]] ObservationValue sample(const State& x, Rng& rng) const override {
    std::normal_distribution<double> normal(0.0, 1.0);
    ObservationValue y(1);
    y[0] = wrap_angle(bearing(x[kDx], x[kDy], convention_) + sigma_ * normal(rng));
    return y;
  }

  [[nodiscard]] ObservationValue sample_failed(const State& x, Rng& rng) const override {
    ObservationValue y(1);
    if (failure_ == FailureMode::offset) {
      y = sample(x, rng);
      y[0] = wrap_angle(y[0] + offset_);
      return y;
    }
    // (-pi, pi]: mirror of [-pi, pi) drawn by uniform_real_distribution
    std::uniform_real_distribution<double> uniform(-kPi, kPi);
    y[0] = -uniform(rng);
    return y;
  }

  [[nodiscard]] std::string name() const override { return "angle"; }

 private:
  double sigma_;
  FailureMode failure_;
  double offset_;
  BearingConvention convention_;
  double log_norm_;
};

class RangeModality final : public ModalityModel<State> {
 public:
  RangeModality(double sigma, double range_max, FailureMode failure = FailureMode::uniform,
                double failure_offset = 0.0)
      : ModalityModel<State>(1, range_max),
        sigma_{sigma},
        range_max_{range_max},
        failure_{failure},
        offset_{failure_offset} {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
      throw std::invalid_argument("range noise must be finite and non-negative");
    }
    log_norm_ = -std::log(sigma * std::sqrt(2.0 * kPi));
  }

  [[nodiscard]] double sigma() const noexcept { return sigma_; }
  [[nodiscard]] double range_max() const noexcept { return range_max_; }

  [[nodiscard]] double log_likelihood(const ObservationValue& y, const State& x) const override {
    const double r = (y[0] - range(x[kDx], x[kDy])) / sigma_;
    return log_norm_ - 0.5 * r * r;
  }

  [[nodiscard]] ObservationValue sample(const State& x, Rng& rng) const override {
    std::normal_distribution<double> normal(0.0, 1.0);
    ObservationValue y(1);
    y[0] = clamp(range(x[kDx], x[kDy]) + sigma_ * normal(rng));
    return y;
  }

  [[nodiscard]] ObservationValue sample_failed(const State& x, Rng& rng) const override {
    ObservationValue y(1);
    if (failure_ == FailureMode::offset) {
      y = sample(x, rng);
      y[0] = clamp(y[0] + offset_);
      return y;
    }
    std::uniform_real_distribution<double> uniform(0.0, range_max_);
    y[0] = uniform(rng);
    return y;
  }

  [[nodiscard]] std::string name() const override { return "range"; }

 private:
  [[nodiscard]] double clamp(double r) const { return std::min(std::max(r, 0.0), range_max_); }

  double sigma_;
  double range_max_;
  FailureMode failure_;
  double offset_;
  double log_norm_;
};

/// Parameters of the tracking experiment. Defaults are the benchmark setting
/// where one exists; the remaining values are documented tunables.
struct ModelConfig {
  Matrix transition = (Matrix() << 1, 0, 0, 0,  //
                       0, 1, 0, 0,              //
                       1, 0, 1, 0,              //
                       0, 1, 0, 1)
                          .finished();
  Matrix process_covariance = Eigen::Vector4d(1.0, 1.0, 10.0, 10.0).asDiagonal();
  double sigma_angle = 0.1;
  double sigma_range = 1.0;
  double range_max = 20000.0;
  State initial_state = State(1.0, 1.0, 200.0, 200.0);
  Matrix prior_covariance = Eigen::Vector4d(1.0, 1.0, 10.0, 10.0).asDiagonal();
  State bias_offset = State(0.0, 0.0, 0.0, 500.0);
  FailureMode failure_mode = FailureMode::uniform;
  double failure_offset_angle = 1.0;
  double failure_offset_range = 100.0;
  BearingConvention bearing = BearingConvention::quadrant;
};

inline Transition make_transition(const ModelConfig& cfg) {
  return Transition(cfg.transition, cfg.process_covariance);
}

/// Modality 0 is the bearing sensor, modality 1 the range sensor.
inline ModalitySet<State> make_modalities(const ModelConfig& cfg) {
  return {std::make_shared<AngleModality>(cfg.sigma_angle, cfg.failure_mode, cfg.failure_offset_angle, cfg.bearing),
          std::make_shared<RangeModality>(cfg.sigma_range, cfg.range_max, cfg.failure_mode,
                                          cfg.failure_offset_range)};
}

namespace detail {

inline Matrix read_matrix(const nlohmann::json& j, const char* key) {
  const auto& rows = j.at(key);
  if (!rows.is_array() || rows.size() != 4) {
    throw std::invalid_argument(std::string(key) + " must be a 4x4 array of rows");
  }
  Matrix m;
  for (int r = 0; r < 4; ++r) {
    if (!rows[r].is_array() || rows[r].size() != 4) {
      throw std::invalid_argument(std::string(key) + " must be a 4x4 array of rows");
    }
    for (int c = 0; c < 4; ++c) {
      m(r, c) = rows[r][c].get<double>();
    }
  }
  return m;
}

inline State read_vector(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 4) {
    throw std::invalid_argument(std::string(key) + " must be an array of 4 numbers");
  }
  return State(v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>());
}

}  // namespace detail

/// Reads the "model" object of a JSON config. Missing keys keep defaults.
///
///   transition            4x4 rows            A
///   process_covariance    4x4 rows            Q
///   sigma_angle           number              bearing noise std (rad)
///   sigma_range           number              range noise std
///   range_max             number              range value space [0, range_max]
///   initial_state         [vx, vy, dx, dy]    true x0
///   prior_covariance      4x4 rows            initial particle spread
///   bias_offset           [vx, vy, dx, dy]    mean shift of the biased prior
///   failure_mode          "uniform"|"offset"  failed-sensor output
///   failure_offset_angle  number              bias used by "offset"
///   failure_offset_range  number              bias used by "offset"
///   bearing               "atan2"|"atan"      quadrant-aware or principal-branch bearing
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (j.contains("transition")) cfg.transition = detail::read_matrix(j, "transition");
  if (j.contains("process_covariance")) cfg.process_covariance = detail::read_matrix(j, "process_covariance");
  if (j.contains("sigma_angle")) cfg.sigma_angle = j.at("sigma_angle").get<double>();
  if (j.contains("sigma_range")) cfg.sigma_range = j.at("sigma_range").get<double>();
  if (j.contains("range_max")) cfg.range_max = j.at("range_max").get<double>();
  if (j.contains("initial_state")) cfg.initial_state = detail::read_vector(j, "initial_state");
  if (j.contains("prior_covariance")) cfg.prior_covariance = detail::read_matrix(j, "prior_covariance");
  if (j.contains("bias_offset")) cfg.bias_offset = detail::read_vector(j, "bias_offset");
  if (j.contains("failure_mode")) {
    const auto mode = j.at("failure_mode").get<std::string>();
    if (mode == "uniform") {
      cfg.failure_mode = FailureMode::uniform;
    } else if (mode == "offset") {
      cfg.failure_mode = FailureMode::offset;
    } else {
      throw std::invalid_argument("unknown failure_mode: " + mode);
    }
  }
  if (j.contains("failure_offset_angle")) cfg.failure_offset_angle = j.at("failure_offset_angle").get<double>();
  if (j.contains("failure_offset_range")) cfg.failure_offset_range = j.at("failure_offset_range").get<double>();
  if (j.contains("bearing")) {
    const auto b = j.at("bearing").get<std::string>();
    if (b == "atan2") {
      cfg.bearing = BearingConvention::quadrant;
    } else if (b == "atan") {
      cfg.bearing = BearingConvention::principal;
    } else {
      throw std::invalid_argument("unknown bearing convention: " + b);
    }
  }

  if (!(cfg.sigma_angle > 0.0) || !(cfg.sigma_range > 0.0)) {
    throw std::invalid_argument("observation noise must be positive");
  }
  if (!(cfg.range_max > 0.0) || !std::isfinite(cfg.range_max)) {
    throw std::invalid_argument("range_max must be positive and finite");
  }
  // Validates A and Q.
  (void)make_transition(cfg);
  return cfg;
}

inline ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open config file: " + path);
  }
  const auto j = nlohmann::json::parse(in);
  return model_config_from_json(j.contains("model") ? j.at("model") : nlohmann::json::object());
}

}  // namespace mmfusion::tracking
