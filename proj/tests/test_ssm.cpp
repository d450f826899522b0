#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "mmfusion/ssm.hpp"
#include "mmfusion/tracking_model.hpp"

namespace {

using mmfusion::ObservationValue;
using mmfusion::Rng;
using mmfusion::tracking::AngleModality;
using mmfusion::tracking::Matrix;
using mmfusion::tracking::ModelConfig;
using mmfusion::tracking::RangeModality;
using mmfusion::tracking::State;
using mmfusion::tracking::Transition;

constexpr double kPi = std::numbers::pi;

ObservationValue scalar(double v) {
  ObservationValue y(1);
  y[0] = v;
  return y;
}

mmfusion::ModalityObservation present(double v) { return {0, scalar(v)}; }

Transition noiseless() {
  const ModelConfig cfg;
  return Transition(cfg.transition, Matrix::Zero());
}

TEST(TransitionSample, NoiselessAddsVelocityToPosition) {
  Rng rng(1);
  const auto x = mmfusion::transition_sample(noiseless(), State(1, 1, 0, 0), rng);
  EXPECT_EQ(x, State(1, 1, 1, 1));
}

TEST(TransitionSample, ZeroVelocityIsFixedPoint) {
  Rng rng(1);
  const auto x = mmfusion::transition_sample(noiseless(), State(0, 0, 5, 5), rng);
  EXPECT_EQ(x, State(0, 0, 5, 5));
}

TEST(TransitionSample, EmpiricalMeanMatchesAnalyticMean) {
  const auto tm = mmfusion::tracking::make_transition(ModelConfig{});
  Rng rng(42);
  constexpr int kDraws = 100000;
  const State x_prev(1, 0, 0, 0);
  State sum = State::Zero();
  for (int k = 0; k < kDraws; ++k) {
    sum += mmfusion::transition_sample(tm, x_prev, rng);
  }
  const State mean = sum / kDraws;
  const State expected = tm.transition_matrix() * x_prev;  // [1, 0, 1, 0]
  const Eigen::Vector4d stderr_ = tm.covariance().diagonal().cwiseSqrt() / std::sqrt(double(kDraws));
  for (int i = 0; i < 4; ++i) {
    EXPECT_LT(std::abs(mean[i] - expected[i]), 3.0 * stderr_[i]) << "component " << i;
  }
}

TEST(TransitionSample, RejectsNonFiniteState) {
  Rng rng(1);
  EXPECT_THROW((void)mmfusion::transition_sample(noiseless(), State(NAN, 0, 0, 0), rng), std::invalid_argument);
}

TEST(TransitionSample, DynamicSizeDimensionMismatchThrows) {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
  const mmfusion::LinearGaussianTransition<Eigen::Dynamic> tm(a, Eigen::MatrixXd::Identity(2, 2));
  Rng rng(1);
  EXPECT_THROW((void)tm.sample(Eigen::VectorXd::Zero(3), rng), std::invalid_argument);
}

TEST(LinearGaussianTransition, RejectsIndefiniteCovariance) {
  const Matrix q = Eigen::Vector4d(1, -1, 1, 1).asDiagonal();
  EXPECT_THROW(Transition(Matrix::Identity(), q), std::invalid_argument);
}

TEST(LinearGaussianTransition, RejectsAsymmetricCovariance) {
  Matrix q = Matrix::Identity();
  q(0, 1) = 0.5;
  EXPECT_THROW(Transition(Matrix::Identity(), q), std::invalid_argument);
}

TEST(ModalityLoglik, AngleAtModeWithDefaultNoise) {
  const AngleModality angle(0.1);
  const double ll = mmfusion::modality_loglik(angle, present(std::atan(1.0)), State(0, 0, 10, 10));
  EXPECT_NEAR(ll, 1.383646559789373, 1e-12);
}

TEST(ModalityLoglik, RangeAtModeWithUnitNoise) {
  const RangeModality range(1.0, 2000.0);
  const double ll = mmfusion::modality_loglik(range, present(5.0), State(0, 0, 3, 4));
  EXPECT_NEAR(ll, -0.9189385332046727, 1e-12);
}

TEST(ModalityLoglik, AngleIsPeriodicInObservation) {
  const AngleModality angle(0.1);
  Rng rng(7);
  std::uniform_real_distribution<double> y_dist(-kPi, kPi);
  std::uniform_real_distribution<double> pos(-1000.0, 1000.0);
  for (int k = 0; k < 100; ++k) {
    const double y = y_dist(rng);
    const State x(0, 0, pos(rng), pos(rng));
    EXPECT_NEAR(angle.log_likelihood(scalar(y), x), angle.log_likelihood(scalar(y + 2.0 * kPi), x), 1e-12);
  }
}

TEST(ModalityLoglik, AngleWrapsResidualAcrossSeam) {
  const AngleModality angle(0.1);
  // Target just left of the -d_y axis; observation just right of it.
  const State x(0, 0, -1e-3, -1.0);
  const double y = kPi - 1e-3;
  EXPECT_GT(angle.log_likelihood(scalar(y), x), 1.0);
}

TEST(ModalityLoglik, AbsentObservationIsContractViolation) {
  const AngleModality angle(0.1);
  EXPECT_THROW((void)mmfusion::modality_loglik(angle, mmfusion::ModalityObservation{0, std::nullopt}, State(State::Zero())),
               std::logic_error);
}

TEST(ModalityLoglik, WrongDimensionThrows) {
  const RangeModality range(1.0, 2000.0);
  EXPECT_THROW((void)mmfusion::modality_loglik(range, {1, ObservationValue::Zero(2)}, State(State::Zero())),
               std::invalid_argument);
}

TEST(ModalityLoglik, AngleAtOriginUsesZeroBearing) {
  const AngleModality principal(0.1, mmfusion::tracking::FailureMode::uniform, 0.0,
                                mmfusion::tracking::BearingConvention::principal);
  const AngleModality quadrant(0.1);
  EXPECT_NEAR(principal.log_likelihood(scalar(0.0), State::Zero()), 1.383646559789373, 1e-12);
  EXPECT_NEAR(quadrant.log_likelihood(scalar(0.0), State::Zero()), 1.383646559789373, 1e-12);
}

TEST(Bearing, PrincipalBranchConvention) {
  using mmfusion::tracking::bearing;
  using mmfusion::tracking::BearingConvention;
  EXPECT_DOUBLE_EQ(bearing(3, 4, BearingConvention::principal), std::atan(0.75));
  EXPECT_DOUBLE_EQ(bearing(-3, -4, BearingConvention::principal), std::atan(0.75));
  EXPECT_DOUBLE_EQ(bearing(2, 0, BearingConvention::principal), kPi / 2);
  EXPECT_DOUBLE_EQ(bearing(-2, 0, BearingConvention::principal), -kPi / 2);
  EXPECT_DOUBLE_EQ(bearing(0, 0, BearingConvention::principal), 0.0);
  // Quadrant-aware bearing agrees in the d_y > 0 half plane only.
  EXPECT_DOUBLE_EQ(bearing(3, 4), std::atan(0.75));
  EXPECT_NEAR(bearing(-3, -4), std::atan(0.75) - kPi, 1e-15);
}

TEST(NullLoglik, AngleValueSpaceIsFullCircle) {
  EXPECT_NEAR(mmfusion::null_loglik(AngleModality(0.1)), -1.8378770664093453, 1e-12);
}

TEST(NullLoglik, RangeValueSpaceIsZeroToRmax) {
  EXPECT_NEAR(mmfusion::null_loglik(RangeModality(1.0, 2000.0)), -7.600902459542082, 1e-12);
}

TEST(NullLoglik, DependsOnlyOnVolume) {
  const RangeModality a(1.0, 2000.0);
  const RangeModality b(5.0, 2000.0, mmfusion::tracking::FailureMode::offset, 50.0);
  EXPECT_EQ(a.null_log_likelihood(), b.null_log_likelihood());
  EXPECT_NE(a.null_log_likelihood(), RangeModality(1.0, 3000.0).null_log_likelihood());
}

TEST(ModalityModel, RejectsNonPositiveVolume) {
  EXPECT_THROW(RangeModality(1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(RangeModality(1.0, -3.0), std::invalid_argument);
  EXPECT_THROW(RangeModality(1.0, INFINITY), std::invalid_argument);
}

// exp(loglik) is a density in y: integrate on a fine grid.
TEST(ModalityLoglik, AngleDensityIntegratesToOne) {
  const AngleModality angle(0.1);
  for (const State& x : {State(0, 0, 10, 10), State(0, 0, -5, -300), State(0, 0, 1e-3, -1)}) {
    constexpr int kCells = 200000;
    const double h = 2.0 * kPi / kCells;
    double integral = 0.0;
    for (int k = 0; k < kCells; ++k) {
      const double y = -kPi + (k + 0.5) * h;
      integral += std::exp(angle.log_likelihood(scalar(y), x)) * h;
    }
    EXPECT_NEAR(integral, 1.0, 1e-3);
  }
}

TEST(ModalityLoglik, RangeDensityIntegratesToOne) {
  const RangeModality range(1.0, 20000.0);
  const State x(0, 0, 60, 80);  // range 100
  constexpr int kCells = 100000;
  const double lo = 80.0;
  const double h = 40.0 / kCells;
  double integral = 0.0;
  for (int k = 0; k < kCells; ++k) {
    integral += std::exp(range.log_likelihood(scalar(lo + (k + 0.5) * h), x)) * h;
  }
  EXPECT_NEAR(integral, 1.0, 1e-3);
}

TEST(ModelConfig, DefaultsMatchBenchmarkSetting) {
  const ModelConfig cfg;
  Matrix a;
  a << 1, 0, 0, 0, 0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 1;
  EXPECT_EQ(cfg.transition, a);
  EXPECT_EQ(cfg.process_covariance.diagonal(), Eigen::Vector4d(1, 1, 10, 10));
  EXPECT_DOUBLE_EQ(cfg.sigma_angle, 0.1);
  EXPECT_DOUBLE_EQ(cfg.sigma_range, 1.0);
}

TEST(ModelConfig, JsonOverridesAndValidates) {
  const auto cfg = mmfusion::tracking::model_config_from_json(
      nlohmann::json::parse(R"({"range_max": 2000, "sigma_angle": 0.2, "bearing": "atan",
                               "initial_state": [0, 0, 10, 20], "failure_mode": "offset"})"));
  EXPECT_DOUBLE_EQ(cfg.range_max, 2000.0);
  EXPECT_DOUBLE_EQ(cfg.sigma_angle, 0.2);
  EXPECT_EQ(cfg.bearing, mmfusion::tracking::BearingConvention::principal);
  EXPECT_EQ(cfg.initial_state, State(0, 0, 10, 20));
  EXPECT_EQ(cfg.failure_mode, mmfusion::tracking::FailureMode::offset);

  EXPECT_THROW(mmfusion::tracking::model_config_from_json(nlohmann::json::parse(R"({"range_max": -1})")),
               std::invalid_argument);
  EXPECT_THROW(mmfusion::tracking::model_config_from_json(
                   nlohmann::json::parse(R"({"process_covariance": [[1,0,0,0],[0,-1,0,0],[0,0,1,0],[0,0,0,1]]})")),
               std::invalid_argument);
  EXPECT_THROW(mmfusion::tracking::model_config_from_json(nlohmann::json::parse(R"({"bearing": "compass"})")),
               std::invalid_argument);
}

}  // namespace
