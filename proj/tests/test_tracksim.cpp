#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "mmfusion/tracksim.hpp"
#include "mmfusion/tracking_model.hpp"

namespace {

using mmfusion::Rng;
using mmfusion::sim::SensorStatus;
using mmfusion::tracking::Matrix;
using mmfusion::tracking::ModelConfig;
using mmfusion::tracking::State;
using mmfusion::tracking::Transition;

const ModelConfig kCfg{};

TEST(Scenario, BuiltinScenariosValidate) {
  for (int k = 1; k <= 4; ++k) {
    const auto s = mmfusion::sim::builtin_scenario(k);
    EXPECT_EQ(s.horizon, 300);
    EXPECT_NO_THROW(s.validate(2)) << k;
  }
  const auto s2 = mmfusion::sim::builtin_scenario(2);
  EXPECT_EQ(s2.failure_probability(0, 200), 1.0);
  EXPECT_EQ(s2.failure_probability(0, 225), 0.8);
  EXPECT_EQ(s2.failure_probability(1, 240), 1.0);
  EXPECT_EQ(s2.failure_probability(1, 255), 0.8);
  EXPECT_EQ(s2.failure_probability(0, 189), 0.0);
  const auto s3 = mmfusion::sim::builtin_scenario(3);
  EXPECT_TRUE(s3.lost(0, 190));
  EXPECT_TRUE(s3.lost(1, 260));
  EXPECT_FALSE(s3.lost(0, 201));
}

TEST(Scenario, UnknownIndexThrows) {
  EXPECT_THROW(mmfusion::sim::builtin_scenario(0), std::invalid_argument);
  EXPECT_THROW(mmfusion::sim::builtin_scenario(5), std::invalid_argument);
}

TEST(Scenario, ValidateRejectsBadWindows) {
  mmfusion::sim::ScenarioSpec s;
  s.failure_windows = {{0, 250, 320, 1.0}};
  EXPECT_THROW(s.validate(2), std::invalid_argument);
  s.failure_windows = {{0, 10, 20, 1.5}};
  EXPECT_THROW(s.validate(2), std::invalid_argument);
  s.failure_windows = {{2, 10, 20, 0.5}};
  EXPECT_THROW(s.validate(2), std::invalid_argument);
  s.failure_windows = {{0, 10, 20, 0.5}};
  s.loss_windows = {{0, 15, 30}};
  EXPECT_THROW(s.validate(2), std::invalid_argument);
  s.loss_windows = {{1, 15, 30}};
  EXPECT_NO_THROW(s.validate(2));
}

TEST(Scenario, JsonRoundTrip) {
  const auto s = mmfusion::sim::builtin_scenario(4);
  const auto back = mmfusion::sim::scenario_from_json(mmfusion::sim::scenario_to_json(s));
  EXPECT_EQ(back.name, s.name);
  EXPECT_EQ(back.horizon, s.horizon);
  EXPECT_EQ(back.failure_windows, s.failure_windows);
  EXPECT_EQ(back.loss_windows, s.loss_windows);
}

TEST(SimulateTruth, NoiselessKinematics) {
  const Transition tm(kCfg.transition, Matrix::Zero());
  Rng rng(1);
  const auto xs = mmfusion::sim::simulate_truth(3, State(1, 2, 0, 0), tm, rng);
  ASSERT_EQ(xs.size(), 3u);
  EXPECT_EQ(xs[0], State(1, 2, 1, 2));
  EXPECT_EQ(xs[1], State(1, 2, 2, 4));
  EXPECT_EQ(xs[2], State(1, 2, 3, 6));
}

TEST(SimulateTruth, HorizonLengthExcludesInitialState) {
  Rng rng(2);
  const auto xs = mmfusion::sim::simulate_truth(300, kCfg.initial_state, mmfusion::tracking::make_transition(kCfg), rng);
  EXPECT_EQ(xs.size(), 300u);
}

// Two steps from a fixed x0: Cov(x_2) = A Q A^T + Q.
TEST(SimulateTruth, TwoStepCovarianceMatchesPropagation) {
  const auto tm = mmfusion::tracking::make_transition(kCfg);
  const Matrix& a = kCfg.transition;
  const Matrix& q = kCfg.process_covariance;
  const Matrix sigma2 = a * q * a.transpose() + q;
  ASSERT_DOUBLE_EQ(sigma2(2, 2), 21.0);
  ASSERT_DOUBLE_EQ(sigma2(0, 2), 1.0);

  Rng rng(3);
  constexpr int kDraws = 40000;
  std::vector<double> dx;
  dx.reserve(kDraws);
  double sum = 0.0;
  for (int k = 0; k < kDraws; ++k) {
    const auto xs = mmfusion::sim::simulate_truth(2, kCfg.initial_state, tm, rng);
    dx.push_back(xs[1][2]);
    sum += xs[1][2];
  }
  const double mean = sum / kDraws;
  double ss = 0.0;
  for (const double v : dx) ss += (v - mean) * (v - mean);
  const double var = ss / (kDraws - 1);
  // Var of a sample variance ~ 2 sigma^4 / (n - 1) for Gaussian data.
  const double se = std::sqrt(2.0 / (kDraws - 1)) * 21.0;
  EXPECT_LT(std::abs(var - 21.0), 4.0 * se);
  EXPECT_LT(std::abs(mean - 202.0), 4.0 * std::sqrt(21.0 / kDraws));
}

TEST(SimulateTruth, RejectsEmptyHorizon) {
  Rng rng(4);
  EXPECT_THROW(mmfusion::sim::simulate_truth(0, kCfg.initial_state, mmfusion::tracking::make_transition(kCfg), rng),
               std::invalid_argument);
}

mmfusion::ModalitySet<State> noiseless_models() {
  return {std::make_shared<mmfusion::tracking::AngleModality>(0.0),
          std::make_shared<mmfusion::tracking::RangeModality>(0.0, kCfg.range_max)};
}

TEST(Observe, NoiselessGeometry) {
  Rng rng(5);
  const auto f = mmfusion::sim::observe(7, State(0, 0, 3, 4), {SensorStatus::normal, SensorStatus::normal},
                                        noiseless_models(), rng);
  EXPECT_EQ(f.time_index, 7);
  EXPECT_NEAR((*f[0].value)[0], 0.6435011087932844, 1e-15);
  EXPECT_NEAR((*f[1].value)[0], 5.0, 1e-15);
}

TEST(Observe, LostModalityIsAbsent) {
  Rng rng(6);
  const auto f = mmfusion::sim::observe(1, State(0, 0, 3, 4), {SensorStatus::lost, SensorStatus::normal},
                                        mmfusion::tracking::make_modalities(kCfg), rng);
  EXPECT_FALSE(f[0].present());
  EXPECT_TRUE(f[1].present());
}

TEST(Observe, RejectsNonFiniteState) {
  Rng rng(6);
  EXPECT_THROW(mmfusion::sim::observe(1, State(0, 0, NAN, 4), {SensorStatus::normal, SensorStatus::normal},
                                      mmfusion::tracking::make_modalities(kCfg), rng),
               std::invalid_argument);
}

// Failed bearing readings are uniform on the circle: chi-square over 20 bins.
TEST(Observe, FailedAngleIsUniform) {
  Rng rng(7);
  const auto models = mmfusion::tracking::make_modalities(kCfg);
  constexpr int kBins = 20;
  constexpr int kDraws = 20000;
  std::vector<int> counts(kBins, 0);
  for (int k = 0; k < kDraws; ++k) {
    const auto f = mmfusion::sim::observe(1, State(0, 0, 3, 4), {SensorStatus::failed, SensorStatus::lost}, models, rng);
    const double y = (*f[0].value)[0];
    ASSERT_GT(y, -std::numbers::pi);
    ASSERT_LE(y, std::numbers::pi);
    const int bin = std::min(kBins - 1, static_cast<int>((y + std::numbers::pi) / (2.0 * std::numbers::pi) * kBins));
    ++counts[static_cast<std::size_t>(bin)];
  }
  const double expected = static_cast<double>(kDraws) / kBins;
  double chi2 = 0.0;
  for (const int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 43.82019596451753);
}

TEST(Observe, FailedRangeStaysInValueSpace) {
  Rng rng(8);
  const auto models = mmfusion::tracking::make_modalities(kCfg);
  for (int k = 0; k < 1000; ++k) {
    const auto f = mmfusion::sim::observe(1, State(0, 0, 3, 4), {SensorStatus::lost, SensorStatus::failed}, models, rng);
    const double y = (*f[1].value)[0];
    ASSERT_GE(y, 0.0);
    ASSERT_LE(y, kCfg.range_max);
  }
}

mmfusion::sim::GroundTruthRun<State> run_scenario(int k, std::uint64_t seed) {
  Rng rng(seed);
  return mmfusion::sim::generate_run(mmfusion::sim::builtin_scenario(k), kCfg.initial_state,
                                     mmfusion::tracking::make_transition(kCfg), mmfusion::tracking::make_modalities(kCfg),
                                     rng);
}

TEST(GenerateRun, CleanScenarioIsAllNormal) {
  const auto run = run_scenario(1, 9);
  ASSERT_EQ(run.frames.size(), 300u);
  for (std::size_t t = 0; t < run.frames.size(); ++t) {
    EXPECT_EQ(run.frames[t].time_index, static_cast<int>(t + 1));
    for (std::size_t i = 0; i < 2; ++i) {
      ASSERT_EQ(run.failure_log[t][i], SensorStatus::normal);
      ASSERT_TRUE(run.frames[t][i].present());
    }
  }
}

TEST(GenerateRun, LossWindowsDeliverNothing) {
  const auto run = run_scenario(3, 10);
  EXPECT_EQ(run.failure_log[194][0], SensorStatus::lost);
  EXPECT_FALSE(run.frames[194][0].present());
  EXPECT_TRUE(run.frames[194][1].present());
  EXPECT_FALSE(run.frames[254][1].present());
  EXPECT_TRUE(run.frames[254][0].present());
}

TEST(GenerateRun, CertainFailureWindowAlwaysFails) {
  const auto run = run_scenario(2, 11);
  for (int t = 190; t <= 210; ++t) {
    EXPECT_EQ(run.failure_log[static_cast<std::size_t>(t - 1)][0], SensorStatus::failed) << t;
  }
}

TEST(GenerateRun, PartialFailureRateMatchesWindowProbability) {
  int failed = 0;
  int total = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto run = run_scenario(2, 1000 + seed);
    for (int t = 220; t <= 230; ++t) {
      failed += run.failure_log[static_cast<std::size_t>(t - 1)][0] == SensorStatus::failed ? 1 : 0;
      ++total;
    }
  }
  // 11000 Bernoulli(0.8) draws: standard error 0.0038.
  EXPECT_NEAR(static_cast<double>(failed) / total, 0.8, 0.02);
}

TEST(GenerateRun, NeverBothFailedWhereWindowsAreDisjoint) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto run = run_scenario(2, 2000 + seed);
    for (const auto& s : run.failure_log) {
      ASSERT_FALSE(s[0] == SensorStatus::failed && s[1] == SensorStatus::failed);
    }
  }
}

TEST(GenerateRun, LogAgreesWithFrames) {
  const auto run = run_scenario(4, 12);
  for (std::size_t t = 0; t < run.frames.size(); ++t) {
    for (std::size_t i = 0; i < 2; ++i) {
      ASSERT_EQ(run.frames[t][i].present(), run.failure_log[t][i] != SensorStatus::lost);
    }
  }
}

TEST(GenerateRun, DeterministicForSeed) {
  const auto a = run_scenario(4, 13);
  const auto b = run_scenario(4, 13);
  ASSERT_EQ(a.states, b.states);
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    for (std::size_t i = 0; i < 2; ++i) {
      ASSERT_EQ(a.frames[t][i].value, b.frames[t][i].value);
    }
  }
  EXPECT_EQ(a.failure_log, b.failure_log);
}

TEST(GenerateRun, TruthIndependentOfScenario) {
  // The truth is rolled out before any failure draw.
  EXPECT_EQ(run_scenario(1, 14).states, run_scenario(4, 14).states);
}

TEST(ReplayFile, NdjsonRoundTripIsExact) {
  const auto run = run_scenario(3, 15);
  std::stringstream buf;
  mmfusion::sim::write_run(buf, run);
  const auto back = mmfusion::sim::read_run<State>(buf);
  ASSERT_EQ(back.states, run.states);
  ASSERT_EQ(back.failure_log, run.failure_log);
  ASSERT_EQ(back.frames.size(), run.frames.size());
  for (std::size_t t = 0; t < run.frames.size(); ++t) {
    EXPECT_EQ(back.frames[t].time_index, run.frames[t].time_index);
    for (std::size_t i = 0; i < 2; ++i) {
      ASSERT_EQ(back.frames[t][i].value, run.frames[t][i].value);
    }
  }
}

}  // namespace
