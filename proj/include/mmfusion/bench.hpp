#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <fstream>
#include <iomanip>
#include <istream>
#include <mutex>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "mmfusion/baselines.hpp"
#include "mmfusion/dma.hpp"
#include "mmfusion/particle_set.hpp"
#include "mmfusion/random.hpp"
#include "mmfusion/tracking_model.hpp"
#include "mmfusion/tracksim.hpp"

namespace mmfusion::bench {

using tracking::State;

enum class Algorithm { pf, sma, ts, dma };
enum class PriorMode { accurate, biased };
enum class RmseMode { full, position };

inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::pf, Algorithm::ts, Algorithm::sma, Algorithm::dma};

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::pf:
      return "pf";
    case Algorithm::sma:
      return "sma";
    case Algorithm::ts:
      return "ts";
    case Algorithm::dma:
      return "dma";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "pf") return Algorithm::pf;
  if (s == "sma") return Algorithm::sma;
  if (s == "ts") return Algorithm::ts;
  if (s == "dma") return Algorithm::dma;
  throw std::invalid_argument("unknown algorithm: " + s);
}

// ---------------------------------------------------------------------------
// Error metrics

/// Per-step Euclidean error, over all state components or the position only.
inline double step_error(const State& estimate, const State& truth, RmseMode mode = RmseMode::full) {
  if (mode == RmseMode::position) {
    return (estimate.tail<2>() - truth.tail<2>()).norm();
  }
  return (estimate - truth).norm();
}

inline std::vector<double> step_errors(std::span<const State> estimates, std::span<const State> truth,
                                       RmseMode mode = RmseMode::full) {
  if (estimates.size() != truth.size()) {
    throw std::invalid_argument("estimate and truth sequences differ in length");
  }
  std::vector<double> e(estimates.size());
  for (std::size_t t = 0; t < e.size(); ++t) {
    e[t] = step_error(estimates[t], truth[t], mode);
  }
  return e;
}

/// sqrt(mean_t e_t^2) from per-step errors.
inline double rmse_from_errors(std::span<const double> errors) {
  if (errors.empty()) {
    throw std::invalid_argument("rmse of an empty sequence");
  }
  double sum = 0.0;
  for (const double e : errors) {
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(errors.size()));
}

inline double rmse(std::span<const State> estimates, std::span<const State> truth, RmseMode mode = RmseMode::full) {
  return rmse_from_errors(step_errors(estimates, truth, mode));
}

// ---------------------------------------------------------------------------
// Priors

/// Gaussian prior sampler N(mean, covariance).
class GaussianPrior {
 public:
  GaussianPrior(const State& mean, const tracking::Matrix& covariance) : mean_{mean} {
    const Eigen::SelfAdjointEigenSolver<tracking::Matrix> eig(covariance);
    if (eig.eigenvalues().minCoeff() < -1e-12) {
      throw std::invalid_argument("prior covariance must be positive semi-definite");
    }
    sqrt_cov_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                eig.eigenvectors().transpose();
  }

  [[nodiscard]] const State& mean() const noexcept { return mean_; }

  State operator()(Rng& rng) const {
    std::normal_distribution<double> normal;
    State z;
    for (int i = 0; i < 4; ++i) {
      z[i] = normal(rng);
    }
    return mean_ + sqrt_cov_ * z;
  }

 private:
  State mean_;
  tracking::Matrix sqrt_cov_;
};

/// ACCURATE centers the prior on the true initial state; BIASED shifts it by
/// the configured offset (by default +500 in d_y).
inline GaussianPrior init_prior(PriorMode mode, const State& x0_true, const tracking::ModelConfig& cfg) {
  const State mean = mode == PriorMode::biased ? State(x0_true + cfg.bias_offset) : x0_true;
  return GaussianPrior(mean, cfg.prior_covariance);
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::dma;
  sim::ScenarioSpec scenario = sim::builtin_scenario(1);
  std::size_t particles = 10000;
  std::size_t runs = 100;
  std::uint64_t master_seed = 1;
  PriorMode prior = PriorMode::accurate;
  RmseMode rmse_mode = RmseMode::full;
  tracking::ModelConfig model;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct RunResult {
  Algorithm algorithm = Algorithm::dma;
  std::string scenario;
  std::size_t run_index = 0;
  std::uint64_t seed = 0;
  double rmse = 0.0;
  double wall_time_seconds = 0.0;
  std::size_t collapse_steps = 0;
  std::size_t degenerate_steps = 0;
  std::vector<double> per_step_error;
  std::vector<std::vector<double>> weight_trace;  // T x M (dma) or T x n (ts)
  std::vector<State> estimates;
  std::vector<State> truth;
};

struct Summary {
  std::size_t runs = 0;
  double mean_rmse = 0.0;
  double var_rmse = 0.0;
  double mean_time = 0.0;
  double var_time = 0.0;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  Summary summary;
};

/// Mean and unbiased sample variance (0 for a single value).
inline std::pair<double, double> mean_and_variance(std::span<const double> v) {
  if (v.empty()) {
    return {0.0, 0.0};
  }
  double mean = 0.0;
  for (const double x : v) {
    mean += x;
  }
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) {
    return {mean, 0.0};
  }
  double ss = 0.0;
  for (const double x : v) {
    ss += (x - mean) * (x - mean);
  }
  return {mean, ss / static_cast<double>(v.size() - 1)};
}

/// Runs are reduced in run-index order.
inline Summary summarize(std::span<const RunResult> runs) {
  std::vector<const RunResult*> sorted;
  for (const auto& r : runs) {
    sorted.push_back(&r);
  }
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->run_index < b->run_index; });
  std::vector<double> rmse;
  std::vector<double> time;
  for (const auto* r : sorted) {
    rmse.push_back(r->rmse);
    time.push_back(r->wall_time_seconds);
  }
  Summary s;
  s.runs = runs.size();
  std::tie(s.mean_rmse, s.var_rmse) = mean_and_variance(rmse);
  std::tie(s.mean_time, s.var_time) = mean_and_variance(time);
  return s;
}

/// Ground truth and observations of run `run_index`; depends on the
/// scenario, the model and (master_seed, run_index) only.
inline sim::GroundTruthRun<State> make_dataset(const ExperimentConfig& cfg, std::size_t run_index) {
  auto rng = make_stream(cfg.master_seed, run_index, Stream::dataset);
  const auto tm = tracking::make_transition(cfg.model);
  const auto models = tracking::make_modalities(cfg.model);
  return sim::generate_run(cfg.scenario, cfg.model.initial_state, tm, models, rng);
}

/// Initial particles of run `run_index`, shared by every algorithm.
inline ParticleSet<State> make_initial_particles(const ExperimentConfig& cfg, std::size_t run_index) {
  auto rng = make_stream(cfg.master_seed, run_index, Stream::prior);
  return init_particles(init_prior(cfg.prior, cfg.model.initial_state, cfg.model), cfg.particles, rng);
}

namespace detail {

template <typename Filter>
void run_filter(Filter& filter, const sim::GroundTruthRun<State>& data, Rng& rng, RunResult& out) {
  out.estimates.reserve(data.frames.size());
  const auto start = std::chrono::steady_clock::now();
  for (const auto& frame : data.frames) {
    out.estimates.push_back(filter.step(frame, rng).estimate);
  }
  const auto stop = std::chrono::steady_clock::now();
  out.wall_time_seconds = std::chrono::duration<double>(stop - start).count();
  for (const auto& d : filter.trace()) {
    out.collapse_steps += d.weight_collapse ? 1 : 0;
    out.degenerate_steps += d.model_degenerate ? 1 : 0;
    if (!d.weights.empty()) {
      out.weight_trace.push_back(d.weights);
    }
  }
}

}  // namespace detail

/// Runs one algorithm over a fixed dataset from a fixed initial particle set.
inline RunResult run_on_dataset(Algorithm algorithm, const sim::GroundTruthRun<State>& data,
                                const ParticleSet<State>& initial, const tracking::ModelConfig& model, Rng& rng,
                                RmseMode mode = RmseMode::full) {
  RunResult out;
  out.algorithm = algorithm;
  const auto tm = tracking::make_transition(model);
  const auto models = tracking::make_modalities(model);
  switch (algorithm) {
    case Algorithm::pf: {
      PfFilter<tracking::Transition> f(initial, tm, models);
      detail::run_filter(f, data, rng, out);
      break;
    }
    case Algorithm::sma: {
      SmaFilter<tracking::Transition> f(initial, tm, models);
      detail::run_filter(f, data, rng, out);
      break;
    }
    case Algorithm::ts: {
      TsFilter<tracking::Transition> f(initial, tm, models);
      detail::run_filter(f, data, rng, out);
      break;
    }
    case Algorithm::dma: {
      DmaFilter<tracking::Transition> f(initial, tm, models);
      detail::run_filter(f, data, rng, out);
      break;
    }
  }
  out.truth = data.states;
  out.per_step_error = step_errors(out.estimates, out.truth, mode);
  out.rmse = rmse_from_errors(out.per_step_error);
  return out;
}

inline RunResult run_single(const ExperimentConfig& cfg, std::size_t run_index) {
  const auto data = make_dataset(cfg, run_index);
  const auto initial = make_initial_particles(cfg, run_index);
  auto rng = make_stream(cfg.master_seed, run_index, Stream::filter);
  auto out = run_on_dataset(cfg.algorithm, data, initial, cfg.model, rng, cfg.rmse_mode);
  out.scenario = cfg.scenario.name;
  out.run_index = run_index;
  out.seed = cfg.master_seed;
  return out;
}

/// Executes `cfg.runs` independent runs, in parallel when threads allow.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.particles < 1) {
    throw std::invalid_argument("particle count must be at least 1");
  }
  if (cfg.runs < 1) {
    throw std::invalid_argument("run count must be at least 1");
  }
  cfg.scenario.validate(2);

  ExperimentResult result;
  result.runs.resize(cfg.runs);
  unsigned threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, cfg.runs));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t r = next++; r < cfg.runs; r = next++) {
      try {
        result.runs[r] = run_single(cfg, r);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
        }
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < threads; ++k) {
      pool.emplace_back(worker);
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
  result.summary = summarize(result.runs);
  return result;
}

// ---------------------------------------------------------------------------
// CSV output

namespace detail {

inline std::ostream& precise(std::ostream& out) { return out << std::setprecision(17); }

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cells.push_back(cell);
  }
  return cells;
}

}  // namespace detail

inline void write_summary_header(std::ostream& out) {
  out << "algorithm,scenario,particles,runs,mean_rmse,var_rmse,mean_time,var_time\n";
}

inline void write_summary_row(std::ostream& out, Algorithm a, const std::string& scenario, std::size_t particles,
                              const Summary& s) {
  detail::precise(out) << to_string(a) << ',' << scenario << ',' << particles << ',' << s.runs << ','
                       << s.mean_rmse << ',' << s.var_rmse << ',' << s.mean_time << ',' << s.var_time << '\n';
}

inline void write_runs_header(std::ostream& out) {
  out << "algorithm,scenario,run,seed,rmse,wall_time_seconds,collapse_steps,degenerate_steps\n";
}

inline void write_run_row(std::ostream& out, const RunResult& r) {
  detail::precise(out) << to_string(r.algorithm) << ',' << r.scenario << ',' << r.run_index << ',' << r.seed << ','
                       << r.rmse << ',' << r.wall_time_seconds << ',' << r.collapse_steps << ','
                       << r.degenerate_steps << '\n';
}

/// Reads the scalar fields written by write_run_row (header line skipped).
inline std::vector<RunResult> read_runs_csv(std::istream& in) {
  std::vector<RunResult> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) {
      continue;
    }
    const auto c = detail::split_csv(line);
    if (c.size() != 8) {
      throw std::invalid_argument("malformed runs.csv row: " + line);
    }
    RunResult r;
    r.algorithm = parse_algorithm(c[0]);
    r.scenario = c[1];
    r.run_index = std::stoull(c[2]);
    r.seed = std::stoull(c[3]);
    r.rmse = std::stod(c[4]);
    r.wall_time_seconds = std::stod(c[5]);
    r.collapse_steps = std::stoull(c[6]);
    r.degenerate_steps = std::stoull(c[7]);
    out.push_back(std::move(r));
  }
  return out;
}

/// t followed by one column per model weight (pi for dma, alpha for ts).
inline void write_weights_csv(std::ostream& out, const RunResult& r, const std::vector<std::string>& labels) {
  out << 't';
  for (const auto& l : labels) {
    out << ',' << l;
  }
  out << '\n';
  detail::precise(out);
  for (std::size_t t = 0; t < r.weight_trace.size(); ++t) {
    out << t + 1;
    for (const double w : r.weight_trace[t]) {
      out << ',' << w;
    }
    out << '\n';
  }
}

inline void write_trajectory_csv(std::ostream& out, const RunResult& r) {
  out << "t,true_vx,true_vy,true_dx,true_dy,est_vx,est_vy,est_dx,est_dy,error\n";
  detail::precise(out);
  for (std::size_t t = 0; t < r.estimates.size(); ++t) {
    out << t + 1;
    for (int k = 0; k < 4; ++k) {
      out << ',' << r.truth[t][k];
    }
    for (int k = 0; k < 4; ++k) {
      out << ',' << r.estimates[t][k];
    }
    out << ',' << r.per_step_error[t] << '\n';
  }
}

}  // namespace mmfusion::bench
