#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmfusion/random.hpp"
#include "mmfusion/ssm.hpp"

namespace mmfusion::sim {

inline constexpr int kDefaultHorizon = 300;

/// Modality `modality` emits garbage with `probability` at each t in [t_start, t_end].
struct FailureWindow {
  std::size_t modality = 0;
  int t_start = 1;
  int t_end = 1;
  double probability = 1.0;

  bool operator==(const FailureWindow&) const = default;
};

/// Modality `modality` delivers nothing for t in [t_start, t_end].
struct LossWindow {
  std::size_t modality = 0;
  int t_start = 1;
  int t_end = 1;

  bool operator==(const LossWindow&) const = default;
};

struct ScenarioSpec {
  std::string name;
  int horizon = kDefaultHorizon;
  std::vector<FailureWindow> failure_windows;
  std::vector<LossWindow> loss_windows;

  /// Throws std::invalid_argument if a window leaves [1, horizon], a
  /// probability leaves [0, 1], or loss and failure windows of one modality overlap.
  void validate(std::size_t modality_count) const {
    if (horizon < 1) {
      throw std::invalid_argument("scenario horizon must be at least 1");
    }
    auto check = [&](std::size_t modality, int a, int b) {
      if (modality >= modality_count) {
        throw std::invalid_argument("scenario window refers to an unknown modality");
      }
      if (a < 1 || b > horizon || a > b) {
        throw std::invalid_argument("scenario window [" + std::to_string(a) + ", " + std::to_string(b) +
                                    "] is not inside [1, horizon]");
      }
    };
    for (const auto& w : failure_windows) {
      check(w.modality, w.t_start, w.t_end);
      if (!(w.probability >= 0.0 && w.probability <= 1.0)) {
        throw std::invalid_argument("failure probability must lie in [0, 1]");
      }
    }
    for (const auto& l : loss_windows) {
      check(l.modality, l.t_start, l.t_end);
      for (const auto& w : failure_windows) {
        if (w.modality == l.modality && w.t_start <= l.t_end && l.t_start <= w.t_end) {
          throw std::invalid_argument("loss and failure windows overlap for one modality");
        }
      }
    }
  }

  [[nodiscard]] bool lost(std::size_t modality, int t) const {
    for (const auto& l : loss_windows) {
      if (l.modality == modality && t >= l.t_start && t <= l.t_end) {
        return true;
      }
    }
    return false;
  }

  /// Failure probability of `modality` at `t` (0 outside every window).
  [[nodiscard]] double failure_probability(std::size_t modality, int t) const {
    for (const auto& w : failure_windows) {
      if (w.modality == modality && t >= w.t_start && t <= w.t_end) {
        return w.probability;
      }
    }
    return 0.0;
  }
};

/// The four benchmark scenarios of the two-sensor tracking experiment.
/// Modality 0 is the bearing sensor, modality 1 the range sensor.
inline ScenarioSpec builtin_scenario(int k) {
  ScenarioSpec s;
  s.name = "scenario" + std::to_string(k);
  switch (k) {
    case 1:
      break;
    case 2:
      s.failure_windows = {{0, 190, 210, 1.0}, {0, 220, 230, 0.8}, {1, 235, 245, 1.0}, {1, 250, 260, 0.8}};
      break;
    case 3:
      s.loss_windows = {{0, 190, 200}, {1, 250, 260}};
      break;
    case 4:
      for (std::size_t m = 0; m < 2; ++m) {
        s.failure_windows.push_back({m, 190, 200, 1.0});
        s.failure_windows.push_back({m, 210, 240, 0.8});
        s.failure_windows.push_back({m, 250, 260, 1.0});
      }
      break;
    default:
      throw std::invalid_argument("builtin scenario must be 1..4, got " + std::to_string(k));
  }
  return s;
}

enum class SensorStatus { normal, failed, lost };

inline const char* to_string(SensorStatus s) {
  switch (s) {
    case SensorStatus::normal:
      return "NORMAL";
    case SensorStatus::failed:
      return "FAILED";
    case SensorStatus::lost:
      return "LOST";
  }
  return "?";
}

inline SensorStatus status_from_string(const std::string& s) {
  if (s == "NORMAL") return SensorStatus::normal;
  if (s == "FAILED") return SensorStatus::failed;
  if (s == "LOST") return SensorStatus::lost;
  throw std::invalid_argument("unknown sensor status: " + s);
}

template <typename State>
struct GroundTruthRun {
  std::vector<State> states;                          // states[t-1] is x_t
  std::vector<ObservationFrame> frames;               // frames[t-1] observed at t
  std::vector<std::vector<SensorStatus>> failure_log;  // failure_log[t-1][i]

  [[nodiscard]] int horizon() const noexcept { return static_cast<int>(states.size()); }
};

/// x_1..x_T of the Markov chain started from x0 (x0 itself is not returned).
template <TransitionModel Transition>
std::vector<typename Transition::state_type> simulate_truth(int horizon, const typename Transition::state_type& x0,
                                                            const Transition& tm, Rng& rng) {
  if (horizon < 1) {
    throw std::invalid_argument("horizon must be at least 1");
  }
  std::vector<typename Transition::state_type> out;
  out.reserve(static_cast<std::size_t>(horizon));
  auto x = x0;
  for (int t = 1; t <= horizon; ++t) {
    x = transition_sample(tm, x, rng);
    out.push_back(x);
  }
  return out;
}

template <typename State>
ObservationFrame observe(int t, const State& x, const std::vector<SensorStatus>& status,
                         const ModalitySet<State>& models, Rng& rng) {
  if (status.size() != models.size()) {
    throw std::invalid_argument("status vector length does not match modality count");
  }
  if (!x.allFinite()) {
    throw std::invalid_argument("state must be finite");
  }
  ObservationFrame frame;
  frame.time_index = t;
  frame.observations.resize(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    frame.observations[i].modality_index = i;
    switch (status[i]) {
      case SensorStatus::normal:
        frame.observations[i].value = models[i]->sample(x, rng);
        break;
      case SensorStatus::failed:
        frame.observations[i].value = models[i]->sample_failed(x, rng);
        break;
      case SensorStatus::lost:
        break;
    }
  }
  return frame;
}

/// Rolls out the truth, then for each t and modality decides LOST / FAILED /
/// NORMAL (one independent Bernoulli per step inside a failure window) and
/// draws the observation accordingly.
template <TransitionModel Transition>
GroundTruthRun<typename Transition::state_type> generate_run(const ScenarioSpec& spec,
                                                             const typename Transition::state_type& x0,
                                                             const Transition& tm,
                                                             const ModalitySet<typename Transition::state_type>& models,
                                                             Rng& rng) {
  spec.validate(models.size());
  GroundTruthRun<typename Transition::state_type> run;
  run.states = simulate_truth(spec.horizon, x0, tm, rng);
  run.frames.reserve(run.states.size());
  run.failure_log.reserve(run.states.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 1; t <= spec.horizon; ++t) {
    std::vector<SensorStatus> status(models.size(), SensorStatus::normal);
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (spec.lost(i, t)) {
        status[i] = SensorStatus::lost;
        continue;
      }
      const double p = spec.failure_probability(i, t);
      if (p > 0.0 && unit(rng) < p) {
        status[i] = SensorStatus::failed;
      }
    }
    run.frames.push_back(observe(t, run.states[static_cast<std::size_t>(t - 1)], status, models, rng));
    run.failure_log.push_back(std::move(status));
  }
  return run;
}

// ---------------------------------------------------------------------------
// Replay files: one JSON object per line,
//   {"t": 1, "state": [...], "obs": [[y0] | null, ...], "status": ["NORMAL", ...]}

template <typename State>
void write_run(std::ostream& out, const GroundTruthRun<State>& run) {
  for (std::size_t k = 0; k < run.states.size(); ++k) {
    nlohmann::json rec;
    rec["t"] = run.frames[k].time_index;
    rec["state"] = std::vector<double>(run.states[k].data(), run.states[k].data() + run.states[k].size());
    auto obs = nlohmann::json::array();
    auto status = nlohmann::json::array();
    for (std::size_t i = 0; i < run.frames[k].size(); ++i) {
      const auto& o = run.frames[k][i];
      if (o.present()) {
        obs.push_back(std::vector<double>(o.value->data(), o.value->data() + o.value->size()));
      } else {
        obs.push_back(nullptr);
      }
      status.push_back(to_string(run.failure_log[k][i]));
    }
    rec["obs"] = std::move(obs);
    rec["status"] = std::move(status);
    out << rec.dump() << '\n';
  }
}

template <typename State>
GroundTruthRun<State> read_run(std::istream& in) {
  GroundTruthRun<State> run;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto rec = nlohmann::json::parse(line);
    const auto sv = rec.at("state").get<std::vector<double>>();
    State x = State::Zero(static_cast<Eigen::Index>(sv.size()));
    if (static_cast<std::size_t>(x.size()) != sv.size()) {
      throw std::invalid_argument("replay record state has the wrong dimension");
    }
    for (std::size_t d = 0; d < sv.size(); ++d) {
      x[static_cast<Eigen::Index>(d)] = sv[d];
    }
    run.states.push_back(x);

    ObservationFrame frame;
    frame.time_index = rec.at("t").get<int>();
    const auto& obs = rec.at("obs");
    std::vector<SensorStatus> status;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      ModalityObservation o;
      o.modality_index = i;
      if (!obs[i].is_null()) {
        const auto v = obs[i].get<std::vector<double>>();
        o.value = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
      frame.observations.push_back(std::move(o));
      status.push_back(status_from_string(rec.at("status").at(i).get<std::string>()));
    }
    run.frames.push_back(std::move(frame));
    run.failure_log.push_back(std::move(status));
  }
  return run;
}

// ---------------------------------------------------------------------------
// Scenario specs in JSON:
//   {"name": "...", "horizon": 300,
//    "failure_windows": [{"modality": 0, "start": 190, "end": 210, "probability": 1.0}],
//    "loss_windows": [{"modality": 1, "start": 250, "end": 260}]}

inline ScenarioSpec scenario_from_json(const nlohmann::json& j) {
  ScenarioSpec s;
  s.name = j.value("name", std::string("custom"));
  s.horizon = j.value("horizon", kDefaultHorizon);
  if (j.contains("failure_windows")) {
    for (const auto& w : j.at("failure_windows")) {
      s.failure_windows.push_back({w.at("modality").get<std::size_t>(), w.at("start").get<int>(),
                                   w.at("end").get<int>(), w.at("probability").get<double>()});
    }
  }
  if (j.contains("loss_windows")) {
    for (const auto& w : j.at("loss_windows")) {
      s.loss_windows.push_back(
          {w.at("modality").get<std::size_t>(), w.at("start").get<int>(), w.at("end").get<int>()});
    }
  }
  return s;
}

inline nlohmann::json scenario_to_json(const ScenarioSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["horizon"] = s.horizon;
  j["failure_windows"] = nlohmann::json::array();
  for (const auto& w : s.failure_windows) {
    j["failure_windows"].push_back(
        {{"modality", w.modality}, {"start", w.t_start}, {"end", w.t_end}, {"probability", w.probability}});
  }
  j["loss_windows"] = nlohmann::json::array();
  for (const auto& l : s.loss_windows) {
    j["loss_windows"].push_back({{"modality", l.modality}, {"start", l.t_start}, {"end", l.t_end}});
  }
  return j;
}

}  // namespace mmfusion::sim
