// Monte Carlo benchmark driver for the multi-modal fusion filters.
//
//   bench --algorithm dma --scenario 2 --particles 10000 --runs 100 --seed 1 --out out/
//   bench table1 --particles 10000 --runs 100 --out out/
//   bench replay --algorithm pf --dataset out/dataset_0.ndjson --out replay/

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mmfusion/bench.hpp"

namespace fs = std::filesystem;
using namespace mmfusion;
using namespace mmfusion::bench;

namespace {

struct CliOptions {
  std::string algorithm = "dma";
  std::string scenario = "1";
  std::size_t particles = 10000;
  std::size_t runs = 100;
  std::uint64_t seed = 1;
  std::string prior = "accurate";
  std::string out = "bench_out";
  std::string rmse = "full";
  std::string config;
  std::string dataset;
  unsigned threads = 0;
};

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  return out;
}

nlohmann::json load_config_json(const std::string& path) {
  if (path.empty()) {
    return nlohmann::json::object();
  }
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path);
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

sim::ScenarioSpec resolve_scenario(const std::string& id, const nlohmann::json& config) {
  if (id.size() == 1 && id[0] >= '1' && id[0] <= '4') {
    return sim::builtin_scenario(id[0] - '0');
  }
  if (config.contains("scenarios")) {
    for (const auto& s : config.at("scenarios")) {
      if (s.value("name", std::string()) == id) {
        auto spec = sim::scenario_from_json(s);
        spec.validate(2);
        return spec;
      }
    }
  }
  throw ConfigError("unknown scenario '" + id + "' (use 1..4 or a name from the config's \"scenarios\")");
}

ExperimentConfig make_config(const CliOptions& o, const nlohmann::json& config) {
  ExperimentConfig cfg;
  try {
    cfg.algorithm = parse_algorithm(o.algorithm);
    cfg.model = tracking::model_config_from_json(config.contains("model") ? config.at("model")
                                                                           : nlohmann::json::object());
    cfg.scenario = resolve_scenario(o.scenario, config);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  cfg.particles = o.particles;
  cfg.runs = o.runs;
  cfg.master_seed = o.seed;
  cfg.prior = o.prior == "biased" ? PriorMode::biased : PriorMode::accurate;
  cfg.rmse_mode = o.rmse == "position" ? RmseMode::position : RmseMode::full;
  cfg.threads = o.threads;
  if (cfg.particles < 1 || cfg.runs < 1) {
    throw ConfigError("--particles and --runs must be at least 1");
  }
  return cfg;
}

std::vector<std::string> weight_labels(Algorithm a) {
  std::vector<std::string> labels;
  if (a == Algorithm::dma) {
    for (const auto& u : enumerate_candidates(2)) {
      labels.push_back("pi_" + u.label());
    }
  } else if (a == Algorithm::ts) {
    labels = {"alpha_angle", "alpha_range"};
  }
  return labels;
}

/// Per-step model weights averaged over runs.
void write_mean_weights(const fs::path& path, const std::vector<RunResult>& runs, Algorithm a) {
  if (runs.empty() || runs.front().weight_trace.empty()) {
    return;
  }
  RunResult mean;
  mean.weight_trace = runs.front().weight_trace;
  for (auto& row : mean.weight_trace) {
    std::fill(row.begin(), row.end(), 0.0);
  }
  for (const auto& r : runs) {
    for (std::size_t t = 0; t < r.weight_trace.size(); ++t) {
      for (std::size_t m = 0; m < r.weight_trace[t].size(); ++m) {
        mean.weight_trace[t][m] += r.weight_trace[t][m] / static_cast<double>(runs.size());
      }
    }
  }
  auto out = open_out(path);
  write_weights_csv(out, mean, weight_labels(a));
}

int run_single_algorithm(const CliOptions& o) {
  const auto config = load_config_json(o.config);
  const auto cfg = make_config(o, config);
  fs::create_directories(o.out);
  const fs::path dir(o.out);

  const auto result = run_experiment(cfg);

  {
    auto out = open_out(dir / "summary.csv");
    write_summary_header(out);
    write_summary_row(out, cfg.algorithm, cfg.scenario.name, cfg.particles, result.summary);
  }
  {
    auto out = open_out(dir / "runs.csv");
    write_runs_header(out);
    for (const auto& r : result.runs) {
      write_run_row(out, r);
    }
  }
  for (const auto& r : result.runs) {
    const auto tag = std::to_string(r.run_index);
    if (!r.weight_trace.empty()) {
      auto out = open_out(dir / ("weights_" + tag + ".csv"));
      write_weights_csv(out, r, weight_labels(cfg.algorithm));
    }
    {
      auto out = open_out(dir / ("trajectory_" + tag + ".csv"));
      write_trajectory_csv(out, r);
    }
    {
      auto out = open_out(dir / ("dataset_" + tag + ".ndjson"));
      sim::write_run(out, make_dataset(cfg, r.run_index));
    }
  }
  write_mean_weights(dir / "weights_mean.csv", result.runs, cfg.algorithm);

  std::cout << std::setprecision(6) << to_string(cfg.algorithm) << ' ' << cfg.scenario.name
            << ": mean RMSE " << result.summary.mean_rmse << " (var " << result.summary.var_rmse << "), mean time "
            << result.summary.mean_time << " s\n";
  return 0;
}

int run_table1(const CliOptions& o) {
  const auto config = load_config_json(o.config);
  fs::create_directories(o.out);
  const fs::path dir(o.out);

  auto summary_out = open_out(dir / "summary.csv");
  write_summary_header(summary_out);
  auto runs_out = open_out(dir / "runs.csv");
  write_runs_header(runs_out);

  std::map<std::pair<int, Algorithm>, Summary> grid;
  std::map<Algorithm, std::vector<double>> scenario_means;
  std::map<Algorithm, std::vector<double>> run_times;
  for (int k = 1; k <= 4; ++k) {
    for (const Algorithm a : kAllAlgorithms) {
      CliOptions local = o;
      local.algorithm = to_string(a);
      local.scenario = std::to_string(k);
      const auto cfg = make_config(local, config);
      const auto result = run_experiment(cfg);
      grid[{k, a}] = result.summary;
      write_summary_row(summary_out, a, cfg.scenario.name, cfg.particles, result.summary);
      for (const auto& r : result.runs) {
        write_run_row(runs_out, r);
        run_times[a].push_back(r.wall_time_seconds);
      }
      if (a == Algorithm::dma) {
        write_mean_weights(dir / ("weights_mean_scenario" + std::to_string(k) + ".csv"), result.runs, a);
      }
      std::cerr << "scenario " << k << ' ' << to_string(a) << ": " << result.summary.mean_rmse << '\n';
    }
  }

  // Rows: scenarios, their average, then computing time; cells "mean (variance)".
  auto table = open_out(dir / "table1.csv");
  table << "row";
  for (const Algorithm a : kAllAlgorithms) {
    table << ',' << to_string(a);
  }
  table << '\n' << std::fixed;
  auto cell = [&](double m, double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << m << " (" << std::setprecision(3) << v << ')';
    return s.str();
  };
  for (int k = 1; k <= 4; ++k) {
    table << "scenario" << k;
    for (const Algorithm a : kAllAlgorithms) {
      table << ',' << cell(grid[{k, a}].mean_rmse, grid[{k, a}].var_rmse);
    }
    table << '\n';
  }
  table << "average";
  for (const Algorithm a : kAllAlgorithms) {
    std::vector<double> means;
    std::vector<double> vars;
    for (int k = 1; k <= 4; ++k) {
      means.push_back(grid[{k, a}].mean_rmse);
      vars.push_back(grid[{k, a}].var_rmse);
    }
    table << ',' << cell(mean_and_variance(means).first, mean_and_variance(vars).first);
  }
  table << "\ntime_s";
  for (const Algorithm a : kAllAlgorithms) {
    const auto [m, v] = mean_and_variance(run_times[a]);
    table << ',' << cell(m, v);
  }
  table << '\n';
  std::cout << "wrote " << (dir / "table1.csv").string() << '\n';
  return 0;
}

int run_replay(const CliOptions& o) {
  const auto config = load_config_json(o.config);
  auto cfg = make_config(o, config);
  std::ifstream in(o.dataset);
  if (!in) {
    throw ConfigError("cannot open dataset: " + o.dataset);
  }
  const auto data = sim::read_run<State>(in);
  if (data.states.empty()) {
    throw ConfigError("dataset is empty: " + o.dataset);
  }
  const auto initial = make_initial_particles(cfg, 0);
  auto rng = make_stream(cfg.master_seed, 0, Stream::filter);
  auto r = run_on_dataset(cfg.algorithm, data, initial, cfg.model, rng, cfg.rmse_mode);
  r.scenario = fs::path(o.dataset).stem().string();
  r.seed = cfg.master_seed;

  fs::create_directories(o.out);
  const fs::path dir(o.out);
  {
    auto out = open_out(dir / "runs.csv");
    write_runs_header(out);
    write_run_row(out, r);
  }
  {
    auto out = open_out(dir / "trajectory_0.csv");
    write_trajectory_csv(out, r);
  }
  if (!r.weight_trace.empty()) {
    auto out = open_out(dir / "weights_0.csv");
    write_weights_csv(out, r, weight_labels(cfg.algorithm));
  }
  std::cout << to_string(cfg.algorithm) << " on " << o.dataset << ": RMSE " << r.rmse << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo benchmark for robust multi-modal fusion filters"};
  app.fallthrough();
  CliOptions o;
  app.add_option("--algorithm", o.algorithm, "Filter to run")->check(CLI::IsMember({"pf", "sma", "ts", "dma"}));
  app.add_option("--scenario", o.scenario, "Scenario 1..4 or a name defined in --config");
  app.add_option("--particles", o.particles, "Particles per filter")->check(CLI::PositiveNumber);
  app.add_option("--runs", o.runs, "Independent Monte Carlo runs")->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "Master seed");
  app.add_option("--prior", o.prior, "Initial particle prior")->check(CLI::IsMember({"accurate", "biased"}));
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--rmse", o.rmse, "Error over the full state or position only")
      ->check(CLI::IsMember({"full", "position"}));
  app.add_option("--config", o.config, "JSON config with \"model\" and \"scenarios\" sections");
  app.add_option("--threads", o.threads, "Worker threads for runs (0 = all cores)");

  auto* table1 = app.add_subcommand("table1", "All algorithms x scenarios 1-4, emitted as a grid");
  auto* replay = app.add_subcommand("replay", "Run one algorithm on an archived dataset file");
  replay->add_option("--dataset", o.dataset, "dataset_<run>.ndjson file")->required();
  app.require_subcommand(0, 1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*table1) {
      return run_table1(o);
    }
    if (*replay) {
      return run_replay(o);
    }
    return run_single_algorithm(o);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
