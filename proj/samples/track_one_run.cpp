// Simulates one run of scenario 2 and tracks it with the model-averaging
// filter, printing the estimate and the dominant usefulness hypothesis.

#include <cstdio>

#include "mmfusion/mmfusion.hpp"

int main() {
  using namespace mmfusion;
  const tracking::ModelConfig cfg;
  const auto tm = tracking::make_transition(cfg);
  const auto models = tracking::make_modalities(cfg);

  Rng data_rng(7);
  const auto run = sim::generate_run(sim::builtin_scenario(2), cfg.initial_state, tm, models, data_rng);

  Rng rng(11);
  auto prior = bench::init_prior(bench::PriorMode::accurate, cfg.initial_state, cfg);
  DmaFilter<tracking::Transition> filter(init_particles(prior, 2000, rng), tm, models);
  const auto candidates = enumerate_candidates(models.size());

  for (std::size_t k = 0; k < run.frames.size(); ++k) {
    const auto r = filter.step(run.frames[k], rng);
    std::size_t best = 0;
    for (std::size_t m = 1; m < r.posterior.size(); ++m) {
      if (r.posterior.prob(m) > r.posterior.prob(best)) {
        best = m;
      }
    }
    if (k % 10 == 9) {
      std::printf("t=%3d  est=(%8.1f, %8.1f)  true=(%8.1f, %8.1f)  model %s  pi=%.3f\n", run.frames[k].time_index,
                  r.estimate[tracking::kDx], r.estimate[tracking::kDy], run.states[k][tracking::kDx],
                  run.states[k][tracking::kDy], candidates[best].label().c_str(), r.posterior.prob(best));
    }
  }
}
