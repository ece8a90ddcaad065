#include "coactivity/rjmcmc.hpp"
#include "coactivity/scenario.hpp"
#include "coactivity/summarize.hpp"

#include <benchmark/benchmark.h>

namespace coact {
namespace {

const SyntheticDataset& dataset() {
  static const SyntheticDataset ds = [] {
    ScenarioConfig cfg;
    cfg.seed = 11;
    return generate(cfg);
  }();
  return ds;
}

void BM_BuildGp(benchmark::State& state) {
  const auto& ds = dataset();
  GpHyperParams hyper;
  hyper.length_scale_s = 45.0;
  hyper.signal_std_m = 500.0;
  const TimeGrid grid = data_grid(ds.bundle, static_cast<int>(state.range(0)));
  std::vector<GpsObservation> obs;
  for (const auto& g : ds.bundle.gps) {
    if (g.actor == ActorId(0)) obs.push_back(g);
  }
  for (auto _ : state) benchmark::DoNotOptimize(build_gp(ActorId(0), obs, hyper, grid));
  state.SetLabel(std::to_string(obs.size()) + " fixes");
}
BENCHMARK(BM_BuildGp)->Arg(100)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_SampleTrajectories(benchmark::State& state) {
  const auto& ds = dataset();
  GpHyperParams hyper;
  hyper.length_scale_s = 45.0;
  hyper.signal_std_m = 500.0;
  const auto posts = build_posteriors(ds.bundle, hyper, data_grid(ds.bundle, static_cast<int>(state.range(0))));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_trajectories(posts[0], 20, ++seed));
}
BENCHMARK(BM_SampleTrajectories)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_SamplerIterations(benchmark::State& state) {
  const auto& ds = dataset();
  const auto model = scenario_model(ds.config);
  auto settings = scenario_inference_defaults();
  settings.sampler.n_iters = state.range(0);
  settings.sampler.burn_in = state.range(0) / 2;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_chain(ds.bundle, model, settings.gp, settings.sampler, ++seed));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SamplerIterations)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_ConfigLogprob(benchmark::State& state) {
  const auto& ds = dataset();
  const auto model = scenario_model(ds.config);
  GpHyperParams hyper;
  hyper.length_scale_s = 45.0;
  hyper.signal_std_m = 500.0;
  const TimeGrid grid = data_grid(ds.bundle, 500);
  const auto posts = build_posteriors(ds.bundle, hyper, grid);
  const auto ens = draw_ensembles(posts, 20, 3);
  Configuration c;
  c.instances = ds.truth;
  for (auto _ : state) benchmark::DoNotOptimize(config_logprob(c, ds.bundle, ens, grid, model));
}
BENCHMARK(BM_ConfigLogprob)->Unit(benchmark::kMillisecond);

void BM_SelectKeyframes(benchmark::State& state) {
  const auto& ds = dataset();
  const auto model = scenario_model(ds.config);
  auto settings = scenario_inference_defaults();
  settings.sampler.n_iters = 4000;
  settings.sampler.burn_in = 2000;
  const std::vector<ChainSamples> chains{run_chain(ds.bundle, model, settings.gp, settings.sampler, 1)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(select_keyframes(ds.bundle.frames, 10, chains, FrameDistanceWeights{}));
  }
}
BENCHMARK(BM_SelectKeyframes)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace coact

BENCHMARK_MAIN();
