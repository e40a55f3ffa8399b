#include <benchmark/benchmark.h>

#include "dcmd/inference.hpp"
#include "dcmd/scoring.hpp"
#include "dcmd/spectrum.hpp"

using namespace dcmd;

namespace {

MotionWindow desk_window() {
  SynthConfig sc;
  sc.clip_len = 20;
  return build_windows(synth_generate(sc, 1).tracks, 3, 4, 1).at(0);
}

}  // namespace

static void BM_Dct7x34(benchmark::State& state) {
  Rng rng(1);
  const Mat x = standard_normal(rng, 7, 34);
  for (auto _ : state) {
    Mat y = idct(dct(x));
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Dct7x34);

static void BM_DenoiserForward(benchmark::State& state) {
  const Model model(desk_model_config(), 1);
  Rng rng(2);
  const Mat xt = standard_normal(rng, 7, 34);
  const RowVec u = standard_normal(rng, 1, model.config.denoiser.cond_dim);
  for (auto _ : state) {
    auto out = model.denoiser.forward(xt, 5, u);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_DenoiserForward);

// Batch size is the benchmark argument.
static void BM_TrainStep(benchmark::State& state) {
  const auto batch = state.range(0);
  Trainer trainer(desk_model_config(), desk_train_config());
  Rng rng(3);
  const Mat base = flatten(desk_window());
  Mat motion(batch * base.rows(), base.cols());
  for (Eigen::Index b = 0; b < batch; ++b) motion.middleRows(b * base.rows(), base.rows()) = base;
  for (auto _ : state) {
    const auto noise = sample_noise(rng, batch, base.rows(), base.cols(), 10);
    auto l = trainer.step(motion, noise, Objective::Minimax, 1e-4);
    benchmark::DoNotOptimize(l);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_WindowErrors(benchmark::State& state) {
  const InferenceEngine engine(Model(desk_model_config(), 1), build_schedule(10, 1e-4, 2e-2));
  const auto window = desk_window();
  for (auto _ : state) {
    auto e = engine.window_errors(window, static_cast<int>(state.range(0)), 7);
    benchmark::DoNotOptimize(e);
  }
}
BENCHMARK(BM_WindowErrors)->Arg(1)->Arg(5)->Unit(benchmark::kMicrosecond);

static void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  std::vector<double> scores(n);
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = standard_normal(rng, 1, 1)(0, 0);
    labels[i] = i % 7 == 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(scores, labels));
}
BENCHMARK(BM_RocAuc)->Arg(1000)->Arg(100000);

BENCHMARK_MAIN();
