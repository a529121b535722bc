#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "csi/audit.hpp"
#include "csi/metrics.hpp"
#include "csi/objectives.hpp"
#include "csi/scoring.hpp"
#include "csi/train.hpp"

namespace {

csi::nn::Mat random_mat(long rows, long cols, std::uint64_t seed) {
  csi::nn::Mat m(rows, cols);
  csi::Rng rng(seed);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

std::vector<csi::Sample> random_samples(int n, int hw, std::uint64_t seed) {
  std::vector<csi::Sample> out;
  csi::Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    csi::Sample s;
    s.pixels = csi::Image(hw, hw, 3);
    for (double& v : s.pixels.data) v = rng.uniform();
    s.id = "b-" + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

csi::ModelBundle& shared_bundle() {
  static csi::ModelBundle bundle = [] {
    csi::ShiftFamilyParams fp;
    csi::ModelConfig mc;
    mc.image_hw = 32;
    mc.width = 16;
    mc.proj_dim = 64;
    mc.num_shifts = 4;
    return csi::ModelBundle(mc, csi::make_shift_family("rotate", fp, 1), 7);
  }();
  return bundle;
}

void BM_GroupedLossValue(benchmark::State& state) {
  const int b = static_cast<int>(state.range(0)), k = 4;
  std::vector<long> groups =
      csi::contrastive_groups(csi::LossMode::ConSi, b, k, {}, false);
  csi::nn::Mat z = random_mat(128, static_cast<long>(groups.size()), 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(csi::grouped_nt_xent_value(z, groups, 0.5));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(groups.size()));
}
BENCHMARK(BM_GroupedLossValue)->Arg(16)->Arg(64);

void BM_TrainStep(benchmark::State& state) {
  csi::ModelBundle& bundle = shared_bundle();
  auto batch = random_samples(static_cast<int>(state.range(0)), 32, 11);
  csi::TrainConfig tc;
  tc.loss.mode = csi::LossMode::Csi;
  tc.epochs = 1;
  tc.batch_size = static_cast<int>(batch.size());
  tc.optim.warmup_epochs = 0;
  for (auto _ : state) csi::train(bundle, batch, tc);
}
BENCHMARK(BM_TrainStep)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_EmbedBatch(benchmark::State& state) {
  csi::ModelBundle& bundle = shared_bundle();
  auto batch = random_samples(static_cast<int>(state.range(0)), 32, 13);
  std::vector<csi::Image> images;
  for (const auto& s : batch) images.push_back(s.pixels);
  for (auto _ : state) benchmark::DoNotOptimize(bundle.embed(images));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EmbedBatch)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ScoreSamples(benchmark::State& state) {
  csi::ModelBundle& bundle = shared_bundle();
  static csi::ScorerState st = [] {
    csi::ScoringConfig sc;
    sc.ensemble_n = 4;
    return csi::fit_scorer(shared_bundle(), shared_bundle().family(), random_samples(32, 32, 17),
                           sc);
  }();
  auto batch = random_samples(static_cast<int>(state.range(0)), 32, 19);
  std::vector<csi::Image> images;
  for (const auto& s : batch) images.push_back(s.pixels);
  for (auto _ : state)
    benchmark::DoNotOptimize(csi::score_samples(images, csi::ScoreKind::SCsi, st, bundle));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ScoreSamples)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Auroc(benchmark::State& state) {
  csi::Rng rng(23);
  std::vector<double> in, out;
  for (long i = 0; i < state.range(0); ++i) {
    in.push_back(rng.normal() + 0.3);
    out.push_back(rng.normal());
  }
  for (auto _ : state) benchmark::DoNotOptimize(csi::auroc(in, out));
  state.SetItemsProcessed(state.iterations() * 2 * state.range(0));
}
BENCHMARK(BM_Auroc)->Arg(1000)->Arg(10000);

void BM_TotalVariation(benchmark::State& state) {
  auto samples = random_samples(1, static_cast<int>(state.range(0)), 29);
  for (auto _ : state) benchmark::DoNotOptimize(csi::total_variation(samples[0].pixels));
}
BENCHMARK(BM_TotalVariation)->Arg(32)->Arg(128);

void BM_ResizeTriangle(benchmark::State& state) {
  auto samples = random_samples(1, 256, 31);
  const int side = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(csi::resize(samples[0].pixels, side, side,
                                         csi::ResizeKernel::Triangle));
}
BENCHMARK(BM_ResizeTriangle)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
