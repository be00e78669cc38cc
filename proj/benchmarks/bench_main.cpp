#include <benchmark/benchmark.h>

#include <random>

#include "hintloop/ranker.hpp"
#include "hintloop/scoring.hpp"
#include "hintloop/segmenter.hpp"

using namespace hintloop;

namespace {

ScoreSeries noisy_series(FrameIndex frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0, 1);
  ScoreSeries s{"v", "P", std::vector<double>(static_cast<std::size_t>(frames))};
  double level = 0.2;
  for (auto& x : s.scores) {
    if (unit(rng) < 0.02) level = unit(rng);
    x = std::clamp(level + 0.1 * (unit(rng) - 0.5), 0.0, 1.0);
  }
  return s;
}

void BM_Calibrate(benchmark::State& state) {
  const auto frames = static_cast<FrameIndex>(state.range(0));
  std::vector<ScoreSeries> series{noisy_series(frames, 1)};
  std::vector<TruthSegment> truth;
  for (FrameIndex f = 0; f + 50 < frames; f += 500) truth.push_back({"v", "P", f, f + 50});
  for (auto _ : state) benchmark::DoNotOptimize(calibrate_threshold(series, truth));
  state.SetItemsProcessed(state.iterations() * frames);
}
BENCHMARK(BM_Calibrate)->Arg(5000)->Arg(100000);

void BM_BinarizeMerge(benchmark::State& state) {
  const auto frames = static_cast<FrameIndex>(state.range(0));
  const auto s = noisy_series(frames, 2);
  for (auto _ : state) {
    auto raw = binarize(s, 0.5);
    benchmark::DoNotOptimize(merge_segments(raw, frames));
  }
  state.SetItemsProcessed(state.iterations() * frames);
}
BENCHMARK(BM_BinarizeMerge)->Arg(600)->Arg(100000);

void BM_ScoreVideo(benchmark::State& state) {
  const int dims = 16, frames = 600;
  std::vector<std::string> policies;
  for (int i = 0; i < state.range(0); ++i) policies.push_back("p" + std::to_string(i));
  auto model = ScorerModel::zeros(dims, 16, policies);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<double> values(static_cast<std::size_t>(dims * frames));
  for (auto& v : values) v = g(rng);
  FrameFeatureSeries feats("v", dims, values);
  for (auto _ : state) benchmark::DoNotOptimize(score_video(model, feats, {}));
  state.SetItemsProcessed(state.iterations() * frames * state.range(0));
}
BENCHMARK(BM_ScoreVideo)->Arg(1)->Arg(18);

void BM_RankTopN(benchmark::State& state) {
  std::vector<Policy> ps;
  for (int i = 0; i < 18; ++i) ps.push_back({"p" + std::to_string(10 + i), "n", "c", 1 + i % 3, true});
  PolicyTaxonomy tax(ps);
  std::mt19937_64 rng(4);
  std::vector<RawSegment> segs;
  for (int i = 0; i < state.range(0); ++i) {
    segs.push_back({"v", ps[rng() % 18].id, i * 10, i * 10 + 5, static_cast<double>(rng() % 1000) / 1000});
  }
  for (auto _ : state) {
    auto ranked = rank_segments(segs, tax);
    benchmark::DoNotOptimize(top_n(ranked, 5));
  }
}
BENCHMARK(BM_RankTopN)->Arg(20)->Arg(2000);

}  // namespace

BENCHMARK_MAIN();
