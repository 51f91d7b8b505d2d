#include <benchmark/benchmark.h>

#include "layerscope/criteria.hpp"
#include "layerscope/fepoid.hpp"
#include "layerscope/fst.hpp"
#include "layerscope/idest.hpp"
#include "layerscope/probe.hpp"
#include "layerscope/random.hpp"

#include <string>

using namespace layerscope;

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
  }
  return m;
}

}  // namespace

static void BM_RankMe(benchmark::State& state) {
  const Matrix z = gaussian(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(rankme(z, kRankMeEpsilon));
}
BENCHMARK(BM_RankMe)->Args({500, 256})->Args({500, 512})->Args({2000, 256})->Unit(benchmark::kMillisecond);

static void BM_TwoNN(benchmark::State& state) {
  const Matrix z = gaussian(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(twonn(z).d_id);
}
BENCHMARK(BM_TwoNN)->Args({500, 64})->Args({500, 512})->Args({2000, 64})->Args({2000, 256})->Unit(benchmark::kMillisecond);

static void BM_Curvature(benchmark::State& state) {
  const auto tokens = static_cast<std::size_t>(state.range(0));
  std::vector<Matrix> paths;
  for (std::uint64_t s = 0; s < 100; ++s) paths.push_back(gaussian(tokens, static_cast<std::size_t>(state.range(1)), s));
  for (auto _ : state) benchmark::DoNotOptimize(curvature_layer(paths, CurvatureWeighting::uniform).value);
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_Curvature)->Args({30, 512})->Args({130, 512})->Unit(benchmark::kMillisecond);

static void BM_ProbeTrain(benchmark::State& state) {
  const std::size_t n = 1000, d = static_cast<std::size_t>(state.range(0));
  const Matrix x = gaussian(n, d, 3);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = x(static_cast<Eigen::Index>(i), 0) > 0.0;
  ProbeConfig cfg;
  cfg.max_epochs = 5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_probe(x.topRows(800), std::span(y).first(800), x.bottomRows(200),
                                         std::span(y).last(200), cfg)
                                 .model.best_val_loss);
  }
}
BENCHMARK(BM_ProbeTrain)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_PerExampleGradients(benchmark::State& state) {
  const Matrix x = gaussian(400, 64, 4);
  std::vector<int> y(400);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
  ProbeModel p = ProbeModel::zeros(ProbeArch::mlp, 64, 256);
  p.params = gaussian(static_cast<std::size_t>(p.params.size()), 1, 5).col(0) * 0.05;
  for (auto _ : state) benchmark::DoNotOptimize(snr(p, x, y, kSnrEpsilon));
}
BENCHMARK(BM_PerExampleGradients)->Unit(benchmark::kMillisecond);

static void BM_FepoidScan(benchmark::State& state) {
  Rng rng(6);
  std::vector<double> series(static_cast<std::size_t>(state.range(0)));
  for (double& v : series) v = rng.uniform() * 20.0;
  for (auto _ : state) benchmark::DoNotOptimize(fepoid_select(series, kDefaultHorizon));
}
BENCHMARK(BM_FepoidScan)->Arg(32)->Arg(80);

static void BM_FirstSentence(benchmark::State& state) {
  std::string text;
  for (int i = 0; i < 20; ++i) text += "Dr. Smith met G. Brown in the U.S. at 3.14 p.m. and waited... ";
  text += "Done.";
  const ExceptionRules rules;
  for (auto _ : state) benchmark::DoNotOptimize(first_sentence_end(text, rules).char_index);
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_FirstSentence);

BENCHMARK_MAIN();
