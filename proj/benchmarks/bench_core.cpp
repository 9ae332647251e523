/*
 * Copyright 2026 The ILOS Forecast Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "ilos/evaluation.hpp"
#include "ilos/missing_data.hpp"
#include "ilos/rits.hpp"
#include "ilos/trees.hpp"
#include "oracles.hpp"

namespace {

using namespace ilos;

void BM_BritsTrainStep(benchmark::State& state) {
  const int features = 29;
  const int hidden = static_cast<int>(state.range(0));
  const int batch_size = static_cast<int>(state.range(1));
  const auto windows = oracle::random_windows(batch_size, features, 0.2, 7);
  std::vector<const WindowSample*> ptrs;
  for (const auto& w : windows) ptrs.push_back(&w);
  const auto batch = make_batch(ptrs);
  auto model = BritsModel::init(features, hidden, 8);
  AdamState adam;
  adam.m = {RitsParams::zeros_like(model.forward), RitsParams::zeros_like(model.backward)};
  adam.v = adam.m;
  TrainSchedule schedule;
  BritsGradients grad;
  for (auto _ : state) {
    brits_loss_and_gradient(model, batch, model.weights, grad);
    adam_step(model, adam, grad, schedule);
  }
  state.SetItemsProcessed(state.iterations() * batch_size);
}
BENCHMARK(BM_BritsTrainStep)->Args({64, 256})->Args({256, 1024})->Unit(benchmark::kMillisecond);

void BM_BritsPredict(benchmark::State& state) {
  const auto windows = oracle::random_windows(4096, 29, 0.2, 9);
  SequenceSet set;
  for (const auto& w : windows) set.samples.push_back(&w);
  const auto model = BritsModel::init(29, 64, 10);
  for (auto _ : state) benchmark::DoNotOptimize(brits_predict(model, set));
  state.SetItemsProcessed(state.iterations() * 4096);
}
BENCHMARK(BM_BritsPredict)->Unit(benchmark::kMillisecond);

FlatRows booster_rows(std::size_t n, std::size_t cols, double absent_p,
                      std::vector<std::uint8_t>& labels) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution absent(absent_p);
  FlatRows rows;
  rows.cols = cols;
  labels.clear();
  std::vector<double> v(cols);
  std::vector<std::uint8_t> p(cols);
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      p[j] = absent(rng) ? 0 : 1;
      v[j] = p[j] ? normal(rng) : 0.0;
      if (j % 5 == 0) z += v[j];
    }
    labels.push_back(z > 1.0 ? 1 : 0);
    rows.append(v, p);
  }
  return rows;
}

void BM_GbdtTrain(benchmark::State& state) {
  std::vector<std::uint8_t> labels;
  const auto rows = booster_rows(static_cast<std::size_t>(state.range(0)), 7 * 29, 0.8, labels);
  BoosterConfig cfg;
  cfg.trees = 20;
  for (auto _ : state) benchmark::DoNotOptimize(train_gbdt(rows, labels, cfg));
}
BENCHMARK(BM_GbdtTrain)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_ForestTrain(benchmark::State& state) {
  std::vector<std::uint8_t> labels;
  const auto rows = booster_rows(5000, 7 * 29, 0.0, labels);
  ForestConfig cfg;
  cfg.trees = 20;
  for (auto _ : state) benchmark::DoNotOptimize(train_random_forest(rows, labels, cfg));
}
BENCHMARK(BM_ForestTrain)->Unit(benchmark::kMillisecond);

void BM_TruncatedPrAuc(benchmark::State& state) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u;
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> scores(n);
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = u(rng) < 0.1;
    scores[i] = u(rng) + 0.3 * labels[i];
  }
  labels[0] = 1;
  for (auto _ : state) benchmark::DoNotOptimize(pr_auc_truncated(pr_curve(scores, labels)));
}
BENCHMARK(BM_TruncatedPrAuc)->Arg(100000);

void BM_TimeGaps(benchmark::State& state) {
  MaskMatrix mask(29);
  std::mt19937_64 rng(13);
  for (auto& m : mask.data) m = rng() & 1U;
  for (auto _ : state) benchmark::DoNotOptimize(compute_time_gaps(mask));
}
BENCHMARK(BM_TimeGaps);

}  // namespace

BENCHMARK_MAIN();
