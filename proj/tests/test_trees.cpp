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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ilos/errors.hpp"
#include "ilos/evaluation.hpp"
#include "ilos/trees.hpp"
#include "ilos/util.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace ilos {
namespace {

FlatRows one_column(const std::vector<double>& v) {
  FlatRows rows;
  rows.cols = 1;
  for (double x : v) rows.append(std::vector<double>{x}, std::vector<std::uint8_t>{1});
  return rows;
}

FlatRows random_rows(std::size_t n, std::size_t cols, double absent_p, std::uint64_t seed,
                     std::vector<std::uint8_t>& labels) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution absent(absent_p);
  FlatRows rows;
  rows.cols = cols;
  labels.clear();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(cols);
    std::vector<std::uint8_t> p(cols, 1);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      v[j] = normal(rng);
      z += (j % 2 ? 1.0 : -0.5) * v[j];
      if (absent(rng)) {
        p[j] = 0;
        v[j] = 0.0;
      }
    }
    labels.push_back(std::bernoulli_distribution(sigmoid(2.0 * z))(rng) ? 1 : 0);
    rows.append(v, p);
  }
  return rows;
}

TEST(Predict, StumpRouting) {
  TreeEnsemble m;
  m.kind = EnsembleKind::kBooster;
  m.input_width = 1;
  Tree t;
  TreeNode root;
  root.feature = 0;
  root.threshold = 5.0;
  root.default_left = true;
  root.left = 1;
  root.right = 2;
  TreeNode left, right;
  left.value = -1.0;
  right.value = 2.0;
  t.nodes = {root, left, right};
  m.trees.push_back(t);
  const std::vector<double> v{0.0};
  EXPECT_DOUBLE_EQ(m.predict_row(v, std::vector<std::uint8_t>{0}), sigmoid(-1.0));
  EXPECT_DOUBLE_EQ(m.predict_row(std::vector<double>{7.0}, std::vector<std::uint8_t>{1}), sigmoid(2.0));
  EXPECT_THROW(m.predict_row(std::vector<double>{1, 2}, std::vector<std::uint8_t>{1, 1}), DataError);

  TreeEnsemble empty;
  empty.base_score = 0.7;
  empty.input_width = 1;
  EXPECT_DOUBLE_EQ(empty.predict_row(v, std::vector<std::uint8_t>{1}), sigmoid(0.7));
}

TEST(Forest, SeparableData) {
  std::vector<double> x;
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(i * 0.25);
    y.push_back(i * 0.25 > 5.0 ? 1 : 0);
  }
  ForestConfig cfg;
  cfg.trees = 5;
  const auto rows = one_column(x);
  const auto m = train_random_forest(rows, y, cfg);
  for (const auto& t : m.trees) EXPECT_NEAR(t.nodes[0].threshold, 5.0, 0.5);
  const auto p = m.predict_proba(rows);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i] > 0.5, y[i] == 1);
}

TEST(Forest, DegenerateAndDeterministic) {
  std::vector<std::uint8_t> labels;
  auto rows = random_rows(120, 6, 0.0, 4, labels);
  ForestConfig cfg;
  cfg.trees = 8;
  cfg.seed = 17;
  const auto a = train_random_forest(rows, labels, cfg);
  const auto b = train_random_forest(rows, labels, cfg);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.predict_proba(rows), b.predict_proba(rows));
  for (double p : a.predict_proba(rows)) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  cfg.threads = 3;
  EXPECT_EQ(train_random_forest(rows, labels, cfg), a);

  const std::vector<std::uint8_t> zeros(labels.size(), 0);
  for (double p : train_random_forest(rows, zeros, cfg).predict_proba(rows)) EXPECT_EQ(p, 0.0);

  rows.present[3] = 0;
  EXPECT_THROW(train_random_forest(rows, labels, cfg), DataError);
}

TEST(Booster, SplitsMatchOracle) {
  for (double absent_p : {0.0, 0.3}) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      std::vector<std::uint8_t> labels;
      const auto rows = random_rows(80 + 10 * seed, 5, absent_p, 100 + seed, labels);
      BoosterConfig cfg;
      cfg.trees = 3;
      cfg.max_depth = 3;
      const auto model = train_gbdt(rows, labels, cfg);
      std::vector<double> g, h;
      for (std::size_t t = 0; t < model.trees.size(); ++t) {
        oracle::round_gradients(model, rows, labels, t, g, h);
        const auto node_rows = oracle::rows_per_node(model.trees[t], rows);
        for (std::size_t n = 0; n < model.trees[t].nodes.size(); ++n) {
          const auto& node = model.trees[t].nodes[n];
          if (node.is_leaf()) continue;
          const auto best = oracle::best_split(rows, node_rows[n], g, h, cfg);
          EXPECT_NEAR(node.gain, best.gain, 1e-9 * std::max(1.0, best.gain));
          EXPECT_GE(node.gain, 0.0);
          const double flipped = oracle::candidate_gain(
              rows, node_rows[n], g, h, static_cast<std::size_t>(node.feature), node.threshold,
              !node.default_left, cfg);
          EXPECT_LE(flipped, node.gain + 1e-9);
        }
      }
    }
  }
}

TEST(Booster, LeafValueAndGainFormula) {
  EXPECT_DOUBLE_EQ(split_gain(-2.0, 1.0, 3.0, 2.0, 1.0),
                   0.5 * (4.0 / 2.0 + 9.0 / 3.0 - 1.0 / 4.0));
  std::vector<std::uint8_t> labels;
  const auto rows = random_rows(60, 3, 0.0, 8, labels);
  BoosterConfig cfg;
  cfg.trees = 1;
  cfg.max_depth = 1;
  const auto m = train_gbdt(rows, labels, cfg);
  std::vector<double> g, h;
  oracle::round_gradients(m, rows, labels, 0, g, h);
  const auto node_rows = oracle::rows_per_node(m.trees[0], rows);
  for (std::size_t n = 1; n < m.trees[0].nodes.size(); ++n) {
    double gs = 0, hs = 0;
    for (auto r : node_rows[n]) gs += g[r], hs += h[r];
    EXPECT_NEAR(m.trees[0].nodes[n].value, -gs / (hs + cfg.lambda) * cfg.learning_rate, 1e-12);
  }
}

TEST(Booster, MonotoneLossAndDeterminism) {
  std::vector<std::uint8_t> labels;
  const auto rows = random_rows(300, 8, 0.5, 21, labels);
  BoosterConfig cfg;
  cfg.trees = 15;
  BoosterTrace trace;
  const auto m = train_gbdt(rows, labels, cfg, &trace);
  ASSERT_EQ(trace.train_logloss.size(), 16U);
  for (std::size_t i = 1; i < trace.train_logloss.size(); ++i) {
    EXPECT_LE(trace.train_logloss[i], trace.train_logloss[i - 1] + 1e-12);
  }
  EXPECT_EQ(train_gbdt(rows, labels, cfg), m);
  for (double p : m.predict_proba(rows)) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(Booster, IdenticalLabelsGiveConstantPrediction) {
  std::vector<std::uint8_t> labels;
  const auto rows = random_rows(50, 3, 0.2, 2, labels);
  BoosterConfig cfg;
  cfg.trees = 4;
  for (std::uint8_t y : {0, 1}) {
    const std::vector<std::uint8_t> same(labels.size(), y);
    const auto m = train_gbdt(rows, same, cfg);
    for (const auto& t : m.trees) EXPECT_EQ(t.nodes.size(), 1U);
    const auto p = m.predict_proba(rows);
    for (double v : p) EXPECT_EQ(v, p[0]);
    EXPECT_EQ(p[0] > 0.5, y == 1);
  }
}

TEST(Booster, SerialisationRoundTrip) {
  const auto dir = testing::temp_dir("trees");
  std::vector<std::uint8_t> labels;
  const auto rows = random_rows(100, 4, 0.3, 5, labels);
  BoosterConfig cfg;
  cfg.trees = 5;
  const auto m = train_gbdt(rows, labels, cfg);
  m.save(dir / "m.json");
  const auto back = TreeEnsemble::load(dir / "m.json");
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.predict_proba(rows), m.predict_proba(rows));
  EXPECT_THROW(TreeEnsemble::load(dir / "absent.json"), MissingArtifact);
}

TEST(Grid, ArgmaxAndTies) {
  std::vector<std::uint8_t> labels;
  const auto rows = random_rows(200, 4, 0.2, 6, labels);
  BoosterConfig cfg;
  cfg.trees = 20;
  const auto full = train_gbdt(rows, labels, cfg);
  const std::vector<int> grid{10, 20};
  // Metric that rewards the larger prefix.
  int calls = 0;
  const ScoreMetric prefer_20 = [&](std::span<const double>, std::span<const std::uint8_t>) {
    return static_cast<double>(++calls);
  };
  EXPECT_EQ(select_tree_count(full, rows, labels, grid, prefer_20).best.trees.size(), 20U);
  const ScoreMetric flat = [](std::span<const double>, std::span<const std::uint8_t>) { return 0.5; };
  const auto tie = select_tree_count(full, rows, labels, grid, flat);
  EXPECT_EQ(tie.best.trees.size(), 10U);
  EXPECT_EQ(tie.points.size(), 2U);
  EXPECT_THROW(select_tree_count(full, rows, labels, std::vector<int>{}, flat), ConfigError);

  const auto searched = grid_search_gbdt(rows, labels, rows, labels, grid, cfg,
                                         [](auto s, auto l) { return truncated_score(s, l); });
  EXPECT_EQ(searched.best.prefix(searched.best.trees.size()), searched.best);
  EXPECT_EQ(full.prefix(10).predict_proba(rows), full.predict_proba(rows, 10));
}

TEST(Grid, FullGridHasThirtyPoints) {
  const auto g = full_tree_grid();
  ASSERT_EQ(g.size(), 30U);
  EXPECT_EQ(g.front(), 100);
  EXPECT_EQ(g.back(), 3000);
  EXPECT_EQ(tree_grid(100, 500, 100), (std::vector<int>{100, 200, 300, 400, 500}));
}

TEST(Config, Validation) {
  BoosterConfig b;
  b.learning_rate = 0.0;
  EXPECT_THROW(b.validate(), ConfigError);
  b = BoosterConfig{};
  EXPECT_EQ(BoosterConfig::from_json(b.to_json()), b);
  ForestConfig f;
  f.trees = 0;
  EXPECT_THROW(f.validate(), ConfigError);
}

}  // namespace
}  // namespace ilos
