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

#pragma once

// Tree ensembles over flattened 7F rows: a bagged Gini random forest (dense
// input only) and a second-order logistic booster with exact greedy,
// sparsity-aware split finding.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ilos/missing_data.hpp"

namespace ilos {

struct TreeNode {
  std::int32_t feature = -1;  // -1 for leaves
  double threshold = 0.0;     // present values < threshold go left
  bool default_left = true;   // route for absent values
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;  // booster: eta-scaled leaf weight; forest: positive fraction
  double gain = 0.0;   // training gain of the chosen split (forest: impurity decrease)
  double cover = 0.0;  // booster: hessian sum; forest: weighted sample count

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  std::size_t leaf_index(std::span<const double> values,
                         std::span<const std::uint8_t> present) const;
  double leaf_value(std::span<const double> values, std::span<const std::uint8_t> present) const {
    return nodes[leaf_index(values, present)].value;
  }
  int depth() const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct ForestConfig {
  int trees = 100;
  int max_depth = 10;
  int features_per_split = 0;  // 0 selects ceil(sqrt(columns))
  bool bootstrap = true;
  int min_samples_leaf = 1;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static ForestConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

struct BoosterConfig {
  int trees = 100;
  int max_depth = 6;
  double learning_rate = 0.3;
  double lambda = 1.0;
  double min_child_hessian = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static BoosterConfig from_json(const nlohmann::json& j);
  friend bool operator==(const BoosterConfig&, const BoosterConfig&) = default;
};

enum class EnsembleKind { kForest, kBooster };

class TreeEnsemble {
 public:
  EnsembleKind kind = EnsembleKind::kBooster;
  std::vector<Tree> trees;
  ForestConfig forest_config;
  BoosterConfig booster_config;
  double base_score = 0.0;  // booster prior logit
  std::size_t input_width = 0;

  // tree_limit = 0 uses every tree; otherwise the first tree_limit trees.
  double predict_row(std::span<const double> values, std::span<const std::uint8_t> present,
                     std::size_t tree_limit = 0) const;
  std::vector<double> predict_proba(const FlatRows& rows, std::size_t tree_limit = 0) const;
  TreeEnsemble prefix(std::size_t tree_count) const;

  nlohmann::json to_json() const;
  static TreeEnsemble from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static TreeEnsemble load(const std::filesystem::path& path);

  friend bool operator==(const TreeEnsemble& a, const TreeEnsemble& b) {
    return a.kind == b.kind && a.trees == b.trees && a.base_score == b.base_score &&
           a.input_width == b.input_width;
  }
};

// Throws DataError if any cell is absent or labels are not 0/1.
TreeEnsemble train_random_forest(const FlatRows& rows, std::span<const std::uint8_t> labels,
                                 const ForestConfig& config);

struct BoosterTrace {
  std::vector<double> train_logloss;  // after each round; [0] is the prior
};

TreeEnsemble train_gbdt(const FlatRows& rows, std::span<const std::uint8_t> labels,
                        const BoosterConfig& config, BoosterTrace* trace = nullptr);

double split_gain(double gl, double hl, double gr, double hr, double lambda);

using ScoreMetric =
    std::function<double(std::span<const double> scores, std::span<const std::uint8_t> labels)>;

struct GridPoint {
  int trees = 0;
  double score = 0.0;
};

struct GridResult {
  TreeEnsemble best;
  std::vector<GridPoint> points;
};

// Evaluates every tree count of the grid on the validation rows using the
// leading trees of 'full'. Ties keep the smaller tree count.
GridResult select_tree_count(const TreeEnsemble& full, const FlatRows& validation,
                             std::span<const std::uint8_t> validation_labels,
                             std::span<const int> grid, const ScoreMetric& metric);

// Trains once at max(grid) and evaluates prefixes.
GridResult grid_search_forest(const FlatRows& train, std::span<const std::uint8_t> train_labels,
                              const FlatRows& validation,
                              std::span<const std::uint8_t> validation_labels,
                              std::span<const int> grid, ForestConfig config,
                              const ScoreMetric& metric);
GridResult grid_search_gbdt(const FlatRows& train, std::span<const std::uint8_t> train_labels,
                            const FlatRows& validation,
                            std::span<const std::uint8_t> validation_labels,
                            std::span<const int> grid, BoosterConfig config,
                            const ScoreMetric& metric);

// 100, 200, ..., 3000.
std::vector<int> full_tree_grid();
std::vector<int> tree_grid(int first, int last, int step);

}  // namespace ilos
