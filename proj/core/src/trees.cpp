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

#include "ilos/trees.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "ilos/errors.hpp"
#include "ilos/util.hpp"

namespace ilos {

namespace {

constexpr double kLabelLogitClamp = 15.0;

void check_labels(const FlatRows& rows, std::span<const std::uint8_t> labels) {
  if (labels.size() != rows.rows) throw DataError("labels/rows length mismatch");
  for (auto y : labels) {
    if (y > 1) throw DataError("labels must be 0 or 1");
  }
  if (rows.rows == 0) throw DataError("cannot train on zero rows");
}

double midpoint_threshold(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid > lo ? mid : hi;
}

double logloss(std::span<const double> margin, std::span<const std::uint8_t> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < margin.size(); ++i) {
    const double z = margin[i];
    // softplus(z) - y z, evaluated stably
    const double sp = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    total += sp - (labels[i] ? z : 0.0);
  }
  return total / static_cast<double>(margin.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Tree / ensemble

std::size_t Tree::leaf_index(std::span<const double> values,
                             std::span<const std::uint8_t> present) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    const auto f = static_cast<std::size_t>(n.feature);
    const bool go_left = present[f] ? values[f] < n.threshold : n.default_left;
    i = static_cast<std::size_t>(go_left ? n.left : n.right);
  }
  return i;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

void ForestConfig::validate() const {
  if (trees < 1) throw ConfigError("forest.trees must be >= 1");
  if (max_depth < 1) throw ConfigError("forest.max_depth must be >= 1");
  if (features_per_split < 0) throw ConfigError("forest.features_per_split must be >= 0");
  if (min_samples_leaf < 1) throw ConfigError("forest.min_samples_leaf must be >= 1");
}

nlohmann::json ForestConfig::to_json() const {
  return {{"trees", trees},         {"max_depth", max_depth},
          {"features_per_split", features_per_split},
          {"bootstrap", bootstrap}, {"min_samples_leaf", min_samples_leaf},
          {"seed", seed},           {"threads", threads}};
}

ForestConfig ForestConfig::from_json(const nlohmann::json& j) {
  ForestConfig c;
  c.trees = j.value("trees", c.trees);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.features_per_split = j.value("features_per_split", c.features_per_split);
  c.bootstrap = j.value("bootstrap", c.bootstrap);
  c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

void BoosterConfig::validate() const {
  if (trees < 1) throw ConfigError("booster.trees must be >= 1");
  if (max_depth < 1) throw ConfigError("booster.max_depth must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw ConfigError("booster.learning_rate must be in (0, 1]");
  }
  if (!(lambda >= 0.0)) throw ConfigError("booster.lambda must be >= 0");
  if (!(min_child_hessian >= 0.0)) throw ConfigError("booster.min_child_hessian must be >= 0");
}

nlohmann::json BoosterConfig::to_json() const {
  return {{"trees", trees},
          {"max_depth", max_depth},
          {"learning_rate", learning_rate},
          {"lambda", lambda},
          {"min_child_hessian", min_child_hessian},
          {"seed", seed}};
}

BoosterConfig BoosterConfig::from_json(const nlohmann::json& j) {
  BoosterConfig c;
  c.trees = j.value("trees", c.trees);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.lambda = j.value("lambda", c.lambda);
  c.min_child_hessian = j.value("min_child_hessian", c.min_child_hessian);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

double TreeEnsemble::predict_row(std::span<const double> values,
                                 std::span<const std::uint8_t> present,
                                 std::size_t tree_limit) const {
  if (values.size() != input_width || present.size() != input_width) {
    throw DataError("predict: row has " + std::to_string(values.size()) + " columns, model expects " +
                    std::to_string(input_width));
  }
  const std::size_t n = tree_limit == 0 ? trees.size() : std::min(tree_limit, trees.size());
  if (kind == EnsembleKind::kBooster) {
    double margin = base_score;
    for (std::size_t t = 0; t < n; ++t) margin += trees[t].leaf_value(values, present);
    return sigmoid(margin);
  }
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t t = 0; t < n; ++t) sum += trees[t].leaf_value(values, present);
  return sum / static_cast<double>(n);
}

std::vector<double> TreeEnsemble::predict_proba(const FlatRows& rows,
                                                std::size_t tree_limit) const {
  if (rows.rows > 0 && rows.cols != input_width) {
    throw DataError("predict: rows have " + std::to_string(rows.cols) +
                    " columns, model expects " + std::to_string(input_width));
  }
  std::vector<double> out(rows.rows);
  for (std::size_t i = 0; i < rows.rows; ++i) {
    out[i] = predict_row(rows.row(i), rows.row_present(i), tree_limit);
  }
  return out;
}

TreeEnsemble TreeEnsemble::prefix(std::size_t tree_count) const {
  TreeEnsemble out = *this;
  out.trees.resize(std::min(tree_count, trees.size()));
  if (kind == EnsembleKind::kForest) {
    out.forest_config.trees = static_cast<int>(out.trees.size());
  } else {
    out.booster_config.trees = static_cast<int>(out.trees.size());
  }
  return out;
}

nlohmann::json TreeEnsemble::to_json() const {
  nlohmann::json j;
  j["format"] = "ilos-tree-ensemble";
  j["version"] = 1;
  j["kind"] = kind == EnsembleKind::kForest ? "forest" : "booster";
  j["input_width"] = input_width;
  j["base_score"] = base_score;
  j["config"] = kind == EnsembleKind::kForest ? forest_config.to_json() : booster_config.to_json();
  auto& jt = j["trees"] = nlohmann::json::array();
  for (const auto& tree : trees) {
    nlohmann::json t;
    std::vector<std::int32_t> feature, left, right;
    std::vector<double> threshold, value, gain, cover;
    std::vector<std::uint8_t> default_left;
    for (const auto& n : tree.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      default_left.push_back(n.default_left);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
      gain.push_back(n.gain);
      cover.push_back(n.cover);
    }
    t["feature"] = feature;
    t["threshold"] = threshold;
    t["default_left"] = default_left;
    t["left"] = left;
    t["right"] = right;
    t["value"] = value;
    t["gain"] = gain;
    t["cover"] = cover;
    jt.push_back(std::move(t));
  }
  return j;
}

TreeEnsemble TreeEnsemble::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ilos-tree-ensemble" || j.value("version", 0) != 1) {
    throw ParseError("tree-ensemble", 0, "unsupported model format");
  }
  TreeEnsemble m;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "forest") {
    m.kind = EnsembleKind::kForest;
    m.forest_config = ForestConfig::from_json(j.at("config"));
  } else if (kind == "booster") {
    m.kind = EnsembleKind::kBooster;
    m.booster_config = BoosterConfig::from_json(j.at("config"));
  } else {
    throw ParseError("tree-ensemble", 0, "unknown kind " + kind);
  }
  m.input_width = j.at("input_width").get<std::size_t>();
  m.base_score = j.at("base_score").get<double>();
  for (const auto& t : j.at("trees")) {
    const auto feature = t.at("feature").get<std::vector<std::int32_t>>();
    const auto threshold = t.at("threshold").get<std::vector<double>>();
    const auto default_left = t.at("default_left").get<std::vector<std::uint8_t>>();
    const auto left = t.at("left").get<std::vector<std::int32_t>>();
    const auto right = t.at("right").get<std::vector<std::int32_t>>();
    const auto value = t.at("value").get<std::vector<double>>();
    const auto gain = t.at("gain").get<std::vector<double>>();
    const auto cover = t.at("cover").get<std::vector<double>>();
    const std::size_t n = feature.size();
    if (threshold.size() != n || default_left.size() != n || left.size() != n ||
        right.size() != n || value.size() != n || gain.size() != n || cover.size() != n ||
        n == 0) {
      throw ParseError("tree-ensemble", 0, "inconsistent node arrays");
    }
    Tree tree;
    for (std::size_t i = 0; i < n; ++i) {
      TreeNode node{feature[i], threshold[i], default_left[i] != 0, left[i], right[i],
                    value[i],   gain[i],      cover[i]};
      if (!node.is_leaf()) {
        const auto in_range = [&](std::int32_t c) {
          return c > static_cast<std::int32_t>(i) && c < static_cast<std::int32_t>(n);
        };
        if (static_cast<std::size_t>(node.feature) >= m.input_width || !in_range(node.left) ||
            !in_range(node.right)) {
          throw ParseError("tree-ensemble", 0, "malformed split node");
        }
      }
      tree.nodes.push_back(node);
    }
    m.trees.push_back(std::move(tree));
  }
  return m;
}

void TreeEnsemble::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

TreeEnsemble TreeEnsemble::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("missing model artifact " + path.string());
  return from_json(nlohmann::json::parse(in));
}

// ---------------------------------------------------------------------------
// Random forest

namespace {

double gini(double pos, double total) {
  if (total <= 0.0) return 0.0;
  const double p = pos / total;
  return 2.0 * p * (1.0 - p);
}

class ForestTreeBuilder {
 public:
  ForestTreeBuilder(const FlatRows& rows, std::span<const std::uint8_t> labels,
                    const ForestConfig& config, std::uint64_t seed)
      : rows_(rows), labels_(labels), config_(config), rng_(seed) {
    mtry_ = config.features_per_split > 0
                ? std::min<std::size_t>(static_cast<std::size_t>(config.features_per_split),
                                        rows.cols)
                : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(rows.cols))));
    mtry_ = std::max<std::size_t>(1, mtry_);
    features_.resize(rows.cols);
    std::iota(features_.begin(), features_.end(), 0);
  }

  Tree build() {
    weight_.assign(rows_.rows, 0.0);
    if (config_.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, rows_.rows - 1);
      for (std::size_t k = 0; k < rows_.rows; ++k) weight_[pick(rng_)] += 1.0;
    } else {
      std::fill(weight_.begin(), weight_.end(), 1.0);
    }
    std::vector<std::uint32_t> idx;
    for (std::size_t i = 0; i < rows_.rows; ++i) {
      if (weight_[i] > 0.0) idx.push_back(static_cast<std::uint32_t>(i));
    }
    tree_.nodes.clear();
    grow(std::move(idx), 0);
    return std::move(tree_);
  }

 private:
  std::size_t grow(std::vector<std::uint32_t> idx, int depth) {
    double wsum = 0.0, wpos = 0.0;
    for (auto i : idx) {
      wsum += weight_[i];
      wpos += labels_[i] ? weight_[i] : 0.0;
    }
    const std::size_t id = tree_.nodes.size();
    tree_.nodes.push_back(TreeNode{});
    tree_.nodes[id].value = wsum > 0.0 ? wpos / wsum : 0.0;
    tree_.nodes[id].cover = wsum;
    const auto min_leaf = static_cast<std::size_t>(config_.min_samples_leaf);
    if (depth >= config_.max_depth || wpos == 0.0 || wpos == wsum || idx.size() < 2 * min_leaf) {
      return id;
    }
    // Partial Fisher-Yates draw of the candidate features.
    for (std::size_t k = 0; k < mtry_; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, features_.size() - 1);
      std::swap(features_[k], features_[pick(rng_)]);
    }
    const double parent = wsum * gini(wpos, wsum);
    double best_gain = 0.0;
    std::int32_t best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, std::uint32_t>> col(idx.size());
    for (std::size_t k = 0; k < mtry_; ++k) {
      const std::size_t f = features_[k];
      for (std::size_t j = 0; j < idx.size(); ++j) {
        col[j] = {rows_.values[idx[j] * rows_.cols + f], idx[j]};
      }
      std::sort(col.begin(), col.end());
      double lw = 0.0, lp = 0.0;
      for (std::size_t j = 0; j + 1 < col.size(); ++j) {
        const auto r = col[j].second;
        lw += weight_[r];
        lp += labels_[r] ? weight_[r] : 0.0;
        if (col[j].first == col[j + 1].first) continue;
        if (j + 1 < min_leaf || col.size() - j - 1 < min_leaf) continue;
        const double gain = parent - lw * gini(lp, lw) - (wsum - lw) * gini(wpos - lp, wsum - lw);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<std::int32_t>(f);
          best_threshold = midpoint_threshold(col[j].first, col[j + 1].first);
        }
      }
    }
    if (best_feature < 0) return id;
    std::vector<std::uint32_t> left, right;
    for (auto i : idx) {
      (rows_.values[i * rows_.cols + static_cast<std::size_t>(best_feature)] < best_threshold
           ? left
           : right)
          .push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();
    const auto l = grow(std::move(left), depth + 1);
    const auto r = grow(std::move(right), depth + 1);
    auto& node = tree_.nodes[id];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.default_left = true;
    node.left = static_cast<std::int32_t>(l);
    node.right = static_cast<std::int32_t>(r);
    node.gain = best_gain;
    return id;
  }

  const FlatRows& rows_;
  std::span<const std::uint8_t> labels_;
  const ForestConfig& config_;
  std::mt19937_64 rng_;
  std::size_t mtry_ = 1;
  std::vector<std::size_t> features_;
  std::vector<double> weight_;
  Tree tree_;
};

}  // namespace

TreeEnsemble train_random_forest(const FlatRows& rows, std::span<const std::uint8_t> labels,
                                 const ForestConfig& config) {
  config.validate();
  check_labels(rows, labels);
  for (auto p : rows.present) {
    if (!p) throw DataError("random forest requires imputed (dense) input");
  }
  TreeEnsemble model;
  model.kind = EnsembleKind::kForest;
  model.forest_config = config;
  model.input_width = rows.cols;
  model.trees.resize(static_cast<std::size_t>(config.trees));
  parallel_for(model.trees.size(), config.threads, [&](std::size_t t) {
    ForestTreeBuilder builder(rows, labels, config, derive_seed(config.seed, t));
    model.trees[t] = builder.build();
  });
  return model;
}

// ---------------------------------------------------------------------------
// Gradient boosting

double split_gain(double gl, double hl, double gr, double hr, double lambda) {
  const double g = gl + gr, h = hl + hr;
  return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda));
}

namespace {

struct SplitCandidate {
  double gain = 0.0;
  std::int32_t feature = -1;
  double threshold = 0.0;
  bool default_left = true;
};

struct NodeStats {
  double g = 0.0;
  double h = 0.0;
  std::size_t count = 0;
};

class BoostedTreeBuilder {
 public:
  BoostedTreeBuilder(const FlatRows& rows, const BoosterConfig& config,
                     const std::vector<std::vector<std::pair<double, std::uint32_t>>>& columns)
      : rows_(rows), config_(config), columns_(columns) {}

  // Builds one tree from the current gradients; position[i] ends as the
  // leaf index of row i.
  Tree build(std::span<const double> grad, std::span<const double> hess,
             std::vector<std::int32_t>& position) {
    Tree tree;
    tree.nodes.push_back(TreeNode{});
    position.assign(rows_.rows, 0);
    std::vector<NodeStats> stats(1);
    for (std::size_t i = 0; i < rows_.rows; ++i) {
      stats[0].g += grad[i];
      stats[0].h += hess[i];
      ++stats[0].count;
    }
    std::vector<std::int32_t> frontier{0};
    for (int depth = 0; depth < config_.max_depth && !frontier.empty(); ++depth) {
      const auto best = find_splits(tree, stats, frontier, grad, hess, position);
      std::vector<std::int32_t> next;
      std::vector<std::int32_t> remap(tree.nodes.size(), -1);
      for (auto nid : frontier) {
        const auto& cand = best[static_cast<std::size_t>(nid)];
        if (cand.feature < 0 || !(cand.gain > 0.0)) continue;
        const auto left = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{});
        tree.nodes.push_back(TreeNode{});
        auto& node = tree.nodes[static_cast<std::size_t>(nid)];
        node.feature = cand.feature;
        node.threshold = cand.threshold;
        node.default_left = cand.default_left;
        node.left = left;
        node.right = left + 1;
        node.gain = cand.gain;
        next.push_back(left);
        next.push_back(left + 1);
      }
      if (next.empty()) break;
      stats.resize(tree.nodes.size());
      for (std::size_t i = 0; i < rows_.rows; ++i) {
        const auto& node = tree.nodes[static_cast<std::size_t>(position[i])];
        if (node.is_leaf()) continue;
        const auto f = static_cast<std::size_t>(node.feature);
        const bool go_left = rows_.present[i * rows_.cols + f]
                                 ? rows_.values[i * rows_.cols + f] < node.threshold
                                 : node.default_left;
        position[i] = go_left ? node.left : node.right;
        auto& s = stats[static_cast<std::size_t>(position[i])];
        s.g += grad[i];
        s.h += hess[i];
        ++s.count;
      }
      frontier = std::move(next);
    }
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
      auto& node = tree.nodes[n];
      node.cover = stats[n].h;
      if (node.is_leaf()) {
        node.value = -stats[n].g / (stats[n].h + config_.lambda) * config_.learning_rate;
      }
    }
    return tree;
  }

 private:
  std::vector<SplitCandidate> find_splits(const Tree& tree, const std::vector<NodeStats>& stats,
                                          const std::vector<std::int32_t>& frontier,
                                          std::span<const double> grad,
                                          std::span<const double> hess,
                                          const std::vector<std::int32_t>& position) const {
    const std::size_t n_nodes = tree.nodes.size();
    std::vector<SplitCandidate> best(n_nodes);
    std::vector<char> active(n_nodes, 0);
    for (auto nid : frontier) active[static_cast<std::size_t>(nid)] = 1;
    const double lambda = config_.lambda;
    const double min_h = config_.min_child_hessian;

    std::vector<NodeStats> observed(n_nodes);
    std::vector<NodeStats> acc(n_nodes);
    std::vector<double> last(n_nodes);
    std::vector<char> has_last(n_nodes);
    for (std::size_t f = 0; f < columns_.size(); ++f) {
      const auto& col = columns_[f];
      for (auto nid : frontier) observed[static_cast<std::size_t>(nid)] = NodeStats{};
      for (const auto& [v, r] : col) {
        const auto nid = static_cast<std::size_t>(position[r]);
        if (!active[nid]) continue;
        observed[nid].g += grad[r];
        observed[nid].h += hess[r];
        ++observed[nid].count;
      }
      for (auto nid : frontier) {
        acc[static_cast<std::size_t>(nid)] = NodeStats{};
        has_last[static_cast<std::size_t>(nid)] = 0;
      }
      for (const auto& [v, r] : col) {
        const auto nid = static_cast<std::size_t>(position[r]);
        if (!active[nid]) continue;
        auto& a = acc[nid];
        if (has_last[nid] && v != last[nid]) {
          const auto& node = stats[nid];
          const auto& obs = observed[nid];
          const bool any_missing = obs.count < node.count;
          const double gm = any_missing ? node.g - obs.g : 0.0;
          const double hm = any_missing ? node.h - obs.h : 0.0;
          const double glo = a.g, hlo = a.h;
          const double gro = obs.g - a.g, hro = obs.h - a.h;
          auto score = [&](double gl, double hl, double gr, double hr) {
            if (hl < min_h || hr < min_h) return -std::numeric_limits<double>::infinity();
            return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) -
                          node.g * node.g / (node.h + lambda));
          };
          const double gain_left = score(glo + gm, hlo + hm, gro, hro);
          const double gain_right = score(glo, hlo, gro + gm, hro + hm);
          const bool left = gain_left >= gain_right;
          const double gain = left ? gain_left : gain_right;
          if (gain > best[nid].gain) {
            best[nid] = SplitCandidate{gain, static_cast<std::int32_t>(f),
                                       midpoint_threshold(last[nid], v), left};
          }
        }
        a.g += grad[r];
        a.h += hess[r];
        ++a.count;
        last[nid] = v;
        has_last[nid] = 1;
      }
    }
    return best;
  }

  const FlatRows& rows_;
  const BoosterConfig& config_;
  const std::vector<std::vector<std::pair<double, std::uint32_t>>>& columns_;
};

}  // namespace

TreeEnsemble train_gbdt(const FlatRows& rows, std::span<const std::uint8_t> labels,
                        const BoosterConfig& config, BoosterTrace* trace) {
  config.validate();
  check_labels(rows, labels);
  const std::size_t n = rows.rows;
  TreeEnsemble model;
  model.kind = EnsembleKind::kBooster;
  model.booster_config = config;
  model.input_width = rows.cols;

  double positives = 0.0;
  for (auto y : labels) positives += y;
  const double mean = positives / static_cast<double>(n);
  std::vector<double> margin(n);
  if (positives == 0.0 || positives == static_cast<double>(n)) {
    // A single-class target leaves nothing to learn beyond the prior.
    model.base_score = positives == 0.0 ? -kLabelLogitClamp : kLabelLogitClamp;
    std::fill(margin.begin(), margin.end(), model.base_score);
    Tree leaf;
    leaf.nodes.push_back(TreeNode{});
    leaf.nodes[0].cover = static_cast<double>(n);
    model.trees.assign(static_cast<std::size_t>(config.trees), leaf);
    if (trace) trace->train_logloss.assign(model.trees.size() + 1, logloss(margin, labels));
    return model;
  }
  model.base_score = std::log(mean / (1.0 - mean));
  std::fill(margin.begin(), margin.end(), model.base_score);
  if (trace) trace->train_logloss = {logloss(margin, labels)};

  std::vector<std::vector<std::pair<double, std::uint32_t>>> columns(rows.cols);
  for (std::size_t f = 0; f < rows.cols; ++f) {
    auto& col = columns[f];
    for (std::size_t i = 0; i < n; ++i) {
      if (rows.present[i * rows.cols + f]) {
        col.emplace_back(rows.values[i * rows.cols + f], static_cast<std::uint32_t>(i));
      }
    }
    std::sort(col.begin(), col.end());
  }

  BoostedTreeBuilder builder(rows, config, columns);
  std::vector<double> grad(n), hess(n);
  std::vector<std::int32_t> position;
  model.trees.reserve(static_cast<std::size_t>(config.trees));
  for (int round = 0; round < config.trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = p - labels[i];
      hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
    Tree tree = builder.build(grad, hess, position);
    for (std::size_t i = 0; i < n; ++i) {
      margin[i] += tree.nodes[static_cast<std::size_t>(position[i])].value;
    }
    model.trees.push_back(std::move(tree));
    if (trace) trace->train_logloss.push_back(logloss(margin, labels));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Grid search

GridResult select_tree_count(const TreeEnsemble& full, const FlatRows& validation,
                             std::span<const std::uint8_t> validation_labels,
                             std::span<const int> grid, const ScoreMetric& metric) {
  if (grid.empty()) throw ConfigError("tree grid is empty");
  std::vector<int> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.front() < 1) throw ConfigError("tree grid values must be >= 1");
  if (static_cast<std::size_t>(sorted.back()) > full.trees.size()) {
    throw ConfigError("tree grid exceeds the trained tree count");
  }
  GridResult result;
  int best_trees = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int count : sorted) {
    const auto scores = full.predict_proba(validation, static_cast<std::size_t>(count));
    const double s = metric(scores, validation_labels);
    result.points.push_back(GridPoint{count, s});
    if (s > best_score) {
      best_score = s;
      best_trees = count;
    }
  }
  result.best = full.prefix(static_cast<std::size_t>(best_trees));
  return result;
}

GridResult grid_search_forest(const FlatRows& train, std::span<const std::uint8_t> train_labels,
                              const FlatRows& validation,
                              std::span<const std::uint8_t> validation_labels,
                              std::span<const int> grid, ForestConfig config,
                              const ScoreMetric& metric) {
  if (grid.empty()) throw ConfigError("tree grid is empty");
  config.trees = *std::max_element(grid.begin(), grid.end());
  const auto full = train_random_forest(train, train_labels, config);
  return select_tree_count(full, validation, validation_labels, grid, metric);
}

GridResult grid_search_gbdt(const FlatRows& train, std::span<const std::uint8_t> train_labels,
                            const FlatRows& validation,
                            std::span<const std::uint8_t> validation_labels,
                            std::span<const int> grid, BoosterConfig config,
                            const ScoreMetric& metric) {
  if (grid.empty()) throw ConfigError("tree grid is empty");
  config.trees = *std::max_element(grid.begin(), grid.end());
  const auto full = train_gbdt(train, train_labels, config);
  return select_tree_count(full, validation, validation_labels, grid, metric);
}

std::vector<int> tree_grid(int first, int last, int step) {
  if (step < 1 || first < 1 || last < first) throw ConfigError("invalid tree grid range");
  std::vector<int> out;
  for (int v = first; v <= last; v += step) out.push_back(v);
  return out;
}

std::vector<int> full_tree_grid() { return tree_grid(100, 3000, 100); }

}  // namespace ilos
