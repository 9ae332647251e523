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

// Stage orchestration over a workspace directory: synth, ingest, build,
// train, pretrain, finetune, evaluate and report. Every stage appends a
// line to run_log.jsonl with the content hashes of what it read and wrote.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ilos/evaluation.hpp"
#include "ilos/rits.hpp"
#include "ilos/synthgen.hpp"
#include "ilos/trees.hpp"

namespace ilos {

inline constexpr std::array<std::string_view, 8> kStages = {
    "synth", "ingest", "build", "train", "pretrain", "finetune", "evaluate", "report"};

inline constexpr std::array<std::string_view, 4> kModelKinds = {"rf_zero", "rf_median", "gbdt",
                                                                "brits"};

struct InputSpec {
  std::string network;
  std::filesystem::path path;
  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

struct BritsSettings {
  int hidden = kDefaultHiddenSize;
  int batch_size = 1024;
  double learning_rate = 1e-3;
  int phase1_max_epochs = 20;
  int phase2_max_epochs = 20;
  int patience = 5;
  double min_delta = 1e-4;
  long max_steps = -1;

  TrainSchedule schedule(std::uint64_t seed) const;
  friend bool operator==(const BritsSettings&, const BritsSettings&) = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path workspace = "workspace";
  int threads = 1;
  std::vector<InputSpec> inputs;          // empty with synth: generated files
  std::filesystem::path outage_log;       // optional ground truth
  std::optional<GenConfig> synth;
  std::vector<std::string> protocol_indicators = {"PROTO_ETH_UP", "PROTO_OTN_UP"};
  std::vector<std::string> models = {"gbdt", "brits"};
  std::vector<std::string> train_networks;  // single-network training scope; empty: all
  int grid_first = 100;
  int grid_last = 500;
  int grid_step = 100;
  ForestConfig forest;
  BoosterConfig booster;
  BritsSettings brits;
  std::vector<std::string> finetune_strategies = {"classifier", "entirety"};
  double recall_cap = kDefaultRecallCap;
  std::vector<FacilityFilter> facility_filters;
  bool plots = true;

  // Throws ConfigError with the offending field path.
  void validate() const;
  nlohmann::json to_json() const;
  // Relative paths are resolved against base_dir. A missing seed is a
  // config error.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  // JSON with // and /* */ comments.
  static RunConfig load(const std::filesystem::path& path);
  // ILOS_WORKSPACE and ILOS_THREADS replace the workspace and thread count.
  void apply_environment();
  std::vector<int> grid() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

class Pipeline {
 public:
  explicit Pipeline(RunConfig config);

  // Throws ConfigError for an unknown stage name.
  void run(std::string_view stage);
  void run_all();

  void synth();
  void ingest();
  void build();
  void train();
  void pretrain();
  void finetune();
  void evaluate();
  void report();

  const RunConfig& config() const { return config_; }
  std::filesystem::path workspace() const { return config_.workspace; }
  std::filesystem::path report_path() const;

 private:
  struct StageLog;
  void run_stage(std::string_view name, const std::function<void(StageLog&)>& body);
  std::vector<InputSpec> effective_inputs() const;
  std::vector<std::string> networks() const;
  std::filesystem::path require(const std::filesystem::path& p, std::string_view stage) const;

  RunConfig config_;
};

}  // namespace ilos
