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

// Cross-network knowledge sharing: the feature-union mega dataset,
// projection back to a source layout, and BRITS fine-tuning strategies.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ilos/dataset.hpp"
#include "ilos/rits.hpp"

namespace ilos {

inline constexpr double kPretrainLearningRate = 1e-3;
inline constexpr double kFineTuneLearningRate = 5e-4;

struct MegaDataset {
  WindowDataset data;                           // union schema, refit normalisation
  std::vector<FeatureSchema> sources;           // in input order
  std::vector<std::vector<std::size_t>> column_map;  // source column -> union column
  std::vector<std::string> source_networks;     // network id of each source

  // Source datasets, union schema and per-network split counts.
  nlohmann::json manifest() const;
};

// Needs at least two datasets with disjoint network ids. Port ids become
// "<network>/<port>" so ports never collide across networks.
MegaDataset build_mega_dataset(std::span<const WindowDataset> datasets);

// Reverses the union mapping for a sample of the given source.
WindowSample project_to_source(const WindowSample& sample, const MegaDataset& mega,
                               std::size_t source);

enum class FineTuneStrategy { kClassifierOnly, kEntirety };
std::string_view strategy_name(FineTuneStrategy s);
FineTuneStrategy parse_strategy(std::string_view name);

// Fine-tuning runs the full objective only, at the halved learning rate.
// Classifier-only marks every block but the classifier as frozen.
TrainSchedule finetune_schedule(TrainSchedule base, FineTuneStrategy strategy);

// Throws DataError when the network subset is empty.
BritsModel finetune(const BritsModel& pretrained, const SequenceSet& train,
                    const SequenceSet& validation, FineTuneStrategy strategy,
                    const TrainSchedule& base, TrainHistory* history = nullptr);

}  // namespace ilos
