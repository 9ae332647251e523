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

#include "ilos/transfer.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "ilos/errors.hpp"

namespace ilos {

namespace {

FeatureSchema union_schema(std::span<const WindowDataset> datasets) {
  std::set<std::string> numeric, facilities, indicators;
  for (const auto& ds : datasets) {
    numeric.insert(ds.schema.numeric.begin(), ds.schema.numeric.end());
    facilities.insert(ds.schema.facilities.begin(), ds.schema.facilities.end());
    indicators.insert(ds.schema.protocol_indicators.begin(), ds.schema.protocol_indicators.end());
  }
  FeatureSchema s;
  s.uas_name = datasets[0].schema.uas_name;
  s.hccs_name = datasets[0].schema.hccs_name;
  s.numeric.assign(numeric.begin(), numeric.end());
  s.facilities.assign(facilities.begin(), facilities.end());
  s.protocol_indicators.assign(indicators.begin(), indicators.end());
  s.validate();
  return s;
}

}  // namespace

MegaDataset build_mega_dataset(std::span<const WindowDataset> datasets) {
  if (datasets.size() < 2) throw DataError("mega dataset needs at least two source datasets");
  std::set<std::string> seen;
  for (const auto& ds : datasets) {
    for (const auto& n : ds.networks) {
      if (!seen.insert(n).second) throw DataError("duplicate network id '" + n + "' across datasets");
    }
    if (ds.schema.uas_name != datasets[0].schema.uas_name ||
        ds.schema.hccs_name != datasets[0].schema.hccs_name) {
      throw DataError("source datasets disagree on the label-source PM names");
    }
  }
  MegaDataset mega;
  auto& out = mega.data;
  out.schema = union_schema(datasets);
  const std::size_t width = out.schema.width();
  const std::size_t num = out.schema.numeric_count();

  struct Tagged {
    Day day;
    std::size_t source;
    std::size_t index;
  };
  std::vector<Tagged> order;
  for (std::size_t s = 0; s < datasets.size(); ++s) {
    const auto& ds = datasets[s];
    mega.sources.push_back(ds.schema);
    mega.source_networks.push_back(ds.networks.empty() ? std::string{} : ds.networks.front());
    std::vector<std::size_t> map;
    for (const auto& n : ds.schema.numeric) map.push_back(*out.schema.numeric_index(n));
    for (const auto& f : ds.schema.facilities) map.push_back(num + *out.schema.facility_index(f));
    mega.column_map.push_back(std::move(map));
    for (const auto& n : ds.networks) out.networks.push_back(n);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      order.push_back(Tagged{ds.samples[i].present_day, s, i});
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const Tagged& a, const Tagged& b) { return a.day < b.day; });

  out.samples.reserve(order.size());
  out.split.reserve(order.size());
  for (const auto& o : order) {
    const auto& src = datasets[o.source].samples[o.index];
    const auto& map = mega.column_map[o.source];
    WindowSample w;
    w.network_id = src.network_id;
    w.port_id = src.network_id + "/" + src.port_id;
    w.present_day = src.present_day;
    w.width = width;
    w.x.assign(kInputDays * width, 0.0);
    w.observed.assign(kInputDays * width, 0);
    for (std::size_t t = 0; t < kInputDays; ++t) {
      for (std::size_t d = num; d < width; ++d) w.observed[t * width + d] = 1;
      for (std::size_t d = 0; d < src.width; ++d) {
        w.x[t * width + map[d]] = src.at(t, d);
        w.observed[t * width + map[d]] = src.observed[t * src.width + d];
      }
    }
    w.label = src.label;
    w.future = src.future;
    out.samples.push_back(std::move(w));
    out.split.push_back(datasets[o.source].split[o.index]);
  }
  out.validation_start = datasets[0].validation_start;
  out.test_start = datasets[0].test_start;
  for (const auto& ds : datasets) {
    out.validation_start = std::min(out.validation_start, ds.validation_start);
    out.test_start = std::min(out.test_start, ds.test_start);
  }
  std::vector<const WindowSample*> train;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    if (out.split[i] == Split::kTrain) train.push_back(&out.samples[i]);
  }
  out.norm = zscore_fit(train, out.schema);
  return mega;
}

WindowSample project_to_source(const WindowSample& sample, const MegaDataset& mega,
                               std::size_t source) {
  const auto& schema = mega.sources.at(source);
  const auto& map = mega.column_map.at(source);
  WindowSample w;
  w.network_id = sample.network_id;
  const std::string prefix = sample.network_id + "/";
  w.port_id = sample.port_id.starts_with(prefix) ? sample.port_id.substr(prefix.size())
                                                 : sample.port_id;
  w.present_day = sample.present_day;
  w.width = schema.width();
  w.x.resize(kInputDays * w.width);
  w.observed.resize(kInputDays * w.width);
  for (std::size_t t = 0; t < kInputDays; ++t) {
    for (std::size_t d = 0; d < w.width; ++d) {
      w.x[t * w.width + d] = sample.at(t, map[d]);
      w.observed[t * w.width + d] = sample.observed[t * sample.width + map[d]];
    }
  }
  w.label = sample.label;
  w.future = sample.future;
  return w;
}

nlohmann::json MegaDataset::manifest() const {
  nlohmann::json per_network = nlohmann::json::object();
  for (const auto& n : data.networks) {
    per_network[n] = {{"train", data.indices(Split::kTrain, n).size()},
                      {"validation", data.indices(Split::kValidation, n).size()},
                      {"test", data.indices(Split::kTest, n).size()}};
  }
  nlohmann::json sources_json = nlohmann::json::array();
  for (std::size_t s = 0; s < sources.size(); ++s) {
    sources_json.push_back({{"network", source_networks[s]},
                            {"numeric_features", sources[s].numeric_count()},
                            {"facilities", sources[s].onehot_count()}});
  }
  return {{"sources", sources_json},
          {"schema", data.schema.to_json()},
          {"per_network", per_network},
          {"samples", data.samples.size()}};
}

std::string_view strategy_name(FineTuneStrategy s) {
  return s == FineTuneStrategy::kClassifierOnly ? "classifier" : "entirety";
}

FineTuneStrategy parse_strategy(std::string_view name) {
  if (name == "classifier") return FineTuneStrategy::kClassifierOnly;
  if (name == "entirety") return FineTuneStrategy::kEntirety;
  throw ConfigError("transfer.strategies: unknown strategy '" + std::string(name) + "'");
}

TrainSchedule finetune_schedule(TrainSchedule base, FineTuneStrategy strategy) {
  base.learning_rate = kFineTuneLearningRate;
  base.phase1_max_epochs = 0;
  base.trainable = TrainSchedule::make_all_trainable();
  if (strategy == FineTuneStrategy::kClassifierOnly) {
    for (std::size_t b = 0; b < kRitsBlockCount; ++b) base.trainable[b] = is_classifier_block(b);
  }
  return base;
}

BritsModel finetune(const BritsModel& pretrained, const SequenceSet& train,
                    const SequenceSet& validation, FineTuneStrategy strategy,
                    const TrainSchedule& base, TrainHistory* history) {
  if (train.samples.empty()) throw DataError("fine-tuning subset is empty");
  BritsModel model = pretrained;
  auto h = train_brits(model, train, validation, finetune_schedule(base, strategy));
  if (history) *history = std::move(h);
  return model;
}

}  // namespace ilos
