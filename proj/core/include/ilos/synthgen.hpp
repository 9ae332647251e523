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

// Seeded synthetic PM telemetry: healthy ports with noisy gauges and
// zero-suppressed counters, gradually degrading ports that end in an
// outage, outages without precursor, and random collection gaps.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ilos/dataset.hpp"
#include "ilos/evaluation.hpp"
#include "ilos/ingest.hpp"

namespace ilos {

struct GenConfig {
  std::uint64_t seed = 2026;
  std::vector<int> ports = {60, 100, 140};  // one entry per network
  int days = 120;
  std::string start_date = "2021-01-04";
  double line_port_fraction = 0.5;  // OTM4+OCH line ports; the rest are ETH10G+ODU2 clients
  int extra_pms = 6;                // network-specific PM vocabulary size
  double vocabulary_overlap = 0.5;  // share of extra_pms common to all networks
  double missing_rate = 0.75;       // numeric cells absent over kept input days
  double positive_rate = 0.10;      // positive windows after filtering
  double unpredictable_fraction = 0.25;
  // Degradation episodes that recover without an outage, per precursor outage.
  double false_alarm_ratio = 0.15;
  int ramp_min = 10;
  int ramp_max = 20;
  bool zero_suppression = true;

  int networks() const { return static_cast<int>(ports.size()); }
  static std::string network_id(std::size_t k) { return "net" + std::to_string(k + 1); }
  // Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static GenConfig from_json(const nlohmann::json& j);
  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

struct NetworkPlan {
  std::string network_id;
  int ports = 0;
  int line_ports = 0;
  int events = 0;
  int precursor_events = 0;
  int degrading_ports = 0;
  int false_alarms = 0;
  double structural_missing = 0.0;  // absent share before collection gaps
  double gap_probability = 0.0;     // per port-day drop probability
  std::vector<std::string> vocabulary;
  nlohmann::json to_json() const;
};

struct GenResult {
  std::vector<std::filesystem::path> pm_files;  // one per network, in network order
  std::filesystem::path outage_log;
  std::vector<OutageEvent> outages;
  std::vector<NetworkPlan> plans;
};

// Writes <out_dir>/<network>.csv and <out_dir>/outages.csv. Throws DataError
// when the missing-rate target or the event schedule is infeasible.
GenResult generate(const GenConfig& config, const std::filesystem::path& out_dir,
                   int threads = 1);

// Same records without touching the filesystem.
struct GeneratedNetwork {
  NetworkPlan plan;
  std::vector<PmRecord> records;
};
std::vector<GeneratedNetwork> generate_records(const GenConfig& config,
                                               std::vector<OutageEvent>* outages = nullptr,
                                               int threads = 1);

struct DatasetStats {
  std::string name;
  int days = 0;
  std::size_t ports = 0;
  std::size_t samples = 0;
  std::size_t features = 0;  // numeric PM columns
  std::size_t facilities = 0;
  double missing_rate = 0.0;
  double positive_rate = 0.0;
  nlohmann::json to_json() const;
};

DatasetStats dataset_stats(const WindowDataset& ds, std::string name);

}  // namespace ilos
