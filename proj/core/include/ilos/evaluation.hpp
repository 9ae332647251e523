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

// Precision/recall curves, the truncated PR-AUC score, sample-weighted
// averaging and subset selection (network, facility, precursor-only).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ilos/dataset.hpp"
#include "ilos/ingest.hpp"

namespace ilos {

inline constexpr double kDefaultRecallCap = 0.1;

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
};

// One point per distinct score, descending; samples sharing a score enter
// together.
struct PrCurve {
  std::vector<PrPoint> points;
  std::size_t positives = 0;
  std::size_t total = 0;
};

// Throws DataError when there are no positives or the spans differ in size.
PrCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Area under the step function precision(recall) on [0, recall_cap]. Each
// recall increment r_{k-1} -> r_k is weighted with the precision of the
// point reaching r_k; the segment crossing the cap counts pro rata.
double pr_auc_truncated(const PrCurve& curve, double recall_cap = kDefaultRecallCap);

// Validation metric for model selection: 0 when no positive is present.
double truncated_score(std::span<const double> scores, std::span<const std::uint8_t> labels,
                       double recall_cap = kDefaultRecallCap);

// sum(n_i * D_i) / sum(n_i). Throws DataError on empty input, mismatched
// lengths or a zero total.
double weighted_average(std::span<const double> scores, std::span<const std::size_t> sizes);

struct FacilityFilter {
  std::string name;
  std::vector<std::string> include;  // empty: every facility
  std::vector<std::string> exclude;

  bool matches(const WindowSample& sample, const FeatureSchema& schema) const;
  nlohmann::json to_json() const;
  static FacilityFilter from_json(const nlohmann::json& j);
  friend bool operator==(const FacilityFilter&, const FacilityFilter&) = default;
};

struct OutageEvent {
  std::string network_id;
  std::string port_id;
  Day day;
  bool has_precursor = true;
  friend bool operator==(const OutageEvent&, const OutageEvent&) = default;
};

inline constexpr std::string_view kOutageLogHeader = "network_id,port_id,outage_date,has_precursor";

void write_outage_log(const std::filesystem::path& path, std::span<const OutageEvent> events);
std::vector<OutageEvent> read_outage_log(const std::filesystem::path& path);

// Drops positives whose port has an outage without precursor inside the
// window's future days. Ports are matched on (network_id, port_id); a
// namespaced port id "net/port" is matched on its trailing part.
std::vector<std::size_t> precursor_only(std::span<const WindowSample> samples,
                                        std::span<const std::size_t> idx,
                                        std::span<const OutageEvent> log);

struct SubsetScore {
  std::string name;
  std::size_t samples = 0;
  std::size_t positives = 0;
  double score = 0.0;
  PrCurve curve;
  nlohmann::json to_json() const;  // without the curve
};

// Scores the listed samples. Throws DataError when the subset is empty or
// has no positive.
SubsetScore score_subset(std::string name, std::span<const double> scores,
                         std::span<const WindowSample> samples, std::span<const std::size_t> idx,
                         double recall_cap = kDefaultRecallCap);

// idx restricted to samples accepted by the filter, keeping order.
std::vector<std::size_t> filter_indices(std::span<const WindowSample> samples,
                                        std::span<const std::size_t> idx,
                                        const FeatureSchema& schema, const FacilityFilter& filter);

void write_curve_csv(const std::filesystem::path& path, const PrCurve& curve);

struct NamedCurve {
  std::string name;
  PrCurve curve;
};

// Precision against log10 recall, one polyline per curve.
void write_pr_svg(const std::filesystem::path& path, std::span<const NamedCurve> curves,
                  const std::string& title);

}  // namespace ilos
