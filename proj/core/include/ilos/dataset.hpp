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

// Windowed, labelled samples: 7 input days plus 7 future days per window,
// the defect filter, the chronological split and z-score normalisation.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ilos/date.hpp"
#include "ilos/ingest.hpp"

namespace ilos {

inline constexpr std::size_t kInputDays = 7;
inline constexpr std::size_t kFutureDays = 7;
inline constexpr std::size_t kWindowDays = kInputDays + kFutureDays;

// Label-source counters of one future day plus how many numeric cells of
// that day were observed. Audit only: never part of a model input.
struct FutureDay {
  std::optional<double> uas;
  std::optional<double> hccs;
  std::uint32_t observed_count = 0;

  friend bool operator==(const FutureDay&, const FutureDay&) = default;
};

// What a model is allowed to see: the 7 x F input block and its flags.
struct ModelInput {
  std::span<const double> x;
  std::span<const std::uint8_t> observed;
  std::size_t width = 0;
};

struct WindowSample {
  std::string network_id;
  std::string port_id;
  Day present_day;
  std::size_t width = 0;              // numeric + one-hot columns
  std::vector<double> x;              // kInputDays x width, row-major
  std::vector<std::uint8_t> observed; // aligned with x
  std::uint8_t label = 0;
  std::array<FutureDay, kFutureDays> future{};

  bool is_observed(std::size_t t, std::size_t d) const { return observed[t * width + d] != 0; }
  double at(std::size_t t, std::size_t d) const { return x[t * width + d]; }
  ModelInput input() const { return ModelInput{x, observed, width}; }

  friend bool operator==(const WindowSample&, const WindowSample&) = default;
};

// Every 14-day window (stride 1) of a gap-free series; the present day is
// the 7th row. Labels are left at 0 and future metadata is filled.
std::vector<WindowSample> slide_windows(const PortSeries& series, const FeatureSchema& schema);

// 1 iff any future day has UAS > 0 or HCCS > 0; absent counts as no LOS.
std::uint8_t window_label(const WindowSample& sample);
void label_window(WindowSample& sample);

enum class DropReason : std::uint8_t { kNone, kNoTraffic, kLosToday, kEmptyPast, kEmptyFuture };
std::string_view drop_reason_name(DropReason r);

struct FilterDecision {
  bool keep = true;
  DropReason reason = DropReason::kNone;
};

// Reasons are tested in the order no_traffic, los_today, empty_past,
// empty_future and the first hit is reported.
FilterDecision filter_defective(const WindowSample& sample, const FeatureSchema& schema);

enum class Split : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };
std::string_view split_name(Split s);

struct SplitAssignment {
  std::vector<Split> tags;  // aligned with the input order
  Day validation_start;     // first present_day of the validation split
  Day test_start;           // first present_day of the test split
};

// Boundaries sit on whole days, chosen so cumulative counts are closest to
// 70% and 80% of the samples. Throws DataError for fewer than 10 samples or
// when a split would be empty.
SplitAssignment chronological_split(std::span<const WindowSample> samples);
SplitAssignment chronological_split(std::span<const Day> present_days);

// Mergeable running moments (Chan et al. parallel update).
struct MomentAccumulator {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double v);
  void merge(const MomentAccumulator& other);
  double stddev() const { return count > 0 ? std::sqrt(m2 / count) : 0.0; }
};

struct NormStats {
  std::vector<double> mean;           // one per column (0 for exempt)
  std::vector<double> stddev;         // population std; 0 for constant columns
  std::vector<std::uint8_t> exempt;   // one-hot columns pass through

  std::size_t width() const { return mean.size(); }
  nlohmann::json to_json() const;
  static NormStats from_json(const nlohmann::json& j);
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

NormStats zscore_fit(std::span<const WindowSample* const> train, const FeatureSchema& schema);
void zscore_apply(WindowSample& sample, const NormStats& stats);
double zscore_value(double x, double mean, double stddev);

struct AuditRow {
  std::string network_id;
  std::string port_id;
  Day present_day;
  std::uint8_t label = 0;
  bool kept = false;
  DropReason reason = DropReason::kNone;
};

// A windowed, labelled, filtered and split dataset. Samples hold raw
// (unnormalised) values; norm holds the train-split statistics.
struct WindowDataset {
  FeatureSchema schema;
  std::vector<WindowSample> samples;
  std::vector<Split> split;
  Day validation_start;
  Day test_start;
  NormStats norm;
  std::vector<std::string> networks;

  std::vector<std::size_t> indices(Split s) const;
  std::vector<std::size_t> indices(Split s, std::string_view network) const;
};

struct BuildResult {
  WindowDataset dataset;
  std::vector<AuditRow> audit;
};

BuildResult build_window_dataset(const SeriesSet& set);

void write_audit_csv(const std::filesystem::path& path, std::span<const AuditRow> rows);
void write_windows(const std::filesystem::path& path, const WindowDataset& ds,
                   const nlohmann::json& extra_manifest = nlohmann::json::object());
WindowDataset read_windows(const std::filesystem::path& path);

// Fraction of absent numeric cells over the 7 input days of the samples.
double numeric_missing_rate(const WindowDataset& ds);
double positive_rate(const WindowDataset& ds);

}  // namespace ilos
