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

// Raw PM telemetry ingest: long-format CSV parsing, feature schema
// construction and the port-level max-merge into gap-free daily series.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ilos/date.hpp"

namespace ilos {

inline constexpr std::string_view kUasName = "UAS";
inline constexpr std::string_view kHccsName = "HCCS";
inline constexpr std::string_view kPmCsvHeader =
    "network_id,port_id,facility_type,date,pm_name,pm_value";

struct PmRecord {
  std::string network_id;
  std::string port_id;
  std::string facility_type;
  Day day;
  std::string pm_name;
  double pm_value = 0.0;

  friend bool operator==(const PmRecord&, const PmRecord&) = default;
};

// Column layout shared by every sample of a dataset: numeric PM columns
// first, then one facility one-hot column per facility type.
struct FeatureSchema {
  std::vector<std::string> numeric;
  std::vector<std::string> facilities;
  std::vector<std::string> protocol_indicators;
  std::string uas_name{kUasName};
  std::string hccs_name{kHccsName};

  std::size_t numeric_count() const { return numeric.size(); }
  std::size_t onehot_count() const { return facilities.size(); }
  std::size_t width() const { return numeric.size() + facilities.size(); }

  std::optional<std::size_t> numeric_index(std::string_view name) const;
  std::optional<std::size_t> facility_index(std::string_view name) const;
  std::size_t uas_index() const;
  std::size_t hccs_index() const;
  std::vector<std::size_t> indicator_indices() const;

  // Throws DataError when an invariant does not hold: duplicate names,
  // UAS/HCCS missing from the numeric list, or an indicator outside it.
  void validate() const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

// Streams records in file order. When schema_hint carries a non-empty
// facility list, records naming any other facility are rejected.
void for_each_pm_record(const std::filesystem::path& path, const FeatureSchema* schema_hint,
                        const std::function<void(PmRecord&&)>& sink);
std::vector<PmRecord> parse_pm_csv(const std::filesystem::path& path,
                                   const FeatureSchema* schema_hint = nullptr);
// Parses a single data line; line_no is used for error reporting only.
PmRecord parse_pm_line(std::string_view line, const std::string& source, std::size_t line_no,
                       const FeatureSchema* schema_hint = nullptr);

void write_pm_csv(const std::filesystem::path& path, std::span<const PmRecord> records);

// Numeric columns are the sorted union of observed PM names plus UAS and
// HCCS; one-hot columns are the sorted distinct facilities. Protocol
// indicators are kept only when observed.
FeatureSchema build_schema(std::span<const PmRecord> records,
                           std::span<const std::string> protocol_indicators);

// One port, one row per calendar day from the first to the last observed day.
struct PortSeries {
  std::string network_id;
  std::string port_id;
  Day start;
  std::size_t numeric_width = 0;
  std::vector<double> values;          // days x numeric_width, row-major
  std::vector<std::uint8_t> present;   // aligned with values
  std::vector<std::uint8_t> onehot;    // one entry per facility column

  std::size_t days() const { return numeric_width ? values.size() / numeric_width : 0; }
  bool is_present(std::size_t day, std::size_t col) const {
    return present[day * numeric_width + col] != 0;
  }
  double value(std::size_t day, std::size_t col) const { return values[day * numeric_width + col]; }
  std::optional<double> get(std::size_t day, std::size_t col) const {
    if (!is_present(day, col)) return std::nullopt;
    return value(day, col);
  }
  Day day_at(std::size_t i) const { return start + static_cast<std::int32_t>(i); }

  friend bool operator==(const PortSeries&, const PortSeries&) = default;
};

// Max-merge per (network, port, day). Output is sorted by (network, port).
// Throws DataError if a record names a PM or facility absent from schema.
std::vector<PortSeries> merge_to_port_level(std::span<const PmRecord> records,
                                            const FeatureSchema& schema);

// Inverse view used for idempotence checks: one record per present value
// and per facility flagged in the port's one-hot vector.
std::vector<PmRecord> series_to_records(const PortSeries& series, const FeatureSchema& schema);

struct SeriesSet {
  FeatureSchema schema;
  std::vector<PortSeries> series;
};

void write_series(const std::filesystem::path& path, const SeriesSet& set);
SeriesSet read_series(const std::filesystem::path& path);

}  // namespace ilos
