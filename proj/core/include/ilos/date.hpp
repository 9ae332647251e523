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

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ilos {

// A calendar day, stored as days since 1970-01-01.
struct Day {
  std::int32_t serial = 0;

  friend auto operator<=>(const Day&, const Day&) = default;
  Day operator+(std::int32_t n) const { return Day{serial + n}; }
  std::int32_t operator-(const Day& other) const { return serial - other.serial; }
};

// Strict ISO-8601 calendar date "YYYY-MM-DD". Returns nullopt on any
// malformed or out-of-range input (e.g. 2021-02-29).
std::optional<Day> parse_iso_date(std::string_view text);
std::string to_iso_date(Day day);

}  // namespace ilos
