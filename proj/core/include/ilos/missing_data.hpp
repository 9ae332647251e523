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

// Missing-value bookkeeping: observation masks, days-since-last-observation
// gaps, zero/median imputation and the 7F flattening used by tree models.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ilos/dataset.hpp"

namespace ilos {

// A kInputDays x cols grid, row-major.
template <class T>
struct DayGrid {
  std::size_t cols = 0;
  std::vector<T> data;

  DayGrid() = default;
  explicit DayGrid(std::size_t c, T fill = T{}) : cols(c), data(kInputDays * c, fill) {}

  T& at(std::size_t t, std::size_t d) { return data[t * cols + d]; }
  const T& at(std::size_t t, std::size_t d) const { return data[t * cols + d]; }
  std::size_t rows() const { return kInputDays; }

  friend bool operator==(const DayGrid&, const DayGrid&) = default;
};

using MaskMatrix = DayGrid<std::uint8_t>;
using DeltaMatrix = DayGrid<std::int32_t>;

MaskMatrix compute_mask(const ModelInput& input);
MaskMatrix compute_mask(const WindowSample& sample);

// delta[0] = 0; delta[t] = 1 if mask[t-1] else 1 + delta[t-1].
DeltaMatrix compute_time_gaps(const MaskMatrix& mask);

// Same recurrence applied to the time-reversed mask, returned in reversed
// order (row 0 = last input day).
DeltaMatrix compute_time_gaps_reversed(const MaskMatrix& mask);

DayGrid<double> impute_zero(const ModelInput& input);

struct Medians {
  std::vector<double> value;           // one per column
  std::vector<std::uint8_t> fallback;  // 1 where the column was never observed
};

// Per-column medians over observed entries of the given (training) samples.
// An even count takes the mean of the two central order statistics.
Medians compute_medians(std::span<const WindowSample* const> train, std::size_t width);
DayGrid<double> impute_median(const ModelInput& input, const Medians& medians);

// Flattened rows: cell (t, d) of a window sits at column t * width + d.
// present == 0 marks an absent cell whose value must not be read.
struct FlatRows {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> present;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<const std::uint8_t> row_present(std::size_t i) const {
    return {present.data() + i * cols, cols};
  }
  void append(std::span<const double> v, std::span<const std::uint8_t> p);
};

std::vector<double> flatten_dense(const DayGrid<double>& grid);
void flatten_sparse(const ModelInput& input, std::vector<double>& values,
                    std::vector<std::uint8_t>& present);
DayGrid<double> unflatten(std::span<const double> row, std::size_t width);

enum class TreeInputMode { kSparse, kZero, kMedian };

// Builds flattened rows for the listed samples. Medians are required only
// in kMedian mode.
FlatRows flatten_samples(std::span<const WindowSample> samples, std::span<const std::size_t> idx,
                         TreeInputMode mode, const Medians* medians = nullptr);

}  // namespace ilos
