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

#include "ilos/missing_data.hpp"

#include <algorithm>

#include "ilos/errors.hpp"

namespace ilos {

MaskMatrix compute_mask(const ModelInput& input) {
  MaskMatrix m(input.width);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = input.observed[i] ? 1 : 0;
  return m;
}

MaskMatrix compute_mask(const WindowSample& sample) { return compute_mask(sample.input()); }

DeltaMatrix compute_time_gaps(const MaskMatrix& mask) {
  DeltaMatrix delta(mask.cols, 0);
  for (std::size_t t = 1; t < kInputDays; ++t) {
    for (std::size_t d = 0; d < mask.cols; ++d) {
      delta.at(t, d) = mask.at(t - 1, d) ? 1 : 1 + delta.at(t - 1, d);
    }
  }
  return delta;
}

DeltaMatrix compute_time_gaps_reversed(const MaskMatrix& mask) {
  MaskMatrix reversed(mask.cols);
  for (std::size_t t = 0; t < kInputDays; ++t) {
    for (std::size_t d = 0; d < mask.cols; ++d) {
      reversed.at(t, d) = mask.at(kInputDays - 1 - t, d);
    }
  }
  return compute_time_gaps(reversed);
}

DayGrid<double> impute_zero(const ModelInput& input) {
  DayGrid<double> out(input.width, 0.0);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (input.observed[i]) out.data[i] = input.x[i];
  }
  return out;
}

Medians compute_medians(std::span<const WindowSample* const> train, std::size_t width) {
  Medians m;
  m.value.assign(width, 0.0);
  m.fallback.assign(width, 0);
  std::vector<double> column;
  for (std::size_t d = 0; d < width; ++d) {
    column.clear();
    for (const auto* s : train) {
      for (std::size_t t = 0; t < kInputDays; ++t) {
        if (s->is_observed(t, d)) column.push_back(s->at(t, d));
      }
    }
    if (column.empty()) {
      m.fallback[d] = 1;
      continue;
    }
    const std::size_t mid = column.size() / 2;
    std::nth_element(column.begin(), column.begin() + mid, column.end());
    const double upper = column[mid];
    if (column.size() % 2 == 1) {
      m.value[d] = upper;
    } else {
      const double lower = *std::max_element(column.begin(), column.begin() + mid);
      m.value[d] = 0.5 * (lower + upper);
    }
  }
  return m;
}

DayGrid<double> impute_median(const ModelInput& input, const Medians& medians) {
  if (medians.value.size() != input.width) throw DataError("impute_median: width mismatch");
  DayGrid<double> out(input.width, 0.0);
  for (std::size_t t = 0; t < kInputDays; ++t) {
    for (std::size_t d = 0; d < input.width; ++d) {
      const std::size_t i = t * input.width + d;
      out.data[i] = input.observed[i] ? input.x[i] : medians.value[d];
    }
  }
  return out;
}

void FlatRows::append(std::span<const double> v, std::span<const std::uint8_t> p) {
  if (rows == 0 && cols == 0) cols = v.size();
  if (v.size() != cols || p.size() != cols) throw DataError("FlatRows: row width mismatch");
  values.insert(values.end(), v.begin(), v.end());
  present.insert(present.end(), p.begin(), p.end());
  ++rows;
}

std::vector<double> flatten_dense(const DayGrid<double>& grid) { return grid.data; }

void flatten_sparse(const ModelInput& input, std::vector<double>& values,
                    std::vector<std::uint8_t>& present) {
  values.assign(input.x.begin(), input.x.end());
  present.assign(input.observed.begin(), input.observed.end());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!present[i]) values[i] = 0.0;
  }
}

DayGrid<double> unflatten(std::span<const double> row, std::size_t width) {
  if (row.size() != kInputDays * width) throw DataError("unflatten: row length mismatch");
  DayGrid<double> out(width);
  std::copy(row.begin(), row.end(), out.data.begin());
  return out;
}

FlatRows flatten_samples(std::span<const WindowSample> samples, std::span<const std::size_t> idx,
                         TreeInputMode mode, const Medians* medians) {
  FlatRows rows;
  if (idx.empty()) return rows;
  const std::size_t width = samples[idx[0]].width;
  rows.cols = kInputDays * width;
  rows.values.reserve(idx.size() * rows.cols);
  rows.present.reserve(idx.size() * rows.cols);
  std::vector<double> v;
  std::vector<std::uint8_t> p;
  const std::vector<std::uint8_t> all_present(rows.cols, 1);
  for (auto i : idx) {
    const auto input = samples[i].input();
    switch (mode) {
      case TreeInputMode::kSparse:
        flatten_sparse(input, v, p);
        rows.append(v, p);
        break;
      case TreeInputMode::kZero:
        rows.append(flatten_dense(impute_zero(input)), all_present);
        break;
      case TreeInputMode::kMedian:
        if (!medians) throw DataError("flatten_samples: median mode needs medians");
        rows.append(flatten_dense(impute_median(input, *medians)), all_present);
        break;
    }
  }
  return rows;
}

}  // namespace ilos
