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

#include "ilos/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

#include "ilos/container.hpp"
#include "ilos/errors.hpp"

namespace ilos {

std::vector<WindowSample> slide_windows(const PortSeries& series, const FeatureSchema& schema) {
  std::vector<WindowSample> out;
  const std::size_t days = series.days();
  if (days < kWindowDays) return out;
  const std::size_t num = schema.numeric_count();
  const std::size_t width = schema.width();
  const std::size_t uas = schema.uas_index();
  const std::size_t hccs = schema.hccs_index();
  out.reserve(days - kWindowDays + 1);
  for (std::size_t start = 0; start + kWindowDays <= days; ++start) {
    WindowSample w;
    w.network_id = series.network_id;
    w.port_id = series.port_id;
    w.present_day = series.day_at(start + kInputDays - 1);
    w.width = width;
    w.x.assign(kInputDays * width, 0.0);
    w.observed.assign(kInputDays * width, 0);
    for (std::size_t t = 0; t < kInputDays; ++t) {
      const std::size_t day = start + t;
      for (std::size_t d = 0; d < num; ++d) {
        if (series.is_present(day, d)) {
          w.x[t * width + d] = series.value(day, d);
          w.observed[t * width + d] = 1;
        }
      }
      for (std::size_t f = 0; f < schema.onehot_count(); ++f) {
        w.x[t * width + num + f] = series.onehot[f];
        w.observed[t * width + num + f] = 1;
      }
    }
    for (std::size_t k = 0; k < kFutureDays; ++k) {
      const std::size_t day = start + kInputDays + k;
      auto& fd = w.future[k];
      fd.uas = series.get(day, uas);
      fd.hccs = series.get(day, hccs);
      for (std::size_t d = 0; d < num; ++d) fd.observed_count += series.is_present(day, d);
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::uint8_t window_label(const WindowSample& sample) {
  for (const auto& fd : sample.future) {
    if ((fd.uas && *fd.uas > 0.0) || (fd.hccs && *fd.hccs > 0.0)) return 1;
  }
  return 0;
}

void label_window(WindowSample& sample) { sample.label = window_label(sample); }

std::string_view drop_reason_name(DropReason r) {
  switch (r) {
    case DropReason::kNone: return "";
    case DropReason::kNoTraffic: return "no_traffic";
    case DropReason::kLosToday: return "los_today";
    case DropReason::kEmptyPast: return "empty_past";
    case DropReason::kEmptyFuture: return "empty_future";
  }
  return "";
}

FilterDecision filter_defective(const WindowSample& sample, const FeatureSchema& schema) {
  const std::size_t today = kInputDays - 1;
  bool traffic = false;
  for (auto i : schema.indicator_indices()) {
    if (sample.is_observed(today, i) && sample.at(today, i) > 0.0) traffic = true;
  }
  if (!traffic) return {false, DropReason::kNoTraffic};
  for (auto i : {schema.uas_index(), schema.hccs_index()}) {
    if (sample.is_observed(today, i) && sample.at(today, i) > 0.0) {
      return {false, DropReason::kLosToday};
    }
  }
  bool any_past = false;
  for (std::size_t t = 0; t < kInputDays && !any_past; ++t) {
    for (std::size_t d = 0; d < schema.numeric_count(); ++d) {
      if (sample.is_observed(t, d)) {
        any_past = true;
        break;
      }
    }
  }
  if (!any_past) return {false, DropReason::kEmptyPast};
  bool any_future = false;
  for (const auto& fd : sample.future) any_future = any_future || fd.observed_count > 0;
  if (!any_future) return {false, DropReason::kEmptyFuture};
  return {};
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "";
}

SplitAssignment chronological_split(std::span<const Day> present_days) {
  const std::size_t n = present_days.size();
  if (n < 10) throw DataError("chronological_split: need at least 10 samples, got " +
                              std::to_string(n));
  std::map<Day, std::size_t> per_day;
  for (auto d : present_days) ++per_day[d];
  if (per_day.size() < 3) {
    throw DataError("chronological_split: samples span fewer than 3 distinct days");
  }
  // cumulative[k] = number of samples on the first k+1 distinct days.
  std::vector<Day> days;
  std::vector<std::size_t> cumulative;
  std::size_t acc = 0;
  for (const auto& [day, count] : per_day) {
    days.push_back(day);
    acc += count;
    cumulative.push_back(acc);
  }
  // A cut after distinct day k puts days[0..k] on the left.
  auto best_cut = [&](double target, std::size_t lo, std::size_t hi) {
    std::size_t best = lo;
    double best_err = std::abs(static_cast<double>(cumulative[lo]) - target);
    for (std::size_t k = lo + 1; k <= hi; ++k) {
      const double err = std::abs(static_cast<double>(cumulative[k]) - target);
      if (err < best_err) {
        best = k;
        best_err = err;
      }
    }
    return best;
  };
  const std::size_t last = days.size() - 1;
  const std::size_t cut1 = best_cut(0.7 * static_cast<double>(n), 0, last - 2);
  const std::size_t cut2 = best_cut(0.8 * static_cast<double>(n), cut1 + 1, last - 1);
  SplitAssignment out;
  out.validation_start = days[cut1 + 1];
  out.test_start = days[cut2 + 1];
  out.tags.reserve(n);
  for (auto d : present_days) {
    out.tags.push_back(d < out.validation_start ? Split::kTrain
                       : d < out.test_start     ? Split::kValidation
                                                : Split::kTest);
  }
  return out;
}

SplitAssignment chronological_split(std::span<const WindowSample> samples) {
  std::vector<Day> days;
  days.reserve(samples.size());
  for (const auto& s : samples) days.push_back(s.present_day);
  return chronological_split(days);
}

void MomentAccumulator::add(double v) {
  count += 1.0;
  const double delta = v - mean;
  mean += delta / count;
  m2 += delta * (v - mean);
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.count == 0.0) return;
  if (count == 0.0) {
    *this = other;
    return;
  }
  const double total = count + other.count;
  const double delta = other.mean - mean;
  mean += delta * other.count / total;
  m2 += other.m2 + delta * delta * count * other.count / total;
  count = total;
}

nlohmann::json NormStats::to_json() const {
  return nlohmann::json{{"mean", mean}, {"stddev", stddev}, {"exempt", exempt}};
}

NormStats NormStats::from_json(const nlohmann::json& j) {
  NormStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("stddev").get<std::vector<double>>();
  s.exempt = j.at("exempt").get<std::vector<std::uint8_t>>();
  if (s.stddev.size() != s.mean.size() || s.exempt.size() != s.mean.size()) {
    throw DataError("norm stats: inconsistent lengths");
  }
  return s;
}

NormStats zscore_fit(std::span<const WindowSample* const> train, const FeatureSchema& schema) {
  const std::size_t width = schema.width();
  const std::size_t num = schema.numeric_count();
  std::vector<MomentAccumulator> acc(width);
  for (const auto* s : train) {
    if (s->width != width) throw DataError("zscore_fit: sample width does not match schema");
    for (std::size_t t = 0; t < kInputDays; ++t) {
      for (std::size_t d = 0; d < num; ++d) {
        if (s->is_observed(t, d)) acc[d].add(s->at(t, d));
      }
    }
  }
  NormStats stats;
  stats.mean.assign(width, 0.0);
  stats.stddev.assign(width, 0.0);
  stats.exempt.assign(width, 0);
  for (std::size_t d = 0; d < width; ++d) {
    if (d >= num) {
      stats.exempt[d] = 1;
      continue;
    }
    stats.mean[d] = acc[d].mean;
    stats.stddev[d] = acc[d].stddev();
  }
  return stats;
}

double zscore_value(double x, double mean, double stddev) {
  return stddev > 0.0 ? (x - mean) / stddev : 0.0;
}

void zscore_apply(WindowSample& sample, const NormStats& stats) {
  if (sample.width != stats.width()) throw DataError("zscore_apply: width mismatch");
  for (std::size_t t = 0; t < kInputDays; ++t) {
    for (std::size_t d = 0; d < sample.width; ++d) {
      if (stats.exempt[d] || !sample.is_observed(t, d)) continue;
      auto& v = sample.x[t * sample.width + d];
      v = zscore_value(v, stats.mean[d], stats.stddev[d]);
    }
  }
}

std::vector<std::size_t> WindowDataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> WindowDataset::indices(Split s, std::string_view network) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (split[i] == s && samples[i].network_id == network) out.push_back(i);
  }
  return out;
}

BuildResult build_window_dataset(const SeriesSet& set) {
  BuildResult result;
  auto& ds = result.dataset;
  ds.schema = set.schema;
  for (const auto& series : set.series) {
    for (auto& w : slide_windows(series, set.schema)) {
      label_window(w);
      const auto decision = filter_defective(w, set.schema);
      result.audit.push_back(
          AuditRow{w.network_id, w.port_id, w.present_day, w.label, decision.keep, decision.reason});
      if (decision.keep) ds.samples.push_back(std::move(w));
    }
    if (std::find(ds.networks.begin(), ds.networks.end(), series.network_id) ==
        ds.networks.end()) {
      ds.networks.push_back(series.network_id);
    }
  }
  std::stable_sort(ds.samples.begin(), ds.samples.end(),
                   [](const WindowSample& a, const WindowSample& b) {
                     return a.present_day < b.present_day;
                   });
  const auto assignment = chronological_split(std::span<const WindowSample>(ds.samples));
  ds.split = assignment.tags;
  ds.validation_start = assignment.validation_start;
  ds.test_start = assignment.test_start;
  std::vector<const WindowSample*> train;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (ds.split[i] == Split::kTrain) train.push_back(&ds.samples[i]);
  }
  ds.norm = zscore_fit(train, ds.schema);
  return result;
}

void write_audit_csv(const std::filesystem::path& path, std::span<const AuditRow> rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "network_id,port_id,present_day,label,kept,reason\n";
  for (const auto& r : rows) {
    out << r.network_id << ',' << r.port_id << ',' << to_iso_date(r.present_day) << ','
        << int(r.label) << ',' << (r.kept ? 1 : 0) << ',' << drop_reason_name(r.reason) << '\n';
  }
}

namespace {

void put_optional(ByteWriter& w, const std::optional<double>& v) {
  w.put<std::uint8_t>(v.has_value());
  w.put<double>(v.value_or(0.0));
}

std::optional<double> get_optional(ByteReader& r) {
  const bool has = r.get<std::uint8_t>() != 0;
  const double v = r.get<double>();
  return has ? std::optional<double>(v) : std::nullopt;
}

}  // namespace

void write_windows(const std::filesystem::path& path, const WindowDataset& ds,
                   const nlohmann::json& extra_manifest) {
  nlohmann::json manifest = extra_manifest;
  manifest["schema"] = ds.schema.to_json();
  manifest["norm"] = ds.norm.to_json();
  manifest["validation_start"] = to_iso_date(ds.validation_start);
  manifest["test_start"] = to_iso_date(ds.test_start);
  manifest["networks"] = ds.networks;
  manifest["sample_count"] = ds.samples.size();
  Container c;
  c.kind = "windows";
  c.add("manifest", manifest.dump());
  ByteWriter w;
  w.put<std::uint64_t>(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    w.put_string(s.network_id);
    w.put_string(s.port_id);
    w.put<std::int32_t>(s.present_day.serial);
    w.put<std::uint8_t>(s.label);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(ds.split[i]));
    w.put_span<double>(s.x);
    w.put_span<std::uint8_t>(s.observed);
    for (const auto& fd : s.future) {
      put_optional(w, fd.uas);
      put_optional(w, fd.hccs);
      w.put<std::uint32_t>(fd.observed_count);
    }
  }
  c.add("samples", w.release());
  write_container(path, c);
}

WindowDataset read_windows(const std::filesystem::path& path) {
  const auto c = read_container(path, "windows");
  const auto manifest = nlohmann::json::parse(c.section("manifest"));
  WindowDataset ds;
  ds.schema = FeatureSchema::from_json(manifest.at("schema"));
  ds.norm = NormStats::from_json(manifest.at("norm"));
  ds.validation_start = *parse_iso_date(manifest.at("validation_start").get<std::string>());
  ds.test_start = *parse_iso_date(manifest.at("test_start").get<std::string>());
  ds.networks = manifest.at("networks").get<std::vector<std::string>>();
  auto r = c.reader("samples");
  const auto n = r.get<std::uint64_t>();
  ds.samples.reserve(n);
  ds.split.reserve(n);
  const std::size_t width = ds.schema.width();
  for (std::uint64_t i = 0; i < n; ++i) {
    WindowSample s;
    s.network_id = r.get_string();
    s.port_id = r.get_string();
    s.present_day = Day{r.get<std::int32_t>()};
    s.label = r.get<std::uint8_t>();
    const auto tag = r.get<std::uint8_t>();
    if (tag > 2) throw ParseError(path.string(), 0, "bad split tag");
    ds.split.push_back(static_cast<Split>(tag));
    s.width = width;
    s.x = r.get_vector<double>();
    s.observed = r.get_vector<std::uint8_t>();
    if (s.x.size() != kInputDays * width || s.observed.size() != s.x.size()) {
      throw ParseError(path.string(), 0, "sample shape does not match schema");
    }
    for (auto& fd : s.future) {
      fd.uas = get_optional(r);
      fd.hccs = get_optional(r);
      fd.observed_count = r.get<std::uint32_t>();
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

double numeric_missing_rate(const WindowDataset& ds) {
  const std::size_t num = ds.schema.numeric_count();
  double absent = 0.0, total = 0.0;
  for (const auto& s : ds.samples) {
    for (std::size_t t = 0; t < kInputDays; ++t) {
      for (std::size_t d = 0; d < num; ++d) absent += !s.is_observed(t, d);
    }
    total += static_cast<double>(kInputDays * num);
  }
  return total > 0.0 ? absent / total : 0.0;
}

double positive_rate(const WindowDataset& ds) {
  if (ds.samples.empty()) return 0.0;
  double pos = 0.0;
  for (const auto& s : ds.samples) pos += s.label;
  return pos / static_cast<double>(ds.samples.size());
}

}  // namespace ilos
