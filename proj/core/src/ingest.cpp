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

#include "ilos/ingest.hpp"

#include <limits>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

#include "ilos/container.hpp"
#include "ilos/errors.hpp"

namespace ilos {

namespace {

std::optional<std::size_t> index_of(const std::vector<std::string>& names, std::string_view name) {
  auto it = std::lower_bound(names.begin(), names.end(), name);
  if (it != names.end() && *it == name) return static_cast<std::size_t>(it - names.begin());
  // Lists coming from hand-written manifests may not be sorted.
  auto lin = std::find(names.begin(), names.end(), name);
  if (lin == names.end()) return std::nullopt;
  return static_cast<std::size_t>(lin - names.begin());
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

std::optional<std::size_t> FeatureSchema::numeric_index(std::string_view name) const {
  return index_of(numeric, name);
}

std::optional<std::size_t> FeatureSchema::facility_index(std::string_view name) const {
  return index_of(facilities, name);
}

std::size_t FeatureSchema::uas_index() const {
  auto i = numeric_index(uas_name);
  if (!i) throw DataError("schema lacks " + uas_name);
  return *i;
}

std::size_t FeatureSchema::hccs_index() const {
  auto i = numeric_index(hccs_name);
  if (!i) throw DataError("schema lacks " + hccs_name);
  return *i;
}

std::vector<std::size_t> FeatureSchema::indicator_indices() const {
  std::vector<std::size_t> out;
  for (const auto& name : protocol_indicators) {
    auto i = numeric_index(name);
    if (!i) throw DataError("protocol indicator " + name + " is not a numeric feature");
    out.push_back(*i);
  }
  return out;
}

void FeatureSchema::validate() const {
  std::set<std::string> seen;
  for (const auto* list : {&numeric, &facilities}) {
    for (const auto& n : *list) {
      if (n.empty()) throw DataError("schema: empty column name");
      if (!seen.insert(n).second) throw DataError("schema: duplicate column name " + n);
    }
  }
  if (!numeric_index(uas_name) || !numeric_index(hccs_name)) {
    throw DataError("schema: UAS and HCCS must be numeric features");
  }
  std::set<std::string> indicators(protocol_indicators.begin(), protocol_indicators.end());
  if (indicators.size() != protocol_indicators.size()) {
    throw DataError("schema: duplicate protocol indicator");
  }
  for (const auto& n : protocol_indicators) {
    if (!numeric_index(n)) throw DataError("schema: protocol indicator " + n + " not numeric");
  }
}

nlohmann::json FeatureSchema::to_json() const {
  return nlohmann::json{{"numeric", numeric},
                        {"facilities", facilities},
                        {"protocol_indicators", protocol_indicators},
                        {"uas", uas_name},
                        {"hccs", hccs_name}};
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  FeatureSchema s;
  s.numeric = j.at("numeric").get<std::vector<std::string>>();
  s.facilities = j.at("facilities").get<std::vector<std::string>>();
  s.protocol_indicators = j.at("protocol_indicators").get<std::vector<std::string>>();
  s.uas_name = j.value("uas", std::string(kUasName));
  s.hccs_name = j.value("hccs", std::string(kHccsName));
  s.validate();
  return s;
}

PmRecord parse_pm_line(std::string_view line, const std::string& source, std::size_t line_no,
                       const FeatureSchema* schema_hint) {
  const auto fields = split_fields(trim_cr(line));
  if (fields.size() != 6) {
    throw ParseError(source, line_no,
                     "expected 6 fields, found " + std::to_string(fields.size()));
  }
  for (std::size_t i = 0; i < 5; ++i) {
    if (fields[i].empty()) throw ParseError(source, line_no, "empty field " + std::to_string(i + 1));
  }
  PmRecord r;
  r.network_id = fields[0];
  r.port_id = fields[1];
  r.facility_type = fields[2];
  auto day = parse_iso_date(fields[3]);
  if (!day) throw ParseError(source, line_no, "malformed date '" + std::string(fields[3]) + "'");
  r.day = *day;
  r.pm_name = fields[4];
  const auto v = fields[5];
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), r.pm_value);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(r.pm_value)) {
    throw ParseError(source, line_no, "non-numeric value '" + std::string(v) + "'");
  }
  if (schema_hint && !schema_hint->facilities.empty() &&
      !schema_hint->facility_index(r.facility_type)) {
    throw ParseError(source, line_no, "unknown facility '" + r.facility_type + "'");
  }
  return r;
}

void for_each_pm_record(const std::filesystem::path& path, const FeatureSchema* schema_hint,
                        const std::function<void(PmRecord&&)>& sink) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  const auto source = path.string();
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++line_no;
  if (trim_cr(line) != kPmCsvHeader) {
    throw ParseError(source, 1, "unexpected header, want '" + std::string(kPmCsvHeader) + "'");
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_cr(line).empty()) continue;
    sink(parse_pm_line(line, source, line_no, schema_hint));
  }
}

std::vector<PmRecord> parse_pm_csv(const std::filesystem::path& path,
                                   const FeatureSchema* schema_hint) {
  std::vector<PmRecord> out;
  for_each_pm_record(path, schema_hint, [&](PmRecord&& r) { out.push_back(std::move(r)); });
  return out;
}

void write_pm_csv(const std::filesystem::path& path, std::span<const PmRecord> records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << kPmCsvHeader << '\n';
  char buf[64];
  for (const auto& r : records) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), r.pm_value);
    out << r.network_id << ',' << r.port_id << ',' << r.facility_type << ','
        << to_iso_date(r.day) << ',' << r.pm_name << ',' << std::string_view(buf, end - buf)
        << '\n';
  }
}

FeatureSchema build_schema(std::span<const PmRecord> records,
                           std::span<const std::string> protocol_indicators) {
  if (records.empty()) throw DataError("build_schema: empty record stream");
  std::set<std::string> pms{std::string(kUasName), std::string(kHccsName)};
  std::set<std::string> facilities;
  for (const auto& r : records) {
    pms.insert(r.pm_name);
    facilities.insert(r.facility_type);
  }
  FeatureSchema s;
  s.numeric.assign(pms.begin(), pms.end());
  s.facilities.assign(facilities.begin(), facilities.end());
  for (const auto& name : protocol_indicators) {
    if (pms.contains(name) &&
        std::find(s.protocol_indicators.begin(), s.protocol_indicators.end(), name) ==
            s.protocol_indicators.end()) {
      s.protocol_indicators.push_back(name);
    }
  }
  s.validate();
  return s;
}

std::vector<PortSeries> merge_to_port_level(std::span<const PmRecord> records,
                                            const FeatureSchema& schema) {
  struct Cell {
    double value;
  };
  struct PortAcc {
    Day first{std::numeric_limits<std::int32_t>::max()};
    Day last{std::numeric_limits<std::int32_t>::min()};
    std::vector<std::uint8_t> onehot;
    // (day, column) -> running max
    std::map<std::pair<std::int32_t, std::size_t>, Cell> cells;
  };
  const std::size_t width = schema.numeric_count();
  std::map<std::pair<std::string, std::string>, PortAcc> ports;
  for (const auto& r : records) {
    const auto col = schema.numeric_index(r.pm_name);
    if (!col) throw DataError("merge: PM '" + r.pm_name + "' missing from schema");
    const auto fac = schema.facility_index(r.facility_type);
    if (!fac) throw DataError("merge: facility '" + r.facility_type + "' missing from schema");
    auto& acc = ports[{r.network_id, r.port_id}];
    if (acc.onehot.empty()) acc.onehot.assign(schema.onehot_count(), 0);
    acc.onehot[*fac] = 1;
    acc.first = std::min(acc.first, r.day);
    acc.last = std::max(acc.last, r.day);
    auto [it, inserted] = acc.cells.try_emplace({r.day.serial, *col}, Cell{r.pm_value});
    if (!inserted) it->second.value = std::max(it->second.value, r.pm_value);
  }
  std::vector<PortSeries> out;
  out.reserve(ports.size());
  for (auto& [key, acc] : ports) {
    PortSeries s;
    s.network_id = key.first;
    s.port_id = key.second;
    s.start = acc.first;
    s.numeric_width = width;
    const auto days = static_cast<std::size_t>(acc.last - acc.first + 1);
    s.values.assign(days * width, 0.0);
    s.present.assign(days * width, 0);
    for (const auto& [dc, cell] : acc.cells) {
      const auto idx = static_cast<std::size_t>(dc.first - acc.first.serial) * width + dc.second;
      s.values[idx] = cell.value;
      s.present[idx] = 1;
    }
    s.onehot = std::move(acc.onehot);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PmRecord> series_to_records(const PortSeries& series, const FeatureSchema& schema) {
  std::vector<PmRecord> out;
  for (std::size_t d = 0; d < series.days(); ++d) {
    for (std::size_t c = 0; c < series.numeric_width; ++c) {
      if (!series.is_present(d, c)) continue;
      for (std::size_t f = 0; f < series.onehot.size(); ++f) {
        if (!series.onehot[f]) continue;
        out.push_back(PmRecord{series.network_id, series.port_id, schema.facilities[f],
                               series.day_at(d), schema.numeric[c], series.value(d, c)});
      }
    }
  }
  return out;
}

void write_series(const std::filesystem::path& path, const SeriesSet& set) {
  Container c;
  c.kind = "port-series";
  c.add("schema", set.schema.to_json().dump());
  ByteWriter w;
  w.put<std::uint64_t>(set.series.size());
  for (const auto& s : set.series) {
    w.put_string(s.network_id);
    w.put_string(s.port_id);
    w.put<std::int32_t>(s.start.serial);
    w.put<std::uint64_t>(s.numeric_width);
    w.put_span<double>(s.values);
    w.put_span<std::uint8_t>(s.present);
    w.put_span<std::uint8_t>(s.onehot);
  }
  c.add("series", w.release());
  write_container(path, c);
}

SeriesSet read_series(const std::filesystem::path& path) {
  const auto c = read_container(path, "port-series");
  SeriesSet set;
  set.schema = FeatureSchema::from_json(nlohmann::json::parse(c.section("schema")));
  auto r = c.reader("series");
  const auto n = r.get<std::uint64_t>();
  set.series.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    PortSeries s;
    s.network_id = r.get_string();
    s.port_id = r.get_string();
    s.start = Day{r.get<std::int32_t>()};
    s.numeric_width = r.get<std::uint64_t>();
    s.values = r.get_vector<double>();
    s.present = r.get_vector<std::uint8_t>();
    s.onehot = r.get_vector<std::uint8_t>();
    if (s.numeric_width != set.schema.numeric_count() || s.present.size() != s.values.size() ||
        s.onehot.size() != set.schema.onehot_count()) {
      throw ParseError(path.string(), 0, "series shape does not match schema");
    }
    set.series.push_back(std::move(s));
  }
  return set;
}

}  // namespace ilos
