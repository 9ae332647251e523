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

#include "ilos/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "ilos/errors.hpp"

namespace ilos {

PrCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DataError("pr_curve: scores and labels differ in size");
  PrCurve curve;
  curve.total = scores.size();
  for (auto l : labels) {
    if (l > 1) throw DataError("pr_curve: labels must be 0 or 1");
    curve.positives += l;
  }
  if (curve.positives == 0) throw DataError("pr_curve: no positive samples");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    if (std::isnan(s)) throw DataError("pr_curve: NaN score");
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == s; ++j) {
      if (labels[order[j]]) {
        ++tp;
      } else {
        ++fp;
      }
    }
    curve.points.push_back(PrPoint{s, static_cast<double>(tp) / static_cast<double>(tp + fp),
                                   static_cast<double>(tp) / static_cast<double>(curve.positives),
                                   tp, fp});
    i = j;
  }
  return curve;
}

double pr_auc_truncated(const PrCurve& curve, double recall_cap) {
  // Runs of equal precision are summed as one rectangle so a constant
  // precision integrates without rounding drift.
  double area = 0.0;
  double prev = 0.0;
  double run_start = 0.0;
  double run_precision = 0.0;
  for (const auto& p : curve.points) {
    const double r = std::min(p.recall, recall_cap);
    if (r > prev) {
      if (p.precision != run_precision) {
        area += run_precision * (prev - run_start);
        run_start = prev;
        run_precision = p.precision;
      }
      prev = r;
    }
    if (p.recall >= recall_cap) break;
  }
  return area + run_precision * (prev - run_start);
}

double truncated_score(std::span<const double> scores, std::span<const std::uint8_t> labels,
                       double recall_cap) {
  if (std::none_of(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; })) {
    return 0.0;
  }
  return pr_auc_truncated(pr_curve(scores, labels), recall_cap);
}

double weighted_average(std::span<const double> scores, std::span<const std::size_t> sizes) {
  if (scores.empty()) throw DataError("weighted_average: empty input");
  if (scores.size() != sizes.size()) throw DataError("weighted_average: length mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    num += static_cast<double>(sizes[i]) * scores[i];
    den += static_cast<double>(sizes[i]);
  }
  if (den <= 0.0) throw DataError("weighted_average: total size is zero");
  return num / den;
}

// ---------------------------------------------------------------------------
// Facility filters

namespace {

bool has_facility(const WindowSample& s, const FeatureSchema& schema, const std::string& name) {
  const auto idx = schema.facility_index(name);
  if (!idx) return false;
  const std::size_t col = schema.numeric_count() + *idx;
  for (std::size_t t = 0; t < kInputDays; ++t) {
    if (s.is_observed(t, col) && s.at(t, col) > 0.5) return true;
  }
  return false;
}

}  // namespace

bool FacilityFilter::matches(const WindowSample& sample, const FeatureSchema& schema) const {
  if (!include.empty() && std::none_of(include.begin(), include.end(), [&](const std::string& f) {
        return has_facility(sample, schema, f);
      })) {
    return false;
  }
  return std::none_of(exclude.begin(), exclude.end(),
                      [&](const std::string& f) { return has_facility(sample, schema, f); });
}

nlohmann::json FacilityFilter::to_json() const {
  return {{"name", name}, {"include", include}, {"exclude", exclude}};
}

FacilityFilter FacilityFilter::from_json(const nlohmann::json& j) {
  FacilityFilter f;
  f.name = j.at("name").get<std::string>();
  f.include = j.value("include", std::vector<std::string>{});
  f.exclude = j.value("exclude", std::vector<std::string>{});
  return f;
}

std::vector<std::size_t> filter_indices(std::span<const WindowSample> samples,
                                        std::span<const std::size_t> idx,
                                        const FeatureSchema& schema, const FacilityFilter& filter) {
  std::vector<std::size_t> out;
  for (auto i : idx) {
    if (filter.matches(samples[i], schema)) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Outage log

void write_outage_log(const std::filesystem::path& path, std::span<const OutageEvent> events) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << kOutageLogHeader << '\n';
  for (const auto& e : events) {
    out << e.network_id << ',' << e.port_id << ',' << to_iso_date(e.day) << ','
        << (e.has_precursor ? 1 : 0) << '\n';
  }
}

std::vector<OutageEvent> read_outage_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("outage log not found: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<OutageEvent> events;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kOutageLogHeader) throw ParseError(path.string(), 1, "unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 4) throw ParseError(path.string(), line_no, "expected 4 fields");
    const auto day = parse_iso_date(f[2]);
    if (!day) throw ParseError(path.string(), line_no, "malformed date '" + f[2] + "'");
    if (f[3] != "0" && f[3] != "1") {
      throw ParseError(path.string(), line_no, "has_precursor must be 0 or 1");
    }
    events.push_back(OutageEvent{f[0], f[1], *day, f[3] == "1"});
  }
  return events;
}

std::vector<std::size_t> precursor_only(std::span<const WindowSample> samples,
                                        std::span<const std::size_t> idx,
                                        std::span<const OutageEvent> log) {
  std::set<std::tuple<std::string, std::string, Day>> unpredictable;
  for (const auto& e : log) {
    if (!e.has_precursor) unpredictable.emplace(e.network_id, e.port_id, e.day);
  }
  std::vector<std::size_t> out;
  for (auto i : idx) {
    const auto& s = samples[i];
    if (s.label) {
      std::string port = s.port_id;
      const std::string prefix = s.network_id + "/";
      if (port.starts_with(prefix)) port = port.substr(prefix.size());
      bool hit = false;
      for (std::size_t k = 1; k <= kFutureDays && !hit; ++k) {
        hit = unpredictable.contains({s.network_id, port, s.present_day + static_cast<int>(k)});
      }
      if (hit) continue;
    }
    out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subset scores

nlohmann::json SubsetScore::to_json() const {
  return {{"name", name}, {"samples", samples}, {"positives", positives}, {"D", score}};
}

SubsetScore score_subset(std::string name, std::span<const double> scores,
                         std::span<const WindowSample> samples, std::span<const std::size_t> idx,
                         double recall_cap) {
  if (idx.empty()) throw DataError("subset '" + name + "' is empty");
  std::vector<double> s;
  std::vector<std::uint8_t> l;
  s.reserve(idx.size());
  l.reserve(idx.size());
  for (auto i : idx) {
    s.push_back(scores[i]);
    l.push_back(samples[i].label);
  }
  SubsetScore out;
  out.name = std::move(name);
  out.samples = idx.size();
  out.positives = static_cast<std::size_t>(std::count(l.begin(), l.end(), 1));
  if (out.positives == 0) throw DataError("subset '" + out.name + "' has no positive samples");
  out.curve = pr_curve(s, l);
  out.score = pr_auc_truncated(out.curve, recall_cap);
  return out;
}

void write_curve_csv(const std::filesystem::path& path, const PrCurve& curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "threshold,precision,recall\n";
  out.precision(17);
  for (const auto& p : curve.points) {
    out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
  }
}

void write_pr_svg(const std::filesystem::path& path, std::span<const NamedCurve> curves,
                  const std::string& title) {
  constexpr double kW = 640;
  constexpr double kH = 420;
  constexpr double kLeft = 60;
  constexpr double kRight = 160;
  constexpr double kTop = 40;
  constexpr double kBottom = 50;
  constexpr double kMinLog = -3.0;
  constexpr std::array<const char*, 6> kColors = {"#1f77b4", "#d62728", "#2ca02c",
                                                  "#9467bd", "#ff7f0e", "#8c564b"};
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  auto px = [&](double recall) {
    const double lr = std::clamp(std::log10(std::max(recall, 1e-12)), kMinLog, 0.0);
    return kLeft + (lr - kMinLog) / -kMinLog * pw;
  };
  auto py = [&](double precision) { return kTop + (1.0 - precision) * ph; };

  std::ostringstream svg;
  svg.precision(5);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"24\" font-size=\"14\">" << title << "</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int e = -3; e <= 0; ++e) {
    const double x = px(std::pow(10.0, e));
    svg << "<line x1=\"" << x << "\" y1=\"" << kTop << "\" x2=\"" << x << "\" y2=\"" << kTop + ph
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << x - 12 << "\" y=\"" << kTop + ph + 16 << "\">1e" << e << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double p = k / 4.0;
    svg << "<text x=\"" << kLeft - 34 << "\" y=\"" << py(p) + 4 << "\">" << p << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 - 20 << "\" y=\"" << kH - 12 << "\">recall</text>\n";
  svg << "<text x=\"14\" y=\"" << kTop + ph / 2 << "\" transform=\"rotate(-90 14 "
      << kTop + ph / 2 << ")\">precision</text>\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kColors[c % kColors.size()];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : curves[c].curve.points) svg << px(p.recall) << ',' << py(p.precision) << ' ';
    svg << "\"/>\n";
    const double ly = kTop + 16 + 18 * static_cast<double>(c);
    svg << "<line x1=\"" << kLeft + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 30
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kLeft + pw + 36 << "\" y=\"" << ly + 4 << "\">" << curves[c].name
        << "</text>\n";
  }
  svg << "</svg>\n";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << svg.str();
}

}  // namespace ilos
