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

#include "ilos/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "ilos/errors.hpp"
#include "ilos/util.hpp"

namespace ilos {

namespace {

// Positive windows contributed by one precursor outage: the seven windows
// ahead of the outage plus the earlier ones that see a correction-count
// spike in their future.
constexpr double kWindowsPerPrecursorEvent = 7.2;
constexpr double kWindowsPerSuddenEvent = 6.3;
constexpr int kPlacementAttempts = 400;

constexpr std::uint64_t kPlanStream = 0x706c616eULL;
constexpr std::uint64_t kGapStream = 0x67617073ULL;

enum class PortKind { kLine, kClient };

struct ExtraPm {
  std::string name;
  bool counter = false;
  bool on_line = true;
};

struct Event {
  int day = 0;
  int ramp = 0;  // 0 for outages without precursor
  double severity = 0.0;
  bool benign = false;  // ramp recovers on `day` instead of failing
};

struct PortPlan {
  std::string port_id;
  PortKind kind = PortKind::kLine;
  std::vector<Event> events;
};

struct DayRecords {
  std::vector<PmRecord> records;
  bool protected_day = false;  // outage days survive collection gaps
};

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

std::vector<ExtraPm> extra_vocabulary(const GenConfig& c, std::size_t network) {
  const int shared = static_cast<int>(std::lround(c.vocabulary_overlap * c.extra_pms));
  std::vector<ExtraPm> out;
  for (int k = 0; k < c.extra_pms; ++k) {
    char buf[32];
    if (k < shared) {
      std::snprintf(buf, sizeof(buf), "AUX_PM%02d", k + 1);
    } else {
      std::snprintf(buf, sizeof(buf), "N%zu_PM%02d", network + 1, k + 1);
    }
    out.push_back(ExtraPm{buf, k % 2 == 1, k % 4 < 2});
  }
  return out;
}

class PortGenerator {
 public:
  PortGenerator(const GenConfig& c, std::string network, const PortPlan& plan,
                const std::vector<ExtraPm>& extras, Day start, std::uint64_t seed)
      : c_(c), network_(std::move(network)), plan_(plan), extras_(extras), start_(start),
        rng_(seed) {
    q0_ = unif(10.0, 14.0);
    s0_ = unif(0.05, 0.12);
    p0_ = unif(-12.0, -4.0);
    t0_ = unif(-2.0, 2.0);
    f0_ = std::log(unif(2e8, 2e9));
    for (std::size_t k = 0; k < extras_.size(); ++k) extra_level_.push_back(unif(-5.0, 5.0));
  }

  std::vector<DayRecords> run() {
    std::vector<DayRecords> days(static_cast<std::size_t>(c_.days));
    for (int d = 0; d < c_.days; ++d) emit_day(d, days[static_cast<std::size_t>(d)]);
    return days;
  }

 private:
  double unif(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  double normal(double sd) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  bool bernoulli(double p) { return std::bernoulli_distribution(std::clamp(p, 0.0, 1.0))(rng_); }
  double poisson(double mean) {
    if (mean <= 0.0) return 0.0;
    return static_cast<double>(std::poisson_distribution<int>(mean)(rng_));
  }
  // Sporadic healthy counter noise.
  double background_counter(double p, double mean) { return bernoulli(p) ? 1.0 + poisson(mean) : 0.0; }

  void put(DayRecords& out, int d, const char* facility, const std::string& pm, double v,
           bool counter) {
    if (counter && c_.zero_suppression && v == 0.0) return;
    out.records.push_back(PmRecord{network_, plan_.port_id, facility, start_ + d, pm, v});
  }

  // Degradation progress in (0, 1] inside a ramp, 0 elsewhere; sets the
  // severity and days-to-outage of the active event.
  double progress(int d, double& severity, int& to_outage, bool& benign) const {
    for (const auto& e : plan_.events) {
      if (e.ramp > 0 && d >= e.day - e.ramp && d < e.day) {
        severity = e.severity;
        to_outage = e.day - d;
        benign = e.benign;
        return static_cast<double>(d - (e.day - e.ramp) + 1) / static_cast<double>(e.ramp);
      }
    }
    return 0.0;
  }

  bool outage(int d) const {
    return std::any_of(plan_.events.begin(), plan_.events.end(),
                       [&](const Event& e) { return e.day == d && !e.benign; });
  }

  void emit_day(int d, DayRecords& out) {
    double a = 0.0;
    int to_outage = 0;
    bool benign = false;
    const double x = progress(d, a, to_outage, benign);
    const bool down = outage(d);
    out.protected_day = down;
    // Late-ramp spike probability: rises over the final four days.
    const double spike_p = (x > 0.0 && to_outage <= 4) ? a * (0.75 - 0.15 * to_outage) : 0.0;

    if (plan_.kind == PortKind::kLine) {
      if (!down) {
        put(out, d, "OTM4", "QAVG", round3(q0_ - 3.0 * a * x + normal(0.15)), false);
        put(out, d, "OTM4", "QSTDEV",
            round3(s0_ * (1.0 + 6.0 * a * x) * std::exp(normal(0.1))), false);
      }
      put(out, d, "OTM4", "HCCS", down ? std::round(unif(50, 3000)) : (bernoulli(spike_p) && !benign ? std::round(unif(1, 300)) : 0.0), true);
      put(out, d, "OTM4", "UAS", down ? std::round(unif(300, 86400)) : 0.0, true);
      put(out, d, "OTM4", "CV_OTU", background_counter(0.03, 20.0) + poisson(300.0 * a * x * x), true);
      put(out, d, "OTM4", "ES_OTU", background_counter(0.01, 2.0) + poisson(5.0 * a * x * x), true);
      put(out, d, "OTM4", "PROTO_OTN_UP", down ? 0.0 : 1.0, false);
      put(out, d, "OCH", "OPR", round3(down ? -40.0 : p0_ - 1.0 * a * x + normal(0.1)), false);
      put(out, d, "OCH", "OPT", round3(t0_ + normal(0.05)), false);
      put(out, d, "OCH", "UAS", down ? std::round(unif(300, 86400)) : 0.0, true);
    } else {
      if (!down) {
        put(out, d, "ETH10G", "FRAMES_RX", std::round(std::exp(f0_ + normal(0.05))), false);
        put(out, d, "ETH10G", "FRAMES_TX", std::round(std::exp(f0_ + normal(0.05))), false);
      }
      put(out, d, "ETH10G", "OPR", round3(down ? -40.0 : p0_ - 4.0 * a * x + normal(0.1)), false);
      put(out, d, "ETH10G", "FRAMES_ERR", background_counter(0.02, 10.0) + poisson(2000.0 * a * x * x), true);
      put(out, d, "ETH10G", "CV_PCS", background_counter(0.03, 20.0) + poisson(300.0 * a * x * x), true);
      put(out, d, "ETH10G", "ES_ETH", background_counter(0.01, 2.0) + (bernoulli(spike_p) ? std::round(unif(1, 60)) : 0.0), true);
      put(out, d, "ETH10G", "UAS", down ? std::round(unif(300, 86400)) : 0.0, true);
      put(out, d, "ETH10G", "PROTO_ETH_UP", down ? 0.0 : 1.0, false);
      put(out, d, "ODU2", "CV_ODU", background_counter(0.03, 20.0) + poisson(200.0 * a * x * x), true);
      put(out, d, "ODU2", "ES_ODU", background_counter(0.01, 2.0), true);
      put(out, d, "ODU2", "UAS", down ? std::round(unif(300, 86400)) : 0.0, true);
    }
    const bool line = plan_.kind == PortKind::kLine;
    for (std::size_t k = 0; k < extras_.size(); ++k) {
      const auto& e = extras_[k];
      if (e.on_line != line) continue;
      const char* facility = line ? "OTM4" : "ETH10G";
      if (e.counter) {
        put(out, d, facility, e.name, background_counter(0.05, 5.0), true);
      } else {
        put(out, d, facility, e.name, round3(extra_level_[k] + normal(1.0)), false);
      }
    }
  }

  const GenConfig& c_;
  std::string network_;
  const PortPlan& plan_;
  const std::vector<ExtraPm>& extras_;
  Day start_;
  std::mt19937_64 rng_;
  double q0_, s0_, p0_, t0_, f0_;
  std::vector<double> extra_level_;
};

std::vector<PortPlan> plan_ports(const GenConfig& c, std::size_t network, NetworkPlan& summary) {
  const std::string net = GenConfig::network_id(network);
  std::mt19937_64 rng(derive_seed(c.seed, hash_string(net), kPlanStream));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int n_ports = c.ports[network];
  std::vector<PortPlan> ports(static_cast<std::size_t>(n_ports));
  for (int p = 0; p < n_ports; ++p) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%03d", p + 1);
    ports[static_cast<std::size_t>(p)].port_id = buf;
    ports[static_cast<std::size_t>(p)].kind = u01(rng) < c.line_port_fraction ? PortKind::kLine
                                                                                : PortKind::kClient;
  }
  const double windows = static_cast<double>(n_ports) * (c.days - static_cast<int>(kWindowDays) + 1);
  const double per_event = (1.0 - c.unpredictable_fraction) * kWindowsPerPrecursorEvent +
                           c.unpredictable_fraction * kWindowsPerSuddenEvent;
  const int events = static_cast<int>(std::lround(c.positive_rate * windows / per_event));
  const int lo = c.ramp_max + 1;
  const int hi = c.days - 1;
  const int spacing = c.ramp_max + static_cast<int>(kWindowDays);
  for (int e = 0; e < events; ++e) {
    const bool precursor = u01(rng) >= c.unpredictable_fraction;
    const int ramp = precursor ? std::uniform_int_distribution<int>(c.ramp_min, c.ramp_max)(rng) : 0;
    const double severity = precursor ? 0.6 + 0.4 * u01(rng) : 0.0;
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      auto& port = ports[std::uniform_int_distribution<std::size_t>(0, ports.size() - 1)(rng)];
      const int day = std::uniform_int_distribution<int>(lo, hi)(rng);
      if (std::any_of(port.events.begin(), port.events.end(),
                      [&](const Event& ev) { return std::abs(ev.day - day) < spacing; })) {
        continue;
      }
      port.events.push_back(Event{day, ramp, severity});
      placed = true;
    }
    if (!placed) {
      throw DataError("synth: cannot place " + std::to_string(events) + " outages on " +
                      std::to_string(n_ports) + " ports of " + net + " over " +
                      std::to_string(c.days) + " days with spacing " + std::to_string(spacing) +
                      "; lower positive_rate or ramp_max");
    }
  }
  const int benign = static_cast<int>(std::lround(
      c.false_alarm_ratio * (1.0 - c.unpredictable_fraction) * static_cast<double>(events)));
  int benign_placed = 0;
  for (int e = 0; e < benign; ++e) {
    const int ramp = std::uniform_int_distribution<int>(c.ramp_min, c.ramp_max)(rng);
    const double severity = 0.6 + 0.4 * u01(rng);
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      auto& port = ports[std::uniform_int_distribution<std::size_t>(0, ports.size() - 1)(rng)];
      const int day = std::uniform_int_distribution<int>(lo, hi)(rng);
      if (std::any_of(port.events.begin(), port.events.end(),
                      [&](const Event& ev) { return std::abs(ev.day - day) < spacing; })) {
        continue;
      }
      port.events.push_back(Event{day, ramp, severity, true});
      ++benign_placed;
      break;
    }
  }
  summary.network_id = net;
  summary.ports = n_ports;
  summary.events = events;
  summary.false_alarms = benign_placed;
  for (auto& p : ports) {
    std::sort(p.events.begin(), p.events.end(),
              [](const Event& a, const Event& b) { return a.day < b.day; });
    summary.line_ports += p.kind == PortKind::kLine;
    summary.precursor_events += static_cast<int>(std::count_if(
        p.events.begin(), p.events.end(),
        [](const Event& ev) { return ev.ramp > 0 && !ev.benign; }));
    summary.degrading_ports += std::any_of(p.events.begin(), p.events.end(),
                                           [](const Event& ev) { return ev.ramp > 0; });
  }
  return ports;
}

}  // namespace

void GenConfig::validate() const {
  auto fraction = [](const char* field, double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("synth.") + field + ": must lie in [0, 1]");
  };
  if (ports.empty()) throw ConfigError("synth.ports: at least one network is required");
  for (int p : ports) {
    if (p < 1) throw ConfigError("synth.ports: every network needs at least one port");
  }
  if (days < static_cast<int>(kWindowDays)) throw ConfigError("synth.days: must be >= 14");
  if (!parse_iso_date(start_date)) throw ConfigError("synth.start_date: not an ISO date");
  fraction("line_port_fraction", line_port_fraction);
  fraction("vocabulary_overlap", vocabulary_overlap);
  fraction("missing_rate", missing_rate);
  fraction("positive_rate", positive_rate);
  fraction("unpredictable_fraction", unpredictable_fraction);
  if (!(false_alarm_ratio >= 0.0)) throw ConfigError("synth.false_alarm_ratio: must be >= 0");
  if (extra_pms < 0) throw ConfigError("synth.extra_pms: must be >= 0");
  if (ramp_min < 1 || ramp_max < ramp_min) {
    throw ConfigError("synth.ramp_min/ramp_max: need 1 <= ramp_min <= ramp_max");
  }
  if (ramp_max + 1 >= days) throw ConfigError("synth.ramp_max: must be shorter than the series");
}

nlohmann::json GenConfig::to_json() const {
  return {{"seed", seed},
          {"ports", ports},
          {"days", days},
          {"start_date", start_date},
          {"line_port_fraction", line_port_fraction},
          {"extra_pms", extra_pms},
          {"vocabulary_overlap", vocabulary_overlap},
          {"missing_rate", missing_rate},
          {"positive_rate", positive_rate},
          {"unpredictable_fraction", unpredictable_fraction},
          {"false_alarm_ratio", false_alarm_ratio},
          {"ramp_min", ramp_min},
          {"ramp_max", ramp_max},
          {"zero_suppression", zero_suppression}};
}

GenConfig GenConfig::from_json(const nlohmann::json& j) {
  GenConfig c;
  c.seed = j.value("seed", c.seed);
  c.ports = j.value("ports", c.ports);
  c.days = j.value("days", c.days);
  c.start_date = j.value("start_date", c.start_date);
  c.line_port_fraction = j.value("line_port_fraction", c.line_port_fraction);
  c.extra_pms = j.value("extra_pms", c.extra_pms);
  c.vocabulary_overlap = j.value("vocabulary_overlap", c.vocabulary_overlap);
  c.missing_rate = j.value("missing_rate", c.missing_rate);
  c.positive_rate = j.value("positive_rate", c.positive_rate);
  c.unpredictable_fraction = j.value("unpredictable_fraction", c.unpredictable_fraction);
  c.false_alarm_ratio = j.value("false_alarm_ratio", c.false_alarm_ratio);
  c.ramp_min = j.value("ramp_min", c.ramp_min);
  c.ramp_max = j.value("ramp_max", c.ramp_max);
  c.zero_suppression = j.value("zero_suppression", c.zero_suppression);
  return c;
}

nlohmann::json NetworkPlan::to_json() const {
  return {{"network_id", network_id},
          {"ports", ports},
          {"line_ports", line_ports},
          {"events", events},
          {"precursor_events", precursor_events},
          {"degrading_ports", degrading_ports},
          {"false_alarms", false_alarms},
          {"structural_missing", structural_missing},
          {"gap_probability", gap_probability},
          {"vocabulary", vocabulary}};
}

std::vector<GeneratedNetwork> generate_records(const GenConfig& config,
                                               std::vector<OutageEvent>* outages, int threads) {
  config.validate();
  const Day start = *parse_iso_date(config.start_date);
  std::vector<GeneratedNetwork> out;
  for (std::size_t n = 0; n < config.ports.size(); ++n) {
    GeneratedNetwork net;
    const auto ports = plan_ports(config, n, net.plan);
    const auto extras = extra_vocabulary(config, n);
    const std::uint64_t net_hash = hash_string(net.plan.network_id);

    std::vector<std::vector<DayRecords>> port_days(ports.size());
    parallel_for(ports.size(), threads, [&](std::size_t p) {
      PortGenerator gen(config, net.plan.network_id, ports[p], extras, start,
                        derive_seed(config.seed, net_hash, p + 1));
      port_days[p] = gen.run();
    });

    std::set<std::string> vocabulary{std::string(kUasName), std::string(kHccsName)};
    std::size_t present = 0;
    for (const auto& days : port_days) {
      for (const auto& day : days) {
        std::set<std::string_view> names;
        for (const auto& r : day.records) {
          vocabulary.insert(r.pm_name);
          names.insert(r.pm_name);
        }
        present += names.size();
      }
    }
    const double cells = static_cast<double>(ports.size()) * config.days *
                         static_cast<double>(vocabulary.size());
    const double structural = 1.0 - static_cast<double>(present) / cells;
    // Kept windows always observe their present day, so gaps hit 6 of the 7
    // input days.
    const double q = (7.0 / 6.0) * (1.0 - (1.0 - config.missing_rate) / (1.0 - structural));
    if (q < 0.0 || q >= 1.0) {
      throw DataError("synth: missing_rate " + std::to_string(config.missing_rate) +
                      " is infeasible for " + net.plan.network_id + " (structural absence " +
                      std::to_string(structural) + ")");
    }
    net.plan.structural_missing = structural;
    net.plan.gap_probability = q;
    net.plan.vocabulary.assign(vocabulary.begin(), vocabulary.end());

    for (std::size_t p = 0; p < ports.size(); ++p) {
      std::mt19937_64 gap_rng(derive_seed(config.seed, net_hash ^ kGapStream, p + 1));
      std::bernoulli_distribution drop(q);
      for (auto& day : port_days[p]) {
        const bool gap = drop(gap_rng);
        if (gap && !day.protected_day) continue;
        for (auto& r : day.records) net.records.push_back(std::move(r));
      }
      if (outages) {
        for (const auto& e : ports[p].events) {
          if (e.benign) continue;
          outages->push_back(
              OutageEvent{net.plan.network_id, ports[p].port_id, start + e.day, e.ramp > 0});
        }
      }
    }
    out.push_back(std::move(net));
  }
  return out;
}

GenResult generate(const GenConfig& config, const std::filesystem::path& out_dir, int threads) {
  GenResult result;
  auto networks = generate_records(config, &result.outages, threads);
  std::filesystem::create_directories(out_dir);
  for (auto& net : networks) {
    const auto path = out_dir / (net.plan.network_id + ".csv");
    write_pm_csv(path, net.records);
    result.pm_files.push_back(path);
    result.plans.push_back(std::move(net.plan));
  }
  result.outage_log = out_dir / "outages.csv";
  write_outage_log(result.outage_log, result.outages);
  return result;
}

nlohmann::json DatasetStats::to_json() const {
  return {{"name", name},
          {"days", days},
          {"ports", ports},
          {"samples", samples},
          {"features", features},
          {"facilities", facilities},
          {"missing_rate", missing_rate},
          {"positive_rate", positive_rate}};
}

DatasetStats dataset_stats(const WindowDataset& ds, std::string name) {
  DatasetStats s;
  s.name = std::move(name);
  s.samples = ds.samples.size();
  s.features = ds.schema.numeric_count();
  s.facilities = ds.schema.onehot_count();
  std::set<std::pair<std::string, std::string>> ports;
  Day first{}, last{};
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& w = ds.samples[i];
    ports.emplace(w.network_id, w.port_id);
    if (i == 0 || w.present_day < first) first = w.present_day;
    if (i == 0 || last < w.present_day) last = w.present_day;
  }
  s.ports = ports.size();
  s.days = ds.samples.empty() ? 0 : (last - first) + static_cast<int>(kWindowDays);
  s.missing_rate = numeric_missing_rate(ds);
  s.positive_rate = positive_rate(ds);
  return s;
}

}  // namespace ilos
