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

#include "ilos/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ilos/errors.hpp"
#include "ilos/hash.hpp"
#include "ilos/ingest.hpp"
#include "ilos/missing_data.hpp"
#include "ilos/transfer.hpp"
#include "ilos/util.hpp"

namespace ilos {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <class T>
T field(const json& j, const std::string& path, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + key + ": wrong type");
  }
}

template <class T, class Fn>
T section(const json& j, const char* key, Fn&& parse, T fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_object()) throw ConfigError(std::string(key) + ": expected an object");
  try {
    return parse(j.at(key));
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.starts_with(key)) throw;
    throw ConfigError(std::string(key) + "." + what);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return (base / p).lexically_normal();
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("cannot read " + path.string());
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

TrainSchedule BritsSettings::schedule(std::uint64_t seed) const {
  TrainSchedule s;
  s.learning_rate = learning_rate;
  s.batch_size = batch_size;
  s.phase1_max_epochs = phase1_max_epochs;
  s.phase2_max_epochs = phase2_max_epochs;
  s.patience = patience;
  s.min_delta = min_delta;
  s.max_steps = max_steps;
  s.seed = seed;
  return s;
}

void RunConfig::validate() const {
  if (threads < 1) throw ConfigError("threads: must be >= 1");
  if (workspace.empty()) throw ConfigError("workspace: must not be empty");
  std::set<std::string> nets;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto p = "inputs[" + std::to_string(i) + "]";
    if (inputs[i].network.empty()) throw ConfigError(p + ".network: must not be empty");
    if (inputs[i].network.find('/') != std::string::npos) {
      throw ConfigError(p + ".network: must not contain '/'");
    }
    if (inputs[i].path.empty()) throw ConfigError(p + ".path: must not be empty");
    if (!nets.insert(inputs[i].network).second) {
      throw ConfigError(p + ".network: duplicate network '" + inputs[i].network + "'");
    }
  }
  if (synth) synth->validate();
  if (models.empty()) throw ConfigError("models: at least one model is required");
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (std::find(kModelKinds.begin(), kModelKinds.end(), models[i]) == kModelKinds.end()) {
      throw ConfigError("models[" + std::to_string(i) + "]: unknown model '" + models[i] + "'");
    }
  }
  try {
    (void)tree_grid(grid_first, grid_last, grid_step);
  } catch (const ConfigError&) {
    throw ConfigError("grid: need 1 <= first <= last and step >= 1");
  }
  try {
    forest.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("forest: ") + e.what());
  }
  try {
    booster.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("booster: ") + e.what());
  }
  if (brits.hidden < 1) throw ConfigError("brits.hidden: must be >= 1");
  if (brits.batch_size < 1) throw ConfigError("brits.batch_size: must be >= 1");
  if (!(brits.learning_rate > 0.0)) throw ConfigError("brits.learning_rate: must be > 0");
  if (brits.phase1_max_epochs < 0) throw ConfigError("brits.phase1_max_epochs: must be >= 0");
  if (brits.phase2_max_epochs < 0) throw ConfigError("brits.phase2_max_epochs: must be >= 0");
  if (brits.patience < 1) throw ConfigError("brits.patience: must be >= 1");
  if (brits.min_delta < 0.0) throw ConfigError("brits.min_delta: must be >= 0");
  for (std::size_t i = 0; i < finetune_strategies.size(); ++i) {
    try {
      (void)parse_strategy(finetune_strategies[i]);
    } catch (const ConfigError&) {
      throw ConfigError("transfer.strategies[" + std::to_string(i) + "]: unknown strategy '" +
                        finetune_strategies[i] + "'");
    }
  }
  if (!(recall_cap > 0.0 && recall_cap <= 1.0)) {
    throw ConfigError("evaluation.recall_cap: must lie in (0, 1]");
  }
  std::set<std::string> filter_names;
  for (std::size_t i = 0; i < facility_filters.size(); ++i) {
    if (facility_filters[i].name.empty() || !filter_names.insert(facility_filters[i].name).second) {
      throw ConfigError("evaluation.facility_filters[" + std::to_string(i) +
                        "].name: must be non-empty and unique");
    }
  }
  if (inputs.empty() && !synth) throw ConfigError("inputs: no input files and no synth section");
}

std::vector<int> RunConfig::grid() const { return tree_grid(grid_first, grid_last, grid_step); }

json RunConfig::to_json() const {
  json in = json::array();
  for (const auto& i : inputs) in.push_back({{"network", i.network}, {"path", i.path.string()}});
  json filters = json::array();
  for (const auto& f : facility_filters) filters.push_back(f.to_json());
  json j{{"seed", seed},
         {"workspace", workspace.string()},
         {"threads", threads},
         {"inputs", in},
         {"outage_log", outage_log.string()},
         {"schema", {{"protocol_indicators", protocol_indicators}}},
         {"window", {{"input_days", kInputDays}, {"future_days", kFutureDays}}},
         {"models", models},
         {"train", {{"networks", train_networks}}},
         {"grid", {{"first", grid_first}, {"last", grid_last}, {"step", grid_step}}},
         {"forest", forest.to_json()},
         {"booster", booster.to_json()},
         {"brits",
          {{"hidden", brits.hidden},
           {"batch_size", brits.batch_size},
           {"learning_rate", brits.learning_rate},
           {"phase1_max_epochs", brits.phase1_max_epochs},
           {"phase2_max_epochs", brits.phase2_max_epochs},
           {"patience", brits.patience},
           {"min_delta", brits.min_delta},
           {"max_steps", brits.max_steps}}},
         {"transfer", {{"strategies", finetune_strategies}}},
         {"evaluation",
          {{"recall_cap", recall_cap}, {"facility_filters", filters}, {"plots", plots}}}};
  if (synth) j["synth"] = synth->to_json();
  return j;
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  static const std::set<std::string> known = {
      "seed",  "workspace", "threads", "inputs", "outage_log", "synth",    "schema",    "window",
      "models", "train",    "grid",    "forest", "booster",    "brits",    "transfer",  "evaluation"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError(key + ": unknown field");
  }
  RunConfig c;
  if (!j.contains("seed")) throw ConfigError("seed: required");
  c.seed = field<std::uint64_t>(j, "", "seed", 0);
  c.workspace = resolve(base_dir, field<std::string>(j, "", "workspace", c.workspace.string()));
  c.threads = field<int>(j, "", "threads", c.threads);
  if (j.contains("inputs")) {
    if (!j.at("inputs").is_array()) throw ConfigError("inputs: expected an array");
    for (std::size_t i = 0; i < j.at("inputs").size(); ++i) {
      const auto& e = j.at("inputs")[i];
      const auto p = "inputs[" + std::to_string(i) + "].";
      if (!e.is_object()) throw ConfigError(p.substr(0, p.size() - 1) + ": expected an object");
      c.inputs.push_back(InputSpec{field<std::string>(e, p, "network", ""),
                                   resolve(base_dir, field<std::string>(e, p, "path", ""))});
    }
  }
  c.outage_log = resolve(base_dir, field<std::string>(j, "", "outage_log", ""));
  if (j.contains("synth")) {
    c.synth = section<GenConfig>(j, "synth", [&](const json& s) {
      auto g = GenConfig::from_json(s);
      if (!s.contains("seed")) g.seed = c.seed;
      return g;
    }, GenConfig{});
  }
  c.protocol_indicators = section<std::vector<std::string>>(j, "schema", [&](const json& s) {
    return field<std::vector<std::string>>(s, "schema.", "protocol_indicators", c.protocol_indicators);
  }, c.protocol_indicators);
  if (j.contains("window")) {
    const auto& w = j.at("window");
    if (field<std::size_t>(w, "window.", "input_days", kInputDays) != kInputDays) {
      throw ConfigError("window.input_days: only 7 input days are supported");
    }
    if (field<std::size_t>(w, "window.", "future_days", kFutureDays) != kFutureDays) {
      throw ConfigError("window.future_days: only 7 future days are supported");
    }
  }
  c.models = field<std::vector<std::string>>(j, "", "models", c.models);
  c.train_networks = section<std::vector<std::string>>(j, "train", [&](const json& s) {
    return field<std::vector<std::string>>(s, "train.", "networks", {});
  }, {});
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    c.grid_first = field<int>(g, "grid.", "first", c.grid_first);
    c.grid_last = field<int>(g, "grid.", "last", c.grid_last);
    c.grid_step = field<int>(g, "grid.", "step", c.grid_step);
  }
  c.forest = section<ForestConfig>(j, "forest", [](const json& s) { return ForestConfig::from_json(s); }, c.forest);
  c.booster = section<BoosterConfig>(j, "booster", [](const json& s) { return BoosterConfig::from_json(s); }, c.booster);
  if (j.contains("brits")) {
    const auto& b = j.at("brits");
    auto& s = c.brits;
    s.hidden = field<int>(b, "brits.", "hidden", s.hidden);
    s.batch_size = field<int>(b, "brits.", "batch_size", s.batch_size);
    s.learning_rate = field<double>(b, "brits.", "learning_rate", s.learning_rate);
    s.phase1_max_epochs = field<int>(b, "brits.", "phase1_max_epochs", s.phase1_max_epochs);
    s.phase2_max_epochs = field<int>(b, "brits.", "phase2_max_epochs", s.phase2_max_epochs);
    s.patience = field<int>(b, "brits.", "patience", s.patience);
    s.min_delta = field<double>(b, "brits.", "min_delta", s.min_delta);
    s.max_steps = field<long>(b, "brits.", "max_steps", s.max_steps);
  }
  c.finetune_strategies = section<std::vector<std::string>>(j, "transfer", [&](const json& s) {
    return field<std::vector<std::string>>(s, "transfer.", "strategies", c.finetune_strategies);
  }, c.finetune_strategies);
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    c.recall_cap = field<double>(e, "evaluation.", "recall_cap", c.recall_cap);
    c.plots = field<bool>(e, "evaluation.", "plots", c.plots);
    if (e.contains("facility_filters")) {
      for (std::size_t i = 0; i < e.at("facility_filters").size(); ++i) {
        try {
          c.facility_filters.push_back(FacilityFilter::from_json(e.at("facility_filters")[i]));
        } catch (const json::exception&) {
          throw ConfigError("evaluation.facility_filters[" + std::to_string(i) +
                            "]: needs a name and optional include/exclude lists");
        }
      }
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

void RunConfig::apply_environment() {
  if (const char* ws = std::getenv("ILOS_WORKSPACE"); ws && *ws) workspace = fs::absolute(ws);
  if (const char* th = std::getenv("ILOS_THREADS"); th && *th) {
    try {
      threads = std::stoi(th);
    } catch (const std::exception&) {
      throw ConfigError("ILOS_THREADS: not an integer");
    }
    if (threads < 1) throw ConfigError("ILOS_THREADS: must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// Run log

struct Pipeline::StageLog {
  const Pipeline& owner;
  std::string stage;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  json inputs = json::array();
  json outputs = json::array();
  json details = json::object();

  void input(const fs::path& p) { inputs.push_back({{"path", rel(p)}, {"sha256", sha256_file(p)}}); }
  void output(const fs::path& p) { outputs.push_back({{"path", rel(p)}, {"sha256", sha256_file(p)}}); }
  std::string rel(const fs::path& p) const {
    const auto r = p.lexically_relative(owner.workspace());
    return (r.empty() || r.native().starts_with("..")) ? p.string() : r.string();
  }
  void write(const std::string& status, const std::string& error = {}) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json line{{"stage", stage},         {"status", status}, {"duration_s", secs},
              {"inputs", inputs},       {"outputs", outputs}, {"details", details}};
    if (!error.empty()) line["error"] = error;
    fs::create_directories(owner.workspace());
    std::ofstream out(owner.workspace() / "run_log.jsonl", std::ios::app);
    out << line.dump() << '\n';
  }
};

// ---------------------------------------------------------------------------
// Workspace layout

namespace {

fs::path raw_dir(const fs::path& ws) { return ws / "raw"; }

// Settings that change results. Locations and thread count are left out
// so reruns in another workspace hash the same.
json config_identity(const RunConfig& c) {
  json j = c.to_json();
  j.erase("workspace");
  j.erase("threads");
  for (auto& in : j["inputs"]) in["path"] = fs::path(in["path"].get<std::string>()).filename().string();
  j["outage_log"] = fs::path(j["outage_log"].get<std::string>()).filename().string();
  return j;
}
fs::path series_path(const fs::path& ws, const std::string& net) { return ws / "series" / (net + ".ilos"); }
fs::path windows_path(const fs::path& ws, const std::string& net) { return ws / "windows" / (net + ".ilos"); }
fs::path mega_path(const fs::path& ws) { return ws / "windows" / "mega.ilos"; }
fs::path model_dir(const fs::path& ws, const std::string& scope) { return ws / "models" / scope; }
fs::path model_file(const fs::path& dir, const std::string& kind) {
  return dir / (kind == "brits" ? "brits.ilos" : kind + ".json");
}
fs::path meta_file(const fs::path& dir, const std::string& kind) { return dir / (kind + ".meta.json"); }
fs::path scores_path(const fs::path& ws) { return ws / "eval" / "scores.json"; }

TreeInputMode tree_mode(const std::string& kind) {
  if (kind == "rf_zero") return TreeInputMode::kZero;
  if (kind == "rf_median") return TreeInputMode::kMedian;
  return TreeInputMode::kSparse;
}

std::vector<std::uint8_t> labels_of(const WindowDataset& ds, std::span<const std::size_t> idx) {
  std::vector<std::uint8_t> l;
  l.reserve(idx.size());
  for (auto i : idx) l.push_back(ds.samples[i].label);
  return l;
}

// z-scored copies of the listed samples, in idx order.
std::vector<WindowSample> normalised(const WindowDataset& ds, std::span<const std::size_t> idx) {
  std::vector<WindowSample> out;
  out.reserve(idx.size());
  for (auto i : idx) {
    out.push_back(ds.samples[i]);
    zscore_apply(out.back(), ds.norm);
  }
  return out;
}

SequenceSet as_sequences(const std::vector<WindowSample>& samples) {
  SequenceSet s;
  for (const auto& w : samples) s.samples.push_back(&w);
  return s;
}

json medians_json(const Medians& m) { return {{"value", m.value}, {"fallback", m.fallback}}; }
Medians medians_from_json(const json& j) {
  return Medians{j.at("value").get<std::vector<double>>(),
                 j.at("fallback").get<std::vector<std::uint8_t>>()};
}

std::uint64_t scope_seed(std::uint64_t seed, const std::string& kind, const std::string& scope) {
  return derive_seed(seed, hash_string(kind), hash_string(scope));
}

struct TrainContext {
  const RunConfig& config;
  const WindowDataset& ds;
  std::string scope;
  fs::path dir;
};

json train_one(const TrainContext& ctx, const std::string& kind) {
  const auto train_idx = ctx.ds.indices(Split::kTrain);
  const auto val_idx = ctx.ds.indices(Split::kValidation);
  const auto train_labels = labels_of(ctx.ds, train_idx);
  const auto val_labels = labels_of(ctx.ds, val_idx);
  const std::uint64_t seed = scope_seed(ctx.config.seed, kind, ctx.scope);
  fs::create_directories(ctx.dir);
  json meta{{"kind", kind}, {"scope", ctx.scope}, {"input_width", ctx.ds.schema.width()}};

  if (kind == "brits") {
    const auto train = normalised(ctx.ds, train_idx);
    const auto val = normalised(ctx.ds, val_idx);
    auto model = BritsModel::init(static_cast<int>(ctx.ds.schema.width()), ctx.config.brits.hidden,
                                  seed);
    const auto history =
        train_brits(model, as_sequences(train), as_sequences(val), ctx.config.brits.schedule(seed));
    model.save(model_file(ctx.dir, kind));
    history.write_csv(ctx.dir / "brits_history.csv");
    meta["epochs"] = history.epochs.size();
    meta["steps"] = history.steps;
    meta["hidden"] = ctx.config.brits.hidden;
    return meta;
  }

  const auto mode = tree_mode(kind);
  Medians medians;
  if (mode == TreeInputMode::kMedian) {
    std::vector<const WindowSample*> ptrs;
    for (auto i : train_idx) ptrs.push_back(&ctx.ds.samples[i]);
    medians = compute_medians(ptrs, ctx.ds.schema.width());
    meta["medians"] = medians_json(medians);
  }
  const auto train_rows = flatten_samples(ctx.ds.samples, train_idx, mode, &medians);
  const auto val_rows = flatten_samples(ctx.ds.samples, val_idx, mode, &medians);
  const auto grid = ctx.config.grid();
  const double cap = ctx.config.recall_cap;
  const ScoreMetric metric = [cap](std::span<const double> s, std::span<const std::uint8_t> l) {
    return truncated_score(s, l, cap);
  };
  GridResult result;
  if (kind == "gbdt") {
    auto cfg = ctx.config.booster;
    cfg.seed = seed;
    result = grid_search_gbdt(train_rows, train_labels, val_rows, val_labels, grid, cfg, metric);
  } else {
    auto cfg = ctx.config.forest;
    cfg.seed = seed;
    cfg.threads = ctx.config.threads;
    result = grid_search_forest(train_rows, train_labels, val_rows, val_labels, grid, cfg, metric);
  }
  result.best.save(model_file(ctx.dir, kind));
  json points = json::array();
  for (const auto& p : result.points) points.push_back({{"trees", p.trees}, {"validation_D", p.score}});
  meta["grid"] = points;
  meta["trees"] = result.best.trees.size();
  return meta;
}

// Scores for every sample of ds listed in idx; other entries stay 0.
std::vector<double> predict(const fs::path& dir, const std::string& kind, const json& meta,
                            const WindowDataset& ds, std::span<const std::size_t> idx) {
  std::vector<double> scores(ds.samples.size(), 0.0);
  if (idx.empty()) return scores;
  std::vector<double> out;
  if (kind == "brits") {
    const auto model = BritsModel::load(model_file(dir, kind));
    const auto samples = normalised(ds, idx);
    out = brits_predict(model, as_sequences(samples));
  } else {
    const auto model = TreeEnsemble::load(model_file(dir, kind));
    const auto mode = tree_mode(kind);
    Medians medians;
    if (mode == TreeInputMode::kMedian) medians = medians_from_json(meta.at("medians"));
    out = model.predict_proba(flatten_samples(ds.samples, idx, mode, &medians));
  }
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (!std::isfinite(out[k])) throw NumericError("non-finite score from " + kind + " model");
    scores[idx[k]] = out[k];
  }
  return scores;
}

std::string slug(std::string s) {
  for (auto& ch : s) {
    if (ch == '/' || ch == ' ') ch = '_';
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)) {
  config_.validate();
  config_.workspace = fs::absolute(config_.workspace);
}

fs::path Pipeline::report_path() const { return workspace() / "report.json"; }

std::vector<InputSpec> Pipeline::effective_inputs() const {
  if (!config_.inputs.empty()) return config_.inputs;
  std::vector<InputSpec> out;
  for (std::size_t k = 0; k < config_.synth->ports.size(); ++k) {
    const auto net = GenConfig::network_id(k);
    out.push_back(InputSpec{net, raw_dir(workspace()) / (net + ".csv")});
  }
  return out;
}

std::vector<std::string> Pipeline::networks() const {
  std::vector<std::string> out;
  for (const auto& i : effective_inputs()) out.push_back(i.network);
  return out;
}

fs::path Pipeline::require(const fs::path& p, std::string_view stage) const {
  if (!fs::exists(p)) {
    throw MissingArtifact("missing artifact " + p.string() + " (run the '" + std::string(stage) +
                          "' stage first)");
  }
  return p;
}

void Pipeline::run(std::string_view stage) {
  if (stage == "synth") return synth();
  if (stage == "ingest") return ingest();
  if (stage == "build") return build();
  if (stage == "train") return train();
  if (stage == "pretrain") return pretrain();
  if (stage == "finetune") return finetune();
  if (stage == "evaluate") return evaluate();
  if (stage == "report") return report();
  throw ConfigError("unknown stage '" + std::string(stage) + "'");
}

void Pipeline::run_all() {
  for (auto s : kStages) {
    if (s == "synth" && !config_.synth) continue;
    if ((s == "pretrain" || s == "finetune") && networks().size() < 2) continue;
    run(s);
  }
}

void Pipeline::run_stage(std::string_view name, const std::function<void(StageLog&)>& body) {
  StageLog log{*this, std::string(name)};
  try {
    body(log);
  } catch (const std::exception& e) {
    log.write("failed", e.what());
    throw;
  }
  log.write("ok");
}

void Pipeline::synth() {
  run_stage("synth", [&](StageLog& log) {
    if (!config_.synth) throw ConfigError("synth: no synth section in the config");
    const auto result = generate(*config_.synth, raw_dir(workspace()), config_.threads);
    json plans = json::array();
    for (const auto& p : result.plans) plans.push_back(p.to_json());
    write_json_file(raw_dir(workspace()) / "synth_manifest.json",
                    {{"config", config_.synth->to_json()}, {"networks", plans}});
    for (const auto& f : result.pm_files) log.output(f);
    log.output(result.outage_log);
    log.details["networks"] = plans;
  });
}

void Pipeline::ingest() {
  run_stage("ingest", [&](StageLog& log) {
    for (const auto& in : effective_inputs()) {
      require(in.path, config_.inputs.empty() ? "synth" : "inputs");
      log.input(in.path);
      const auto records = parse_pm_csv(in.path);
      for (const auto& r : records) {
        if (r.network_id != in.network) {
          throw DataError(in.path.string() + ": record for network '" + r.network_id +
                          "' in the input of network '" + in.network + "'");
        }
      }
      SeriesSet set;
      set.schema = build_schema(records, config_.protocol_indicators);
      set.series = merge_to_port_level(records, set.schema);
      const auto out = series_path(workspace(), in.network);
      write_series(out, set);
      log.output(out);
      log.details[in.network] = {{"records", records.size()},
                                 {"ports", set.series.size()},
                                 {"numeric_features", set.schema.numeric_count()}};
    }
  });
}

void Pipeline::build() {
  run_stage("build", [&](StageLog& log) {
    std::vector<WindowDataset> datasets;
    json stats = json::array();
    for (const auto& net : networks()) {
      const auto in = require(series_path(workspace(), net), "ingest");
      log.input(in);
      auto built = build_window_dataset(read_series(in));
      const auto out = windows_path(workspace(), net);
      write_windows(out, built.dataset, {{"source_sha256", sha256_file(in)}});
      const auto audit = workspace() / "windows" / (net + "_audit.csv");
      write_audit_csv(audit, built.audit);
      log.output(out);
      log.output(audit);
      stats.push_back(dataset_stats(built.dataset, net).to_json());
      datasets.push_back(std::move(built.dataset));
    }
    if (datasets.size() >= 2) {
      const auto mega = build_mega_dataset(datasets);
      write_windows(mega_path(workspace()), mega.data, {{"mega", true}});
      write_json_file(workspace() / "windows" / "mega_manifest.json", mega.manifest());
      log.output(mega_path(workspace()));
      stats.push_back(dataset_stats(mega.data, "mega").to_json());
    }
    write_json_file(workspace() / "windows" / "stats.json", stats);
    log.details["stats"] = stats;
  });
}

void Pipeline::train() {
  run_stage("train", [&](StageLog& log) {
    auto scope_nets = config_.train_networks.empty() ? networks() : config_.train_networks;
    for (const auto& net : scope_nets) {
      const auto all = networks();
      if (std::find(all.begin(), all.end(), net) == all.end()) {
        throw ConfigError("train.networks: unknown network '" + net + "'");
      }
      const auto in = require(windows_path(workspace(), net), "build");
      log.input(in);
      const auto ds = read_windows(in);
      const auto dir = model_dir(workspace(), "single/" + net);
      for (const auto& kind : config_.models) {
        auto meta = train_one(TrainContext{config_, ds, "single/" + net, dir}, kind);
        meta["inputs"] = {{"windows", sha256_file(in)}};
        write_json_file(meta_file(dir, kind), meta);
        log.output(model_file(dir, kind));
        log.details[net + "/" + kind] = meta.value("trees", meta.value("epochs", json()));
      }
    }
  });
}

void Pipeline::pretrain() {
  run_stage("pretrain", [&](StageLog& log) {
    const auto in = require(mega_path(workspace()), "build");
    log.input(in);
    const auto ds = read_windows(in);
    const auto dir = model_dir(workspace(), "mega");
    for (const auto& kind : config_.models) {
      auto meta = train_one(TrainContext{config_, ds, "mega", dir}, kind);
      meta["inputs"] = {{"windows", sha256_file(in)}};
      write_json_file(meta_file(dir, kind), meta);
      log.output(model_file(dir, kind));
    }
  });
}

void Pipeline::finetune() {
  run_stage("finetune", [&](StageLog& log) {
    if (std::find(config_.models.begin(), config_.models.end(), "brits") == config_.models.end()) {
      log.details["skipped"] = "brits not among the configured models";
    } else {
      const auto in = require(mega_path(workspace()), "build");
      const auto parent = require(model_file(model_dir(workspace(), "mega"), "brits"), "pretrain");
      log.input(in);
      log.input(parent);
      const auto ds = read_windows(in);
      const auto pretrained = BritsModel::load(parent);
      const auto parent_hash = sha256_file(parent);
      for (const auto& net : networks()) {
        const auto train = normalised(ds, ds.indices(Split::kTrain, net));
        const auto val = normalised(ds, ds.indices(Split::kValidation, net));
        for (const auto& name : config_.finetune_strategies) {
          const auto strategy = parse_strategy(name);
          const auto dir = model_dir(workspace(), "finetune-" + name + "/" + net);
          fs::create_directories(dir);
          TrainHistory history;
          const auto model = ilos::finetune(
              pretrained, as_sequences(train), as_sequences(val), strategy,
              config_.brits.schedule(scope_seed(config_.seed, "finetune-" + name, net)), &history);
          model.save(model_file(dir, "brits"));
          history.write_csv(dir / "brits_history.csv");
          write_json_file(meta_file(dir, "brits"),
                          {{"kind", "brits"},
                           {"scope", "finetune-" + name + "/" + net},
                           {"strategy", name},
                           {"parent_sha256", parent_hash},
                           {"epochs", history.epochs.size()},
                           {"steps", history.steps},
                           {"inputs", {{"windows", sha256_file(in)}}}});
          log.output(model_file(dir, "brits"));
        }
      }
    }
  });
}

void Pipeline::evaluate() {
  run_stage("evaluate", [&](StageLog& log) {
    const double cap = config_.recall_cap;
    json entries = json::array();
    bool any_model = false;
    const auto curves_dir = workspace() / "eval" / "curves";

    std::vector<OutageEvent> outages;
    fs::path outage_path = config_.outage_log;
    if (outage_path.empty() && config_.synth) outage_path = raw_dir(workspace()) / "outages.csv";
    if (!outage_path.empty() && fs::exists(outage_path)) {
      log.input(outage_path);
      outages = read_outage_log(outage_path);
    }

    auto record = [&](const std::string& model, const std::string& training,
                      const std::string& network, const std::string& subset,
                      const std::vector<double>& scores, const WindowDataset& ds,
                      const std::vector<std::size_t>& idx) {
      const std::string name = model + "/" + training + "/" + network + "/" + subset;
      SubsetScore s;
      try {
        s = score_subset(name, scores, ds.samples, idx, cap);
      } catch (const DataError& e) {
        json skipped{{"model", model}, {"training", training}, {"network", network},
                     {"subset", subset}, {"skipped", e.what()}};
        entries.push_back(skipped);
        return;
      }
      write_curve_csv(curves_dir / (slug(name) + ".csv"), s.curve);
      entries.push_back({{"model", model},
                         {"training", training},
                         {"network", network},
                         {"subset", subset},
                         {"samples", s.samples},
                         {"positives", s.positives},
                         {"D", s.score}});
    };

    // Single-network models on their own test split.
    for (const auto& net : networks()) {
      const auto wpath = windows_path(workspace(), net);
      std::optional<WindowDataset> ds;
      for (const auto& kind : config_.models) {
        const auto dir = model_dir(workspace(), "single/" + net);
        if (!fs::exists(model_file(dir, kind))) continue;
        if (!ds) {
          log.input(require(wpath, "build"));
          ds = read_windows(wpath);
        }
        any_model = true;
        log.input(model_file(dir, kind));
        const auto idx = ds->indices(Split::kTest);
        const auto scores = predict(dir, kind, read_json_file(meta_file(dir, kind)), *ds, idx);
        record(kind, "single", net, "test", scores, *ds, idx);
      }
    }

    // Mega-trained and fine-tuned models on the mega test split.
    if (fs::exists(mega_path(workspace()))) {
      std::optional<WindowDataset> mega;
      auto load_mega = [&]() -> const WindowDataset& {
        if (!mega) {
          log.input(mega_path(workspace()));
          mega = read_windows(mega_path(workspace()));
        }
        return *mega;
      };
      for (const auto& kind : config_.models) {
        const auto dir = model_dir(workspace(), "mega");
        if (!fs::exists(model_file(dir, kind))) continue;
        any_model = true;
        const auto& ds = load_mega();
        log.input(model_file(dir, kind));
        const auto idx = ds.indices(Split::kTest);
        const auto scores = predict(dir, kind, read_json_file(meta_file(dir, kind)), ds, idx);
        record(kind, "mega", "all", "test", scores, ds, idx);
        if (!outages.empty()) {
          record(kind, "mega", "all", "precursor_only", scores, ds,
                 precursor_only(ds.samples, idx, outages));
        }
        for (const auto& f : config_.facility_filters) {
          record(kind, "mega", "all", "facility:" + f.name, scores, ds,
                 filter_indices(ds.samples, idx, ds.schema, f));
        }
        for (const auto& net : ds.networks) {
          record(kind, "mega", net, "test", scores, ds, ds.indices(Split::kTest, net));
        }
      }
      for (const auto& name : config_.finetune_strategies) {
        for (const auto& net : networks()) {
          const auto dir = model_dir(workspace(), "finetune-" + name + "/" + net);
          if (!fs::exists(model_file(dir, "brits"))) continue;
          const auto& ds = load_mega();
          log.input(model_file(dir, "brits"));
          const auto idx = ds.indices(Split::kTest, net);
          const auto scores = predict(dir, "brits", json::object(), ds, idx);
          record("brits", "finetune-" + name, net, "test", scores, ds, idx);
        }
      }
    }
    if (!any_model) {
      throw MissingArtifact("no trained model artifact under " + (workspace() / "models").string() +
                            " (run the 'train' or 'pretrain' stage first)");
    }
    write_json_file(scores_path(workspace()), {{"recall_cap", cap}, {"entries", entries}});
    log.output(scores_path(workspace()));
  });
}

void Pipeline::report() {
  run_stage("report", [&](StageLog& log) {
    const auto in = require(scores_path(workspace()), "evaluate");
    log.input(in);
    const auto scores = read_json_file(in);
    json variants = json::object();
    json mega_test = json::object();
    json precursor = json::object();
    json facility = json::object();
    std::map<std::string, std::vector<NamedCurve>> plots;
    for (const auto& e : scores.at("entries")) {
      if (e.contains("skipped")) continue;
      const std::string variant =
          e.at("model").get<std::string>() + "/" + e.at("training").get<std::string>();
      const std::string net = e.at("network");
      const std::string subset = e.at("subset");
      const double d = e.at("D");
      if (net == "all" && subset == "test") {
        mega_test[variant] = d;
      } else if (net == "all" && subset == "precursor_only") {
        precursor[variant] = d;
      } else if (net == "all" && subset.starts_with("facility:")) {
        facility[variant][subset.substr(9)] = d;
      } else if (subset == "test") {
        variants[variant]["per_network"][net] = d;
        variants[variant]["test_sizes"][net] = e.at("samples");
      }
      if (config_.plots && subset == "test") {
        const std::string name = variant + "/" + net + "/" + subset;
        const auto curve_csv = workspace() / "eval" / "curves" / (slug(name) + ".csv");
        std::ifstream cin(curve_csv);
        PrCurve curve;
        std::string line;
        std::getline(cin, line);
        while (std::getline(cin, line)) {
          std::stringstream ss(line);
          PrPoint p;
          char comma;
          ss >> p.threshold >> comma >> p.precision >> comma >> p.recall;
          curve.points.push_back(p);
        }
        plots[net].push_back(NamedCurve{variant, std::move(curve)});
      }
    }
    for (auto& [variant, v] : variants.items()) {
      std::vector<double> d;
      std::vector<std::size_t> n;
      for (auto& [net, score] : v["per_network"].items()) {
        d.push_back(score.get<double>());
        n.push_back(v["test_sizes"][net].get<std::size_t>());
      }
      v["weighted_average"] = weighted_average(d, n);
    }
    json report{{"recall_cap", scores.at("recall_cap")},
                {"networks", networks()},
                {"models", variants},
                {"mega_test", mega_test},
                {"precursor_only", precursor},
                {"facility_subsets", facility},
                {"lineage", {{"scores_sha256", sha256_file(in)},
                             {"config_sha256", sha256_hex(config_identity(config_).dump())}}}};
    write_json_file(report_path(), report);
    log.output(report_path());
    if (config_.plots) {
      for (const auto& [net, curves] : plots) {
        const auto svg = workspace() / "report" / ("pr_" + slug(net) + ".svg");
        write_pr_svg(svg, curves, "Precision vs recall, " + net + " test split");
        log.output(svg);
      }
    }
  });
}

}  // namespace ilos
