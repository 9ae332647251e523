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

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ilos/errors.hpp"
#include "ilos/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumeric = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ILOS forecasting pipeline"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::string> workspace;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;

  std::vector<std::string> commands(ilos::kStages.begin(), ilos::kStages.end());
  commands.emplace_back("all");
  for (const auto& stage : commands) {
    auto* sub = app.add_subcommand(stage, stage == "all" ? "run every applicable stage in order"
                                                         : "run the " + stage + " stage");
    sub->add_option("--config", config_path, "JSON run configuration (comments allowed)")
        ->required();
    sub->add_option("--workspace", workspace, "workspace directory (overrides config and env)");
    sub->add_option("--seed", seed, "master seed (overrides config)");
    sub->add_option("--threads", threads, "worker threads (overrides config and env)")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const std::string stage = app.get_subcommands().front()->get_name();

  try {
    auto config = ilos::RunConfig::load(config_path);
    config.apply_environment();
    if (workspace) config.workspace = *workspace;
    if (seed) {
      config.seed = *seed;
      if (config.synth) config.synth->seed = *seed;
    }
    if (threads) config.threads = *threads;
    ilos::Pipeline pipeline(std::move(config));
    if (stage == "all") {
      pipeline.run_all();
    } else {
      pipeline.run(stage);
    }
    std::cout << stage << ": ok (" << pipeline.workspace().string() << ")\n";
    return kExitOk;
  } catch (const ilos::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ilos::MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kExitMissing;
  } catch (const ilos::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << stage << " failed: " << e.what() << '\n';
    return kExitFailure;
  }
}
