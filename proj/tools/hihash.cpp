// Copyright 2026 The hihash Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// hihash: generate data, train, encode, evaluate and search from one config.
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hihash/commands.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// Turns leftover "--section.key value" / "--section.key=value" arguments into
/// config overrides.
void apply_overrides(hihash::RunConfig& cfg, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0)
      hihash::fail(hihash::ErrorCode::BadConfig, "unexpected argument '" + arg + "'");
    std::string key = arg.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) hihash::fail(hihash::ErrorCode::BadConfig, "override " + arg + " needs a value");
      value = extras[++i];
    }
    cfg.set(key, value);
  }
}

bool is_config_error(hihash::ErrorCode code) {
  return code == hihash::ErrorCode::BadConfig || code == hihash::ErrorCode::BadSpec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchy-preserving binary hashing toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.allow_extras();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> bits;
  std::optional<std::size_t> k;
  std::optional<bool> deterministic;
  bool json = false;
  app.add_option("--config", config_path, "Configuration file (key = value, [section] headers)");
  app.add_option("--seed", seed, "Run seed; every random stream is derived from it");
  app.add_option("--out", out, "Output directory");
  app.add_option("--bits", bits, "Code length L");
  app.add_option("--k", k, "Neighbours for search, cut-off for eval");
  app.add_option("--deterministic", deterministic, "Fixed reduction order (always on; kept for scripting)");
  app.add_flag("--json", json, "Machine-readable JSON on stdout");

  using Command = std::function<nlohmann::json(const hihash::RunConfig&, const hihash::CommandIo&)>;
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"gen-data", "Generate a synthetic hierarchical dataset", hihash::cmd_gen_data},
      {"train", "Train the encoder", hihash::cmd_train},
      {"encode", "Encode datasets into packed code databases", hihash::cmd_encode},
      {"eval", "Compute mAP, mAHP and nDCG", hihash::cmd_eval},
      {"search", "Hamming k-NN lookup", hihash::cmd_search},
  };
  std::map<CLI::App*, Command> handlers;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->allow_extras();
    handlers[sub] = fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  hihash::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = hihash::RunConfig::load(config_path);
    std::vector<std::string> extras = app.remaining();
    for (const auto& e : sub->remaining()) extras.push_back(e);
    apply_overrides(cfg, extras);
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (out) cfg.set("out", *out);
    if (bits) cfg.set("model.bits", std::to_string(*bits));
    if (deterministic) cfg.set("deterministic", *deterministic ? "true" : "false");
    if (k) {
      if (sub->get_name() == "search") cfg.set("search.k", std::to_string(*k));
      if (sub->get_name() == "eval") {
        cfg.set("eval.mahp_k", std::to_string(*k));
        cfg.set("eval.ndcg_k", std::to_string(*k));
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "hihash: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    handlers.at(sub)(cfg, hihash::CommandIo{&std::cout, json});
  } catch (const hihash::Error& e) {
    std::cerr << "hihash " << sub->get_name() << ": " << e.what() << '\n';
    return is_config_error(e.code()) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "hihash " << sub->get_name() << ": " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
