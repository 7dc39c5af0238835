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

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hihash/binary_io.hpp"
#include "hihash/error.hpp"

namespace hihash {

/// Flat key/value configuration. Keys are dotted ("train.lr_start"); a
/// "[train]" header prefixes the keys that follow it. Lines starting with '#'
/// are comments.
class RunConfig {
 public:
  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "seed", "out", "deterministic",
        "data.features", "data.labels", "data.taxonomy", "data.format", "data.query_fraction",
        "synth.class_counts", "synth.dim", "synth.samples_per_leaf", "synth.spreads", "synth.noise",
        "model.hidden", "model.bits", "model.activation", "model.init",
        "loss.alpha", "loss.eta1", "loss.sigma2", "loss.distance",
        "train.lr_start", "train.lr_end", "train.momentum", "train.batch_size", "train.inner_iters",
        "train.max_outer", "train.convergence_tol", "train.stage2_eta1_multiplier", "train.stage2_fraction",
        "train.decay", "train.decay_steps", "train.halt_after", "train.levels", "train.resume",
        "encode.checkpoint", "encode.features", "encode.labels", "encode.taxonomy", "encode.output",
        "eval.queries", "eval.database", "eval.mahp_k", "eval.ndcg_k", "eval.exclude_self", "eval.gain",
        "eval.per_query_csv", "eval.output",
        "search.database", "search.checkpoint", "search.id", "search.feature", "search.k",
    };
    return keys;
  }

  static RunConfig parse(std::string_view text, const std::string& source = "<config>") {
    RunConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string where = source + ":" + std::to_string(lineno);
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      if (t.front() == '[') {
        require(t.back() == ']', ErrorCode::BadConfig, where + ": unterminated section header");
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      require(eq != std::string::npos, ErrorCode::BadConfig, where + ": expected 'key = value'");
      std::string key = trim(t.substr(0, eq));
      if (!section.empty()) key = section + "." + key;
      cfg.set(key, trim(t.substr(eq + 1)));
    }
    return cfg;
  }

  static RunConfig load(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorCode::BadConfig, "config file " + path.string() + " not found");
    return parse(io::read_text(path), path.string());
  }

  void set(const std::string& key, const std::string& value) {
    require(known_keys().count(key) == 1, ErrorCode::BadConfig, "unknown config key '" + key + "'");
    values_[key] = value;
  }

  /// Later entries win.
  void merge(const RunConfig& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  bool has(const std::string& key) const { return values_.count(key) == 1 && !values_.at(key).empty(); }

  std::string str(const std::string& key, const std::string& fallback = "") const {
    return has(key) ? values_.at(key) : fallback;
  }

  double real(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return parse_real(values_.at(key), key);
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string& s = values_.at(key);
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    require(s[0] != '-' && end == s.c_str() + s.size(), ErrorCode::BadConfig,
            key + ": expected a non-negative integer, got '" + s + "'");
    return v;
  }

  std::size_t size(const std::string& key, std::size_t fallback) const {
    return static_cast<std::size_t>(u64(key, fallback));
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    std::string s = values_.at(key);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    fail(ErrorCode::BadConfig, key + ": expected a boolean, got '" + values_.at(key) + "'");
  }

  std::vector<double> reals(const std::string& key, std::vector<double> fallback = {}) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(values_.at(key))) out.push_back(parse_real(item, key));
    return out;
  }

  std::vector<std::size_t> sizes(const std::string& key, std::vector<std::size_t> fallback = {}) const {
    if (!has(key)) return fallback;
    std::vector<std::size_t> out;
    for (const auto& item : split_list(values_.at(key))) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(item.c_str(), &end, 10);
      require(!item.empty() && item[0] != '-' && end == item.c_str() + item.size(), ErrorCode::BadConfig,
              key + ": bad integer '" + item + "'");
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  }

  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

 private:
  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  static double parse_real(const std::string& s, const std::string& key) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    require(!s.empty() && end == s.c_str() + s.size(), ErrorCode::BadConfig, key + ": bad number '" + s + "'");
    return v;
  }

  std::map<std::string, std::string> values_;
};

/// Independent, reproducible sub-seeds derived from the run seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t { kSynthStream = 0, kSplitStream = 1, kInitStream = 2, kShuffleStream = 3 };

}  // namespace hihash
