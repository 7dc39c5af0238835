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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hihash/binary_io.hpp"
#include "hihash/diagnostics.hpp"
#include "hihash/error.hpp"

namespace hihash {

using ClassId = std::uint32_t;

/// Class ids from the finest level (index 0) to the coarsest (index K-1).
using LabelPath = std::vector<ClassId>;

/// A K-level label tree. Level 0 is the leaf level; parents[k][i] is the
/// level k+1 parent of class i at level k. sigma2[k] is the Gaussian width
/// used by the loss at level k and must grow towards the root.
struct LabelTaxonomy {
  std::vector<std::size_t> class_counts;
  std::vector<std::vector<ClassId>> parents;
  std::vector<double> sigma2;
  // Optional; empty means ids are used as names.
  std::vector<std::vector<std::string>> class_names;

  std::size_t levels() const noexcept { return class_counts.size(); }
  std::size_t leaf_count() const noexcept { return class_counts.empty() ? 0 : class_counts.front(); }

  bool operator==(const LabelTaxonomy&) const = default;
};

/// Checks the tree shape only: cardinalities, parent ranges, and that every
/// upper-level class has at least one child.
inline void validate_structure(const LabelTaxonomy& tax) {
  const std::size_t K = tax.levels();
  require(K >= 1, ErrorCode::BadCardinality, "taxonomy needs at least one level");
  require(tax.parents.size() == K - 1, ErrorCode::BadCardinality,
          "expected " + std::to_string(K - 1) + " parent maps, got " + std::to_string(tax.parents.size()));
  for (std::size_t k = 0; k < K; ++k) {
    require(tax.class_counts[k] >= 1, ErrorCode::BadCardinality, "level " + std::to_string(k) + " has no classes");
    if (k + 1 < K) {
      require(tax.class_counts[k + 1] <= tax.class_counts[k], ErrorCode::BadCardinality,
              "level " + std::to_string(k + 1) + " has more classes than level " + std::to_string(k));
    }
  }
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const auto& map = tax.parents[k];
    require(map.size() == tax.class_counts[k], ErrorCode::OrphanClass,
            "level " + std::to_string(k) + " parent map covers " + std::to_string(map.size()) + " of " +
                std::to_string(tax.class_counts[k]) + " classes");
    std::vector<bool> has_child(tax.class_counts[k + 1], false);
    for (std::size_t i = 0; i < map.size(); ++i) {
      require(map[i] < tax.class_counts[k + 1], ErrorCode::OrphanClass,
              "class " + std::to_string(i) + " at level " + std::to_string(k) + " points to missing parent " +
                  std::to_string(map[i]));
      has_child[map[i]] = true;
    }
    for (std::size_t p = 0; p < has_child.size(); ++p) {
      require(has_child[p], ErrorCode::BadCardinality,
              "class " + std::to_string(p) + " at level " + std::to_string(k + 1) + " has no children");
    }
  }
  if (!tax.class_names.empty()) {
    require(tax.class_names.size() == K, ErrorCode::BadCardinality, "class name table does not match level count");
    for (std::size_t k = 0; k < K; ++k) {
      require(tax.class_names[k].size() == tax.class_counts[k], ErrorCode::BadCardinality,
              "class name count mismatch at level " + std::to_string(k));
    }
  }
}

inline void validate_sigma(const std::vector<double>& sigma2, std::size_t levels) {
  require(sigma2.size() == levels, ErrorCode::BadCardinality,
          "need one sigma2 per level (" + std::to_string(levels) + "), got " + std::to_string(sigma2.size()));
  for (std::size_t k = 0; k < sigma2.size(); ++k) {
    require(sigma2[k] > 0.0 && std::isfinite(sigma2[k]), ErrorCode::NonPositiveSigma,
            "sigma2[" + std::to_string(k) + "] must be positive");
    if (k + 1 < sigma2.size()) {
      require(sigma2[k] < sigma2[k + 1], ErrorCode::NonMonotoneSigma,
              "sigma2[" + std::to_string(k) + "] >= sigma2[" + std::to_string(k + 1) + "]");
    }
  }
}

/// Full validation including the sigma schedule. Warns on a degenerate
/// single-class top level, which carries no information for the loss.
inline void validate_taxonomy(const LabelTaxonomy& tax) {
  validate_structure(tax);
  validate_sigma(tax.sigma2, tax.levels());
  if (tax.levels() > 1 && tax.class_counts.back() == 1) {
    warn("top taxonomy level has a single class; strip the root level before training");
  }
}

inline LabelPath expand_label(const LabelTaxonomy& tax, ClassId leaf) {
  require(leaf < tax.leaf_count(), ErrorCode::UnknownClass, "leaf class " + std::to_string(leaf) + " out of range");
  LabelPath path(tax.levels());
  path[0] = leaf;
  for (std::size_t k = 0; k + 1 < tax.levels(); ++k) path[k + 1] = tax.parents[k][path[k]];
  return path;
}

inline bool is_valid_path(const LabelTaxonomy& tax, const LabelPath& path) {
  if (path.size() != tax.levels()) return false;
  for (std::size_t k = 0; k < path.size(); ++k) {
    if (path[k] >= tax.class_counts[k]) return false;
    if (k + 1 < path.size() && tax.parents[k][path[k]] != path[k + 1]) return false;
  }
  return true;
}

inline void require_valid_path(const LabelTaxonomy& tax, const LabelPath& path) {
  require(is_valid_path(tax, path), ErrorCode::InvalidPath, "label path inconsistent with taxonomy");
}

/// Number of levels on which two paths agree. This is the default graded
/// similarity for hierarchical precision and nDCG.
inline std::size_t shared_levels(const LabelPath& a, const LabelPath& b) noexcept {
  const std::size_t n = std::min(a.size(), b.size());
  std::size_t count = 0;
  for (std::size_t k = 0; k < n; ++k) count += (a[k] == b[k]) ? 1 : 0;
  return count;
}

inline std::size_t shared_levels(const LabelTaxonomy& /*tax*/, const LabelPath& a, const LabelPath& b) noexcept {
  return shared_levels(a, b);
}

using SimilarityFn = std::function<double(const LabelPath&, const LabelPath&)>;

inline SimilarityFn shared_levels_similarity() {
  return [](const LabelPath& a, const LabelPath& b) { return static_cast<double>(shared_levels(a, b)); };
}

/// Children of class `parent` at level `level` (level >= 1), ascending.
inline std::vector<ClassId> children_of(const LabelTaxonomy& tax, std::size_t level, ClassId parent) {
  std::vector<ClassId> out;
  const auto& map = tax.parents.at(level - 1);
  for (std::size_t c = 0; c < map.size(); ++c) {
    if (map[c] == parent) out.push_back(static_cast<ClassId>(c));
  }
  return out;
}

/// Keeps the `levels` finest levels. Used to train with fine labels only.
inline LabelTaxonomy truncate_levels(const LabelTaxonomy& tax, std::size_t levels) {
  require(levels >= 1 && levels <= tax.levels(), ErrorCode::BadCardinality, "cannot truncate to " +
                                                                                 std::to_string(levels) + " levels");
  LabelTaxonomy out;
  out.class_counts.assign(tax.class_counts.begin(), tax.class_counts.begin() + static_cast<std::ptrdiff_t>(levels));
  out.parents.assign(tax.parents.begin(), tax.parents.begin() + static_cast<std::ptrdiff_t>(levels - 1));
  if (tax.sigma2.size() >= levels)
    out.sigma2.assign(tax.sigma2.begin(), tax.sigma2.begin() + static_cast<std::ptrdiff_t>(levels));
  if (!tax.class_names.empty())
    out.class_names.assign(tax.class_names.begin(), tax.class_names.begin() + static_cast<std::ptrdiff_t>(levels));
  return out;
}

inline LabelPath truncate_path(const LabelPath& path, std::size_t levels) {
  return LabelPath(path.begin(), path.begin() + static_cast<std::ptrdiff_t>(std::min(levels, path.size())));
}

inline std::string class_name(const LabelTaxonomy& tax, std::size_t level, ClassId id) {
  if (!tax.class_names.empty()) return tax.class_names.at(level).at(id);
  return std::to_string(id);
}

/// Resolves a leaf token: an exact class name wins, otherwise a decimal id.
inline std::optional<ClassId> find_leaf(const LabelTaxonomy& tax, const std::string& token) {
  if (!tax.class_names.empty()) {
    const auto& names = tax.class_names.front();
    auto it = std::find(names.begin(), names.end(), token);
    if (it != names.end()) return static_cast<ClassId>(it - names.begin());
  }
  if (token.empty() || !std::all_of(token.begin(), token.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::nullopt;
  const unsigned long long v = std::stoull(token);
  if (v >= tax.leaf_count()) return std::nullopt;
  return static_cast<ClassId>(v);
}

// JSON layout: {"levels": K, "classes": [[names...] per level],
//               "parents": [[ids...] per level below the top], "sigma2": [...]}
inline nlohmann::json taxonomy_to_json(const LabelTaxonomy& tax) {
  nlohmann::json j;
  j["levels"] = tax.levels();
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t k = 0; k < tax.levels(); ++k) {
    nlohmann::json names = nlohmann::json::array();
    for (std::size_t i = 0; i < tax.class_counts[k]; ++i) names.push_back(class_name(tax, k, static_cast<ClassId>(i)));
    classes.push_back(std::move(names));
  }
  j["classes"] = std::move(classes);
  j["parents"] = tax.parents;
  if (!tax.sigma2.empty()) j["sigma2"] = tax.sigma2;
  return j;
}

inline LabelTaxonomy taxonomy_from_json(const nlohmann::json& j) {
  LabelTaxonomy tax;
  try {
    const auto K = j.at("levels").get<std::size_t>();
    const auto& classes = j.at("classes");
    require(classes.is_array() && classes.size() == K, ErrorCode::BadCardinality,
            "'classes' must list one array per level");
    for (const auto& level : classes) {
      tax.class_names.push_back(level.get<std::vector<std::string>>());
      tax.class_counts.push_back(tax.class_names.back().size());
    }
    if (j.contains("parents")) tax.parents = j.at("parents").get<std::vector<std::vector<ClassId>>>();
    // A trailing empty array for the top level is accepted.
    if (tax.parents.size() == K && !tax.parents.empty() && tax.parents.back().empty()) tax.parents.pop_back();
    if (j.contains("sigma2")) tax.sigma2 = j.at("sigma2").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("taxonomy: ") + e.what());
  }
  validate_structure(tax);
  return tax;
}

inline void save_taxonomy(const LabelTaxonomy& tax, const std::filesystem::path& path) {
  auto out = io::open_out(path);
  out << taxonomy_to_json(tax).dump(2) << '\n';
  require(static_cast<bool>(out), ErrorCode::IoError, "failed writing " + path.string());
}

inline LabelTaxonomy load_taxonomy(const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return taxonomy_from_json(j);
}

}  // namespace hihash
