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
#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hihash/binary_io.hpp"
#include "hihash/diagnostics.hpp"
#include "hihash/error.hpp"
#include "hihash/hierarchy.hpp"
#include "hihash/linalg.hpp"

namespace hihash {

/// Real-valued class centers for every level. levels[k] holds one center per
/// row (C_k x L). Upper levels are always the unweighted mean of their
/// children, never of the samples below them.
struct CenterSet {
  std::vector<RowMatrix> levels;
  std::vector<std::size_t> fine_counts;    // samples per leaf class in the last update
  std::vector<std::uint8_t> initialized;   // leaf class has been seen at least once

  std::size_t level_count() const noexcept { return levels.size(); }
  std::size_t code_length() const noexcept {
    return levels.empty() ? 0 : static_cast<std::size_t>(levels.front().cols());
  }

  bool operator==(const CenterSet& o) const {
    if (levels.size() != o.levels.size() || fine_counts != o.fine_counts || initialized != o.initialized) return false;
    for (std::size_t k = 0; k < levels.size(); ++k) {
      if (levels[k].rows() != o.levels[k].rows() || levels[k].cols() != o.levels[k].cols() || levels[k] != o.levels[k])
        return false;
    }
    return true;
  }
};

inline CenterSet make_center_set(const LabelTaxonomy& tax, std::size_t code_length) {
  CenterSet set;
  for (std::size_t k = 0; k < tax.levels(); ++k)
    set.levels.push_back(RowMatrix::Zero(static_cast<Eigen::Index>(tax.class_counts[k]),
                                         static_cast<Eigen::Index>(code_length)));
  set.fine_counts.assign(tax.leaf_count(), 0);
  set.initialized.assign(tax.leaf_count(), 0);
  return set;
}

/// Sets each leaf center to the mean embedding of its samples. Per class and
/// coordinate the values are summed in sorted order, so the result does not
/// depend on sample order. Classes without samples keep their old center.
inline void update_fine_centers(CenterSet& set, const RowMatrix& embeddings, std::span<const LabelPath> paths) {
  require(!set.levels.empty(), ErrorCode::EmptyCenters, "center set has no levels");
  require(static_cast<std::size_t>(embeddings.rows()) == paths.size(), ErrorCode::DimensionMismatch,
          "embedding count does not match label count");
  require(embeddings.rows() == 0 || static_cast<std::size_t>(embeddings.cols()) == set.code_length(),
          ErrorCode::DimensionMismatch,
          "embedding length " + std::to_string(embeddings.cols()) + " != code length " +
              std::to_string(set.code_length()));
  RowMatrix& fine = set.levels.front();
  const std::size_t C = static_cast<std::size_t>(fine.rows());
  std::vector<std::vector<Eigen::Index>> members(C);
  for (std::size_t n = 0; n < paths.size(); ++n) {
    require(!paths[n].empty() && paths[n][0] < C, ErrorCode::InvalidPath, "sample leaf class out of range");
    members[paths[n][0]].push_back(static_cast<Eigen::Index>(n));
  }
  std::vector<double> column;
  for (std::size_t c = 0; c < C; ++c) {
    set.fine_counts[c] = members[c].size();
    if (members[c].empty()) {
      warn(set.initialized[c] ? "leaf class " + std::to_string(c) + " has no samples; keeping previous center"
                              : "leaf class " + std::to_string(c) + " has never been seen; center stays at zero");
      continue;
    }
    const double inv = 1.0 / static_cast<double>(members[c].size());
    for (Eigen::Index j = 0; j < fine.cols(); ++j) {
      column.clear();
      for (Eigen::Index n : members[c]) column.push_back(embeddings(n, j));
      std::sort(column.begin(), column.end());
      double sum = 0.0;
      for (double v : column) sum += v;
      fine(static_cast<Eigen::Index>(c), j) = sum * inv;
    }
    set.initialized[c] = 1;
  }
}

/// Recomputes every upper level bottom-up: a parent center is the unweighted
/// mean of its child centers.
inline void propagate_upper_centers(CenterSet& set, const LabelTaxonomy& tax) {
  require(set.levels.size() == tax.levels(), ErrorCode::BadCardinality, "center set level count != taxonomy levels");
  for (std::size_t k = 1; k < tax.levels(); ++k) {
    const RowMatrix& below = set.levels[k - 1];
    RowMatrix sums = RowMatrix::Zero(static_cast<Eigen::Index>(tax.class_counts[k]), below.cols());
    std::vector<std::size_t> child_count(tax.class_counts[k], 0);
    for (std::size_t c = 0; c < tax.parents[k - 1].size(); ++c) {
      const ClassId p = tax.parents[k - 1][c];
      sums.row(p) += below.row(static_cast<Eigen::Index>(c));
      ++child_count[p];
    }
    for (std::size_t p = 0; p < child_count.size(); ++p) {
      require(child_count[p] > 0, ErrorCode::OrphanClass,
              "class " + std::to_string(p) + " at level " + std::to_string(k) + " has no children");
      sums.row(static_cast<Eigen::Index>(p)) /= static_cast<double>(child_count[p]);
    }
    set.levels[k] = std::move(sums);
  }
}

/// Largest deviation between a stored upper center and the mean of its
/// children. Zero up to rounding after propagate_upper_centers.
inline double recursive_consistency_error(const CenterSet& set, const LabelTaxonomy& tax) {
  double worst = 0.0;
  for (std::size_t k = 1; k < tax.levels(); ++k) {
    for (std::size_t p = 0; p < tax.class_counts[k]; ++p) {
      const auto kids = children_of(tax, k, static_cast<ClassId>(p));
      Vector mean = Vector::Zero(set.levels[k].cols());
      for (ClassId c : kids) mean += set.levels[k - 1].row(c).transpose();
      mean /= static_cast<double>(kids.size());
      worst = std::max(worst, (mean - set.levels[k].row(static_cast<Eigen::Index>(p)).transpose()).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

/// Elementwise sign of every center, with sign(0) = +1.
inline std::vector<RowMatrix> binarize_centers(const CenterSet& set) {
  std::vector<RowMatrix> out;
  out.reserve(set.levels.size());
  for (const auto& level : set.levels) out.push_back(level.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; }));
  return out;
}

/// Largest L2 movement of any center between two sets of equal shape.
inline double max_center_drift(const CenterSet& before, const CenterSet& after) {
  double worst = 0.0;
  for (std::size_t k = 0; k < std::min(before.levels.size(), after.levels.size()); ++k) {
    if (before.levels[k].rows() != after.levels[k].rows() || before.levels[k].cols() != after.levels[k].cols()) continue;
    worst = std::max(worst, (after.levels[k] - before.levels[k]).rowwise().norm().maxCoeff());
  }
  return worst;
}

/// FNV-1a over the raw bits of every center value.
inline std::uint64_t centers_checksum(const CenterSet& set) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& level : set.levels) {
    for (Eigen::Index i = 0; i < level.size(); ++i) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(level.data()[i]);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 0x100000001b3ull;
      }
    }
  }
  return h;
}

// Snapshot layout: one line of JSON header, then per level C_k x L
// little-endian f64 values in row-major order.
inline void write_centers(std::ostream& out, const CenterSet& set) {
  nlohmann::json header;
  header["format"] = "hihash-centers";
  header["version"] = 1;
  header["levels"] = set.levels.size();
  std::vector<std::size_t> counts;
  for (const auto& l : set.levels) counts.push_back(static_cast<std::size_t>(l.rows()));
  header["class_counts"] = counts;
  header["code_length"] = set.code_length();
  header["fine_counts"] = set.fine_counts;
  header["initialized"] = set.initialized;
  out << header.dump() << '\n';
  io::BinaryWriter w(out);
  for (const auto& level : set.levels) w.f64s(std::span<const double>(level.data(), static_cast<std::size_t>(level.size())));
}

inline CenterSet read_centers(std::istream& in, const std::string& source) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::BadFormat, source + ": missing center header");
  CenterSet set;
  try {
    const auto header = nlohmann::json::parse(line);
    require(header.at("format") == "hihash-centers", ErrorCode::BadFormat, source + ": not a center snapshot");
    const auto counts = header.at("class_counts").get<std::vector<std::size_t>>();
    const auto L = header.at("code_length").get<std::size_t>();
    set.fine_counts = header.at("fine_counts").get<std::vector<std::size_t>>();
    set.initialized = header.at("initialized").get<std::vector<std::uint8_t>>();
    require(header.at("levels").get<std::size_t>() == counts.size(), ErrorCode::BadFormat,
            source + ": level count mismatch");
    for (std::size_t c : counts)
      set.levels.push_back(RowMatrix::Zero(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(L)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, source + ": " + e.what());
  }
  io::BinaryReader r(in, source);
  for (auto& level : set.levels) r.f64s(std::span<double>(level.data(), static_cast<std::size_t>(level.size())));
  return set;
}

inline void save_centers(const CenterSet& set, const std::filesystem::path& path) {
  auto out = io::open_out(path);
  write_centers(out, set);
  require(static_cast<bool>(out), ErrorCode::IoError, "failed writing " + path.string());
}

inline CenterSet load_centers(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  return read_centers(in, path.string());
}

}  // namespace hihash
