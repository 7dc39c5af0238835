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
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hihash/binary_io.hpp"
#include "hihash/diagnostics.hpp"
#include "hihash/error.hpp"
#include "hihash/hierarchy.hpp"
#include "hihash/linalg.hpp"

namespace hihash {

enum class SplitTag { All, Train, Query, Database };

/// Feature rows with their label paths. ids are stable item identifiers that
/// survive splitting and are carried into code databases.
struct Dataset {
  RowMatrix features;
  std::vector<LabelPath> paths;
  std::vector<std::uint64_t> ids;
  SplitTag split = SplitTag::All;
  std::shared_ptr<const LabelTaxonomy> taxonomy;

  std::size_t size() const noexcept { return paths.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
};

inline void validate_dataset(const Dataset& ds) {
  require(ds.taxonomy != nullptr, ErrorCode::BadSpec, "dataset has no taxonomy");
  require(ds.size() >= 1, ErrorCode::TooSmall, "dataset is empty");
  require(static_cast<std::size_t>(ds.features.rows()) == ds.size() && ds.ids.size() == ds.size(),
          ErrorCode::DimensionMismatch, "feature, label and id counts differ");
  for (const auto& path : ds.paths) require_valid_path(*ds.taxonomy, path);
}

/// Subset of rows in the given order.
inline Dataset select_rows(const Dataset& ds, const std::vector<std::size_t>& rows, SplitTag tag) {
  Dataset out;
  out.taxonomy = ds.taxonomy;
  out.split = tag;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), ds.features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(static_cast<Eigen::Index>(rows[i]));
    out.paths.push_back(ds.paths[rows[i]]);
    out.ids.push_back(ds.ids[rows[i]]);
  }
  return out;
}

/// Same samples labelled with only the `levels` finest levels, e.g. to train
/// with leaf labels alone.
inline Dataset truncate_levels(const Dataset& ds, std::size_t levels) {
  Dataset out = ds;
  out.taxonomy = std::make_shared<const LabelTaxonomy>(truncate_levels(*ds.taxonomy, levels));
  for (auto& p : out.paths) p = truncate_path(p, levels);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic hierarchical data

/// Geometry of a generated hierarchy. Vectors are indexed by level, finest
/// first. Top-level centers are uniform in a ball of radius spreads[K-1];
/// each lower-level center is its parent plus a uniform draw from a ball of
/// radius spreads[k]; samples add isotropic Gaussian noise whose expected
/// norm is about `noise`.
struct SynthSpec {
  std::vector<std::size_t> class_counts{16, 4};
  std::size_t dim = 32;
  std::size_t samples_per_leaf = 100;
  std::vector<double> spreads{2.0, 10.0};
  double noise = 0.5;
  std::uint64_t seed = 0;
  std::vector<double> sigma2;  // copied into the taxonomy when set
};

inline void validate_synth_spec(const SynthSpec& spec) {
  const std::size_t K = spec.class_counts.size();
  require(K >= 1, ErrorCode::BadSpec, "need at least one level");
  require(spec.dim >= 1 && spec.samples_per_leaf >= 1, ErrorCode::BadSpec, "dim and samples per leaf must be >= 1");
  require(spec.spreads.size() == K, ErrorCode::BadSpec, "need one spread per level");
  for (std::size_t k = 0; k < K; ++k) {
    require(spec.class_counts[k] >= 1, ErrorCode::BadSpec, "empty level");
    if (k + 1 < K) {
      require(spec.class_counts[k] % spec.class_counts[k + 1] == 0, ErrorCode::BadSpec,
              "class count at level " + std::to_string(k) + " must be a multiple of level " + std::to_string(k + 1));
      require(spec.spreads[k] < spec.spreads[k + 1], ErrorCode::BadSpec,
              "spreads must shrink towards the leaves (level " + std::to_string(k) + ")");
    }
  }
  require(spec.noise >= 0.0 && spec.noise < spec.spreads[0], ErrorCode::BadSpec,
          "noise must be non-negative and smaller than the leaf spread");
}

/// Evenly branching taxonomy: class i at level k has parent i / (C_k / C_{k+1}).
inline LabelTaxonomy regular_taxonomy(const std::vector<std::size_t>& class_counts, std::vector<double> sigma2 = {}) {
  LabelTaxonomy tax;
  tax.class_counts = class_counts;
  tax.sigma2 = std::move(sigma2);
  for (std::size_t k = 0; k < class_counts.size(); ++k) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < class_counts[k]; ++i) names.push_back("l" + std::to_string(k) + "c" + std::to_string(i));
    tax.class_names.push_back(std::move(names));
    if (k + 1 < class_counts.size()) {
      const std::size_t fan = class_counts[k] / class_counts[k + 1];
      std::vector<ClassId> parents(class_counts[k]);
      for (std::size_t i = 0; i < parents.size(); ++i) parents[i] = static_cast<ClassId>(i / fan);
      tax.parents.push_back(std::move(parents));
    }
  }
  validate_structure(tax);
  return tax;
}

namespace detail {

inline Vector uniform_in_ball(std::mt19937_64& rng, std::size_t dim, double radius) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(dim));
  double norm = 0.0;
  do {
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = gauss(rng);
    norm = v.norm();
  } while (norm == 0.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double scale = radius * std::pow(unit(rng), 1.0 / static_cast<double>(dim));
  return v * (scale / norm);
}

}  // namespace detail

/// Deterministic for a fixed spec. Features are rounded to float so that a
/// save/load cycle through the binary format is lossless.
inline Dataset generate_synthetic(const SynthSpec& spec) {
  validate_synth_spec(spec);
  const std::size_t K = spec.class_counts.size();
  auto tax = std::make_shared<LabelTaxonomy>(regular_taxonomy(spec.class_counts, spec.sigma2));
  std::mt19937_64 rng(spec.seed);

  std::vector<RowMatrix> centers(K);
  for (std::size_t k = K; k-- > 0;) {
    centers[k].resize(static_cast<Eigen::Index>(spec.class_counts[k]), static_cast<Eigen::Index>(spec.dim));
    for (std::size_t i = 0; i < spec.class_counts[k]; ++i) {
      Vector c = detail::uniform_in_ball(rng, spec.dim, spec.spreads[k]);
      if (k + 1 < K) c += centers[k + 1].row(tax->parents[k][i]).transpose();
      centers[k].row(static_cast<Eigen::Index>(i)) = c.transpose();
    }
  }

  Dataset ds;
  ds.taxonomy = tax;
  const std::size_t n = spec.class_counts[0] * spec.samples_per_leaf;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.dim));
  std::normal_distribution<double> gauss(0.0, spec.noise / std::sqrt(static_cast<double>(spec.dim)));
  std::size_t row = 0;
  for (std::size_t leaf = 0; leaf < spec.class_counts[0]; ++leaf) {
    const LabelPath path = expand_label(*tax, static_cast<ClassId>(leaf));
    for (std::size_t s = 0; s < spec.samples_per_leaf; ++s, ++row) {
      for (std::size_t j = 0; j < spec.dim; ++j) {
        const double noise = spec.noise > 0.0 ? gauss(rng) : 0.0;
        const double v = centers[0](static_cast<Eigen::Index>(leaf), static_cast<Eigen::Index>(j)) + noise;
        ds.features(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = static_cast<float>(v);
      }
      ds.paths.push_back(path);
      ds.ids.push_back(row);
    }
  }
  return ds;
}

/// Stratified by leaf class. Every class with at least two samples lands on
/// both sides; a singleton class goes to the database with a warning.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double query_fraction, std::uint64_t seed) {
  require(query_fraction > 0.0 && query_fraction < 1.0, ErrorCode::BadSpec, "query fraction must be in (0, 1)");
  require(ds.taxonomy != nullptr, ErrorCode::BadSpec, "dataset has no taxonomy");
  std::vector<std::vector<std::size_t>> by_leaf(ds.taxonomy->leaf_count());
  for (std::size_t i = 0; i < ds.size(); ++i) by_leaf[ds.paths[i][0]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> is_query(ds.size(), 0);
  for (std::size_t c = 0; c < by_leaf.size(); ++c) {
    auto& members = by_leaf[c];
    if (members.empty()) continue;
    if (members.size() == 1) {
      warn("leaf class " + std::to_string(c) + " has one sample; it goes to the database");
      continue;
    }
    std::shuffle(members.begin(), members.end(), rng);
    auto take = static_cast<std::size_t>(std::llround(query_fraction * static_cast<double>(members.size())));
    take = std::clamp<std::size_t>(take, 1, members.size() - 1);
    for (std::size_t i = 0; i < take; ++i) is_query[members[i]] = 1;
  }
  std::vector<std::size_t> db_rows;
  std::vector<std::size_t> query_rows;
  for (std::size_t i = 0; i < ds.size(); ++i) (is_query[i] ? query_rows : db_rows).push_back(i);
  require(!query_rows.empty(), ErrorCode::TooSmall, "no class has enough samples to contribute queries");
  return {select_rows(ds, db_rows, SplitTag::Database), select_rows(ds, query_rows, SplitTag::Query)};
}

// ---------------------------------------------------------------------------
// Files
//
// Features: CSV (one row per sample) or binary "HIFT" | u64 n | u32 D | f32
// values row-major. Labels: CSV, one row per sample, either "leaf" or
// "id,leaf" where leaf is a class name or a leaf id.

enum class FeatureFormat { Csv, Binary };

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  return fields;
}

inline bool skip_line(const std::string& line) {
  const auto b = line.find_first_not_of(" \t\r");
  return b == std::string::npos || line[b] == '#';
}

inline double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  require(!s.empty() && end == s.c_str() + s.size() && std::isfinite(v), ErrorCode::ParseError,
          where + ": bad number '" + s + "'");
  return v;
}

inline RowMatrix read_features_csv(std::istream& in, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    std::vector<double> row;
    for (const auto& f : split_csv_line(line)) row.push_back(parse_double(f, source + ":" + std::to_string(lineno)));
    if (!rows.empty()) {
      require(row.size() == rows.front().size(), ErrorCode::DimensionMismatch,
              source + ":" + std::to_string(lineno) + ": row has " + std::to_string(row.size()) + " values, expected " +
                  std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

}  // namespace detail

inline RowMatrix load_features(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  char head[4] = {};
  in.read(head, 4);
  const bool binary = in.gcount() == 4 && std::string(head, 4) == "HIFT";
  in.clear();
  in.seekg(0);
  if (!binary) return detail::read_features_csv(in, path.string());
  io::BinaryReader r(in, path.string());
  r.expect_magic("HIFT");
  const auto n = static_cast<Eigen::Index>(r.u64());
  const auto d = static_cast<Eigen::Index>(r.u32());
  RowMatrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = r.f32();
  return m;
}

inline void save_features(const RowMatrix& features, const std::filesystem::path& path, FeatureFormat format) {
  auto out = io::open_out(path);
  if (format == FeatureFormat::Csv) {
    out.precision(17);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      for (Eigen::Index j = 0; j < features.cols(); ++j) out << (j ? "," : "") << features(i, j);
      out << '\n';
    }
  } else {
    io::BinaryWriter w(out);
    w.magic("HIFT");
    w.u64(static_cast<std::uint64_t>(features.rows()));
    w.u32(static_cast<std::uint32_t>(features.cols()));
    for (Eigen::Index i = 0; i < features.rows(); ++i)
      for (Eigen::Index j = 0; j < features.cols(); ++j) w.f32(static_cast<float>(features(i, j)));
  }
  require(static_cast<bool>(out), ErrorCode::IoError, "failed writing " + path.string());
}

struct LabelRows {
  std::vector<LabelPath> paths;
  std::vector<std::uint64_t> ids;
};

inline LabelRows load_labels(const std::filesystem::path& path, const LabelTaxonomy& tax) {
  auto in = io::open_in(path);
  LabelRows out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    const auto fields = detail::split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    require(fields.size() == 1 || fields.size() == 2, ErrorCode::ParseError, where + ": expected 'leaf' or 'id,leaf'");
    std::uint64_t id = out.ids.size();
    if (fields.size() == 2) {
      char* end = nullptr;
      id = std::strtoull(fields[0].c_str(), &end, 10);
      require(!fields[0].empty() && end == fields[0].c_str() + fields[0].size(), ErrorCode::ParseError,
              where + ": bad id '" + fields[0] + "'");
    }
    const auto leaf = find_leaf(tax, fields.back());
    require(leaf.has_value(), ErrorCode::InvalidPath, where + ": unknown leaf class '" + fields.back() + "'");
    out.paths.push_back(expand_label(tax, *leaf));
    out.ids.push_back(id);
  }
  return out;
}

inline void save_labels(const Dataset& ds, const std::filesystem::path& path) {
  auto out = io::open_out(path);
  for (std::size_t i = 0; i < ds.size(); ++i) out << ds.ids[i] << ',' << class_name(*ds.taxonomy, 0, ds.paths[i][0]) << '\n';
  require(static_cast<bool>(out), ErrorCode::IoError, "failed writing " + path.string());
}

inline Dataset load_dataset(const std::filesystem::path& features, const std::filesystem::path& labels,
                            std::shared_ptr<const LabelTaxonomy> tax) {
  Dataset ds;
  ds.taxonomy = std::move(tax);
  ds.features = load_features(features);
  auto rows = load_labels(labels, *ds.taxonomy);
  require(static_cast<std::size_t>(ds.features.rows()) == rows.paths.size(), ErrorCode::DimensionMismatch,
          features.string() + " has " + std::to_string(ds.features.rows()) + " rows but " + labels.string() +
              " has " + std::to_string(rows.paths.size()));
  ds.paths = std::move(rows.paths);
  ds.ids = std::move(rows.ids);
  validate_dataset(ds);
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& features, const std::filesystem::path& labels,
                            const std::filesystem::path& taxonomy) {
  return load_dataset(features, labels, std::make_shared<const LabelTaxonomy>(load_taxonomy(taxonomy)));
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& features, const std::filesystem::path& labels,
                         FeatureFormat format) {
  save_features(ds.features, features, format);
  save_labels(ds, labels);
}

}  // namespace hihash
