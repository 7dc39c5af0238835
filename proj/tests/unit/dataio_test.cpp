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

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hihash/dataio.hpp"
#include "hihash/diagnostics.hpp"
#include "support/fixtures.hpp"

namespace hihash {
namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.class_counts = {8, 2};
  s.dim = 6;
  s.samples_per_leaf = 10;
  s.spreads = {2.0, 10.0};
  s.noise = 0.5;
  s.seed = 3;
  return s;
}

void write_text(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

TEST(LoadDataset, ReadsCsvWithNamedLabels) {
  fixtures::TempDir dir;
  auto tax = fixtures::small_taxonomy();
  tax.class_names = {{"cat", "dog", "oak", "elm"}, {"animal", "tree"}};
  save_taxonomy(tax, dir / "tax.json");
  write_text(dir / "x.csv", "# two rows\n1.0,2.0,3.0\n-1,0.5,4e-1\n");
  write_text(dir / "y.csv", "10,oak\n11,1\n");
  const auto ds = load_dataset(dir / "x.csv", dir / "y.csv", dir / "tax.json");
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.dim(), 3u);
  EXPECT_EQ(ds.paths[0], (LabelPath{2, 1}));
  EXPECT_EQ(ds.paths[1], (LabelPath{1, 0}));
  EXPECT_EQ(ds.ids, (std::vector<std::uint64_t>{10, 11}));
  EXPECT_DOUBLE_EQ(ds.features(1, 2), 0.4);
}

TEST(LoadDataset, RejectsUnknownClass) {
  fixtures::TempDir dir;
  save_taxonomy(fixtures::small_taxonomy(), dir / "tax.json");
  write_text(dir / "x.csv", "1,2\n3,4\n");
  write_text(dir / "y.csv", "0\n9\n");
  EXPECT_HIHASH_ERROR(load_dataset(dir / "x.csv", dir / "y.csv", dir / "tax.json"), ErrorCode::InvalidPath);
}

TEST(LoadDataset, RejectsRaggedFeatureRows) {
  fixtures::TempDir dir;
  save_taxonomy(fixtures::small_taxonomy(), dir / "tax.json");
  write_text(dir / "x.csv", "1,2\n3,4,5\n");
  write_text(dir / "y.csv", "0\n1\n");
  EXPECT_HIHASH_ERROR(load_dataset(dir / "x.csv", dir / "y.csv", dir / "tax.json"), ErrorCode::DimensionMismatch);
}

TEST(LoadDataset, RejectsRowCountMismatchAndEmptyFiles) {
  fixtures::TempDir dir;
  save_taxonomy(fixtures::small_taxonomy(), dir / "tax.json");
  write_text(dir / "x.csv", "1,2\n3,4\n");
  write_text(dir / "y.csv", "0\n");
  EXPECT_HIHASH_ERROR(load_dataset(dir / "x.csv", dir / "y.csv", dir / "tax.json"), ErrorCode::DimensionMismatch);
  write_text(dir / "e.csv", "");
  EXPECT_HIHASH_ERROR(load_dataset(dir / "e.csv", dir / "e.csv", dir / "tax.json"), ErrorCode::TooSmall);
  write_text(dir / "bad.csv", "1,abc\n");
  EXPECT_HIHASH_ERROR(load_features(dir / "bad.csv"), ErrorCode::ParseError);
}

TEST(Synthetic, DeterministicForSeed) {
  const auto a = generate_synthetic(small_spec());
  const auto b = generate_synthetic(small_spec());
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.paths, b.paths);
  auto other = small_spec();
  other.seed = 4;
  EXPECT_NE(generate_synthetic(other).features, a.features);
}

TEST(Synthetic, ZeroNoiseCollapsesLeaves) {
  auto spec = small_spec();
  spec.noise = 0.0;
  const auto ds = generate_synthetic(spec);
  for (std::size_t i = 1; i < ds.size(); ++i) {
    if (ds.paths[i] == ds.paths[i - 1]) {
      EXPECT_EQ(ds.features.row(static_cast<Eigen::Index>(i)), ds.features.row(static_cast<Eigen::Index>(i - 1)));
    }
  }
}

TEST(Synthetic, ShapeAndTaxonomy) {
  const auto ds = generate_synthetic(small_spec());
  EXPECT_EQ(ds.size(), 80u);
  EXPECT_EQ(ds.dim(), 6u);
  EXPECT_EQ(ds.taxonomy->class_counts, (std::vector<std::size_t>{8, 2}));
  EXPECT_EQ(ds.taxonomy->parents[0][5], 1u);
  EXPECT_NO_THROW(validate_dataset(ds));
}

TEST(Synthetic, DistancesFollowTheHierarchy) {
  SynthSpec spec;
  spec.class_counts = {16, 4};
  spec.dim = 32;
  spec.samples_per_leaf = 20;
  spec.spreads = {2.0, 10.0};
  spec.noise = 0.5;
  spec.seed = 5;
  const auto ds = generate_synthetic(spec);
  double sum[3] = {0, 0, 0};
  double count[3] = {0, 0, 0};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = i + 1; j < ds.size(); ++j) {
      const auto& a = ds.paths[i];
      const auto& b = ds.paths[j];
      const int bucket = a[0] == b[0] ? 0 : (a[1] == b[1] ? 1 : 2);
      sum[bucket] += (ds.features.row(static_cast<Eigen::Index>(i)) - ds.features.row(static_cast<Eigen::Index>(j))).norm();
      count[bucket] += 1;
    }
  }
  const double same_leaf = sum[0] / count[0];
  const double same_coarse = sum[1] / count[1];
  const double across = sum[2] / count[2];
  EXPECT_LT(same_leaf, same_coarse);
  EXPECT_LT(same_coarse, across);
}

TEST(Synthetic, NearestLeafCenterClassifierIsAccurate) {
  SynthSpec spec;
  spec.seed = 6;
  const auto ds = generate_synthetic(spec);
  const std::size_t C = ds.taxonomy->leaf_count();
  RowMatrix centers = RowMatrix::Zero(static_cast<Eigen::Index>(C), ds.features.cols());
  std::vector<double> n(C, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    centers.row(ds.paths[i][0]) += ds.features.row(static_cast<Eigen::Index>(i));
    n[ds.paths[i][0]] += 1.0;
  }
  for (std::size_t c = 0; c < C; ++c) centers.row(static_cast<Eigen::Index>(c)) /= n[c];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Eigen::Index best = 0;
    (centers.rowwise() - ds.features.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
    correct += static_cast<std::size_t>(best) == ds.paths[i][0] ? 1 : 0;
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(ds.size()), 0.99);
}

TEST(Synthetic, RejectsBadSpecs) {
  auto spec = small_spec();
  spec.spreads = {10.0, 2.0};
  EXPECT_HIHASH_ERROR(generate_synthetic(spec), ErrorCode::BadSpec);
  spec = small_spec();
  spec.class_counts = {7, 2};
  EXPECT_HIHASH_ERROR(generate_synthetic(spec), ErrorCode::BadSpec);
  spec = small_spec();
  spec.noise = 3.0;
  EXPECT_HIHASH_ERROR(generate_synthetic(spec), ErrorCode::BadSpec);
  spec = small_spec();
  spec.spreads = {2.0};
  EXPECT_HIHASH_ERROR(generate_synthetic(spec), ErrorCode::BadSpec);
}

TEST(Split, StratifiedHalves) {
  auto spec = small_spec();
  const auto ds = generate_synthetic(spec);
  const auto [db, q] = split(ds, 0.5, 9);
  std::map<ClassId, int> db_count;
  std::map<ClassId, int> q_count;
  for (const auto& p : db.paths) ++db_count[p[0]];
  for (const auto& p : q.paths) ++q_count[p[0]];
  for (ClassId c = 0; c < 8; ++c) {
    EXPECT_EQ(db_count[c], 5);
    EXPECT_EQ(q_count[c], 5);
  }
  EXPECT_EQ(db.split, SplitTag::Database);
  EXPECT_EQ(q.split, SplitTag::Query);
}

TEST(Split, DeterministicAndPreservesIds) {
  const auto ds = generate_synthetic(small_spec());
  const auto [a_db, a_q] = split(ds, 0.3, 1);
  const auto [b_db, b_q] = split(ds, 0.3, 1);
  EXPECT_EQ(a_db.ids, b_db.ids);
  EXPECT_EQ(a_q.ids, b_q.ids);
  for (std::size_t i = 0; i < a_q.size(); ++i)
    EXPECT_EQ(a_q.features.row(static_cast<Eigen::Index>(i)), ds.features.row(static_cast<Eigen::Index>(a_q.ids[i])));
  EXPECT_EQ(a_db.size() + a_q.size(), ds.size());
}

TEST(Split, SingletonClassGoesToDatabaseWithWarning) {
  Dataset ds;
  ds.taxonomy = std::make_shared<LabelTaxonomy>(fixtures::small_taxonomy());
  ds.features = RowMatrix::Random(5, 2);
  ds.paths = {{0, 0}, {0, 0}, {0, 0}, {0, 0}, {3, 1}};
  ds.ids = {0, 1, 2, 3, 4};
  std::vector<std::string> warnings;
  ScopedWarningHandler guard([&](const std::string& m) { warnings.push_back(m); });
  const auto [db, q] = split(ds, 0.5, 2);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(std::count(db.ids.begin(), db.ids.end(), 4u), 1);
  EXPECT_EQ(q.size(), 2u);
}

TEST(Split, RejectsDegenerateInput) {
  Dataset ds;
  ds.taxonomy = std::make_shared<LabelTaxonomy>(fixtures::small_taxonomy());
  ds.features = RowMatrix::Random(1, 2);
  ds.paths = {{0, 0}};
  ds.ids = {0};
  ScopedWarningHandler quiet([](const std::string&) {});
  EXPECT_HIHASH_ERROR(split(ds, 0.5, 1), ErrorCode::TooSmall);
  EXPECT_HIHASH_ERROR(split(ds, 1.0, 1), ErrorCode::BadSpec);
}

TEST(DatasetFiles, RoundTripBinaryAndCsv) {
  fixtures::TempDir dir;
  const auto ds = generate_synthetic(small_spec());
  save_taxonomy(*ds.taxonomy, dir / "tax.json");
  for (auto fmt : {FeatureFormat::Binary, FeatureFormat::Csv}) {
    const std::string ext = fmt == FeatureFormat::Binary ? ".bin" : ".csv";
    save_dataset(ds, dir / ("x" + ext), dir / "y.csv", fmt);
    const auto back = load_dataset(dir / ("x" + ext), dir / "y.csv", dir / "tax.json");
    EXPECT_EQ(back.features, ds.features);
    EXPECT_EQ(back.paths, ds.paths);
    EXPECT_EQ(back.ids, ds.ids);
  }
}

TEST(DatasetFiles, MissingFileIsAnIoError) {
  fixtures::TempDir dir;
  EXPECT_HIHASH_ERROR(load_features(dir / "nope.bin"), ErrorCode::IoError);
}

TEST(DatasetLevels, TruncationDropsCoarseLevels) {
  const auto ds = generate_synthetic(small_spec());
  const auto fine = truncate_levels(ds, 1);
  EXPECT_EQ(fine.taxonomy->levels(), 1u);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(fine.paths[i], LabelPath{ds.paths[i][0]});
}

}  // namespace
}  // namespace hihash
