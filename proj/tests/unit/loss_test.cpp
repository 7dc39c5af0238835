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

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "hihash/loss.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace hihash {
namespace {

RowMatrix rows(std::initializer_list<std::initializer_list<double>> values) {
  RowMatrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : values) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

CenterSet single_level(RowMatrix centers) {
  CenterSet set;
  set.levels.push_back(std::move(centers));
  return set;
}

LossConfig config(std::vector<double> sigma2) {
  LossConfig cfg;
  cfg.sigma2 = std::move(sigma2);
  return cfg;
}

// -log softmax_y evaluated term by term, without log-sum-exp.
double direct_ce(const Vector& r, const RowMatrix& mu, double sigma2, std::size_t y) {
  double denom = 0.0;
  for (Eigen::Index i = 0; i < mu.rows(); ++i) denom += std::exp(-(r - mu.row(i).transpose()).squaredNorm() / (2 * sigma2));
  const double num = std::exp(-(r - mu.row(static_cast<Eigen::Index>(y)).transpose()).squaredNorm() / (2 * sigma2));
  return -std::log(num / denom);
}

TEST(LevelPosterior, SingleCenterIsCertain) {
  const Vector p = level_posterior(vec({0.3, -2.0}), rows({{1.0, 1.0}}), 1.0);
  ASSERT_EQ(p.size(), 1);
  EXPECT_DOUBLE_EQ(p(0), 1.0);
}

TEST(LevelPosterior, EquidistantCentersSplitEvenly) {
  for (double s2 : {0.1, 1.0, 7.0}) {
    const Vector p = level_posterior(vec({0.0, 0.0}), rows({{1.0, 1.0}, {-1.0, -1.0}}), s2);
    EXPECT_DOUBLE_EQ(p(0), 0.5);
    EXPECT_DOUBLE_EQ(p(1), 0.5);
  }
}

TEST(LevelPosterior, MatchesScalarSoftmax) {
  // d = (1, 5), logits (-1, -5), p1 = 1 / (1 + e^-4)
  const Vector p = level_posterior(vec({1.0, 0.0}), rows({{1.0, 1.0}, {-1.0, -1.0}}), 0.5);
  EXPECT_NEAR(p(0), 1.0 / (1.0 + std::exp(-4.0)), 1e-15);
  EXPECT_NEAR(p(0), 0.98201, 5e-6);
}

TEST(LevelPosterior, InvariantToCommonTranslation) {
  const RowMatrix mu = rows({{1.0, 0.5, -1.0}, {-0.5, 2.0, 0.0}, {0.0, 0.0, 1.0}});
  const Vector r = vec({0.2, 0.7, -0.4});
  const Vector t = vec({3.0, -1.5, 0.25});
  RowMatrix shifted = mu;
  shifted.rowwise() += t.transpose();
  EXPECT_TRUE(level_posterior(r, mu, 2.0).isApprox(level_posterior(r + t, shifted, 2.0), 1e-12));
}

TEST(LevelPosterior, LargerSigmaFlattens) {
  const RowMatrix mu = rows({{1.0, 0.0}, {0.0, 1.0}, {-1.0, -1.0}});
  const Vector r = vec({0.8, 0.1});
  double previous = 1.0;
  for (double s2 : {0.25, 0.5, 1.0, 2.0, 8.0}) {
    const double top = level_posterior(r, mu, s2).maxCoeff();
    EXPECT_LT(top, previous);
    previous = top;
  }
}

TEST(LevelPosterior, StableForFarAwayEmbeddings) {
  const Vector p = level_posterior(vec({1e4, 0.0}), rows({{1.0, 0.0}, {-1.0, 0.0}}), 0.01);
  EXPECT_TRUE(p.allFinite());
  EXPECT_DOUBLE_EQ(p.sum(), 1.0);
}

TEST(HierarchyLoss, SingleClassPerLevelInsideBoxIsZero) {
  CenterSet set;
  set.levels = {rows({{0.5, -0.5}}), rows({{0.2, 0.1}})};
  const auto rep = hierarchy_loss(vec({0.3, 0.9}), {0, 0}, set, config({1.0, 4.0}));
  EXPECT_DOUBLE_EQ(rep.total, 0.0);
  EXPECT_DOUBLE_EQ(rep.penalty, 0.0);
}

TEST(HierarchyLoss, EquidistantTwoCentersGivesLogTwo) {
  const auto rep = hierarchy_loss(vec({0.0, 0.0}), {0}, single_level(rows({{1.0, 1.0}, {-1.0, -1.0}})), config({1.0}));
  EXPECT_NEAR(rep.total, std::log(2.0), 1e-15);
  EXPECT_NEAR(rep.total, 0.693147, 1e-6);
}

TEST(HierarchyLoss, HingePenaltyOutsideBox) {
  const auto rep = hierarchy_loss(vec({1.5, 0.0}), {0}, single_level(rows({{1.5, 0.0}})), config({1.0}));
  EXPECT_NEAR(rep.penalty, 0.4, 1e-15);
  EXPECT_NEAR(rep.total, 0.4, 1e-15);
  EXPECT_NEAR(box_penalty(vec({-1.5, 1.2, 0.0}), 1.1), 0.4 + 0.1, 1e-15);
}

TEST(HierarchyLoss, DecomposesIntoLevelTermsAndWeightedPenalty) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  CenterSet set;
  set.levels = {RowMatrix::Random(4, 6), RowMatrix::Random(2, 6)};
  auto cfg = config({0.7, 3.0});
  cfg.eta1 = 2.5;
  for (int t = 0; t < 20; ++t) {
    Vector r(6);
    for (Eigen::Index j = 0; j < 6; ++j) r(j) = 1.5 * n(rng);
    const auto rep = hierarchy_loss(r, {3, 1}, set, cfg);
    EXPECT_NEAR(rep.total, rep.level_ce[0] + rep.level_ce[1] + cfg.eta1 * rep.penalty, 1e-12);
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_GE(rep.level_ce[k], 0.0);
      EXPECT_NEAR(rep.level_ce[k], direct_ce(r, set.levels[k], cfg.sigma2[k], k == 0 ? 3 : 1), 1e-10);
    }
  }
}

TEST(HierarchyLoss, UnsquaredDistanceUsesNorm) {
  auto cfg = config({0.5});
  cfg.distance = DistanceForm::Euclidean;
  // d = (1, sqrt(5)), logits (-1, -sqrt(5))
  const Vector p = level_posterior(vec({1.0, 0.0}), rows({{1.0, 1.0}, {-1.0, -1.0}}), 0.5, DistanceForm::Euclidean);
  EXPECT_NEAR(p(0), 1.0 / (1.0 + std::exp(-(std::sqrt(5.0) - 1.0))), 1e-15);
  const auto rep = hierarchy_loss(vec({1.0, 0.0}), {0}, single_level(rows({{1.0, 1.0}, {-1.0, -1.0}})), cfg);
  EXPECT_NEAR(rep.total, -std::log(p(0)), 1e-14);
}

TEST(HierarchyLoss, RejectsMismatchedInputs) {
  const auto set = single_level(rows({{1.0, 1.0}, {-1.0, -1.0}}));
  EXPECT_HIHASH_ERROR(hierarchy_loss(vec({0.0, 0.0}), {2}, set, config({1.0})), ErrorCode::InvalidPath);
  EXPECT_HIHASH_ERROR(hierarchy_loss(vec({0.0, 0.0}), {0, 0}, set, config({1.0})), ErrorCode::InvalidPath);
  EXPECT_HIHASH_ERROR(hierarchy_loss(vec({0.0, 0.0, 0.0}), {0}, set, config({1.0})), ErrorCode::DimensionMismatch);
  EXPECT_HIHASH_ERROR(hierarchy_loss(vec({0.0, 0.0}), {0}, set, config({1.0, 2.0})), ErrorCode::BadCardinality);
  EXPECT_HIHASH_ERROR(hierarchy_loss(vec({0.0, 0.0}), {0}, set, config({-1.0})), ErrorCode::NonPositiveSigma);
  EXPECT_HIHASH_ERROR(level_posterior(vec({0.0, 0.0}), RowMatrix(0, 2), 1.0), ErrorCode::EmptyCenters);
}

TEST(LossConfigCheck, EnforcesRanges) {
  auto cfg = config({1.0, 2.0});
  EXPECT_NO_THROW(validate_loss_config(cfg));
  cfg.alpha = 1.0;
  EXPECT_HIHASH_ERROR(validate_loss_config(cfg), ErrorCode::BadConfig);
  cfg.alpha = 1.1;
  cfg.eta1 = -0.1;
  EXPECT_HIHASH_ERROR(validate_loss_config(cfg), ErrorCode::BadConfig);
  cfg.eta1 = 0.0;
  cfg.sigma2 = {2.0, 1.0};
  EXPECT_HIHASH_ERROR(validate_loss_config(cfg), ErrorCode::NonMonotoneSigma);
}

TEST(LossGradient, ZeroAtOwnCenter) {
  CenterSet set;
  set.levels = {rows({{0.5, -0.25, 1.0}}), rows({{0.5, -0.25, 1.0}})};
  EXPECT_TRUE(hierarchy_loss_grad(vec({0.5, -0.25, 1.0}), {0, 0}, set, config({1.0, 2.0})).isZero(0.0));
}

TEST(LossGradient, SymmetricMidpointPullsOnlyAlongCenterAxis) {
  const auto set = single_level(rows({{1.0, 1.0}, {-1.0, -1.0}}));
  const Vector g0 = hierarchy_loss_grad(vec({0.0, 0.0}), {0}, set, config({1.0}));
  const Vector g1 = hierarchy_loss_grad(vec({0.0, 0.0}), {1}, set, config({1.0}));
  // p = (1/2, 1/2): g0 = (-1/2)(-1)(r - mu0) + (1/2)(-1)(r - mu1) = (-1, -1).
  EXPECT_TRUE(g0.isApprox(vec({-1.0, -1.0}), 1e-15));
  // No component orthogonal to the axis, and the two labels cancel.
  EXPECT_NEAR(g0.dot(vec({1.0, -1.0})), 0.0, 1e-15);
  EXPECT_TRUE((g0 + g1).isZero(1e-15));
}

void expect_grad_matches_fd(const Vector& r, const LabelPath& path, const CenterSet& set, const LossConfig& cfg) {
  const Vector g = hierarchy_loss_grad(r, path, set, cfg);
  std::vector<double> x(r.data(), r.data() + r.size());
  auto f = [&](const std::vector<double>& v) {
    return hierarchy_loss(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())), path, set, cfg)
        .total;
  };
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double fd = oracle::central_difference(f, x, j);
    EXPECT_LT(oracle::relative_error(g(static_cast<Eigen::Index>(j)), fd), 1e-4)
        << "coordinate " << j << " analytic " << g(static_cast<Eigen::Index>(j)) << " numeric " << fd;
  }
}

// Coordinates are kept away from the hinge kinks at +-alpha.
Vector random_embedding(std::mt19937_64& rng, Eigen::Index L, double alpha) {
  std::uniform_real_distribution<double> u(-1.6, 1.6);
  Vector r(L);
  for (Eigen::Index j = 0; j < L; ++j) {
    do r(j) = u(rng);
    while (std::abs(std::abs(r(j)) - alpha) < 1e-3);
  }
  return r;
}

TEST(LossGradient, MatchesFiniteDifferencesSquared) {
  std::mt19937_64 rng(99);
  CenterSet set;
  set.levels = {RowMatrix::Random(5, 8), RowMatrix::Random(3, 8), RowMatrix::Random(2, 8)};
  auto cfg = config({0.5, 1.0, 3.0});
  cfg.eta1 = 1.7;
  for (int t = 0; t < 10; ++t) expect_grad_matches_fd(random_embedding(rng, 8, cfg.alpha), {4, 1, 0}, set, cfg);
}

TEST(LossGradient, MatchesFiniteDifferencesUnsquared) {
  std::mt19937_64 rng(100);
  CenterSet set;
  set.levels = {RowMatrix::Random(4, 5), RowMatrix::Random(2, 5)};
  auto cfg = config({0.8, 2.0});
  cfg.distance = DistanceForm::Euclidean;
  for (int t = 0; t < 10; ++t) expect_grad_matches_fd(random_embedding(rng, 5, cfg.alpha), {2, 1}, set, cfg);
}

TEST(LossGradient, HingeSubgradientIsZeroAtKink) {
  const auto set = single_level(rows({{1.1, 0.0}}));
  const Vector g = hierarchy_loss_grad(vec({1.1, 0.0}), {0}, set, config({1.0}));
  EXPECT_TRUE(g.isZero(0.0));
  const Vector out = hierarchy_loss_grad(vec({1.2, 0.0}), {0}, single_level(rows({{1.2, 0.0}})), config({1.0}));
  EXPECT_DOUBLE_EQ(out(0), 1.0);
}

TEST(BatchLoss, IdenticalSamplesAverageToSingleLoss) {
  CenterSet set;
  set.levels = {rows({{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}}), rows({{0.5, 0.5}, {-0.5, -0.5}})};
  const auto cfg = config({1.0, 4.0});
  const Vector r = vec({0.4, 1.3});
  RowMatrix batch(3, 2);
  batch.rowwise() = r.transpose();
  const std::vector<LabelPath> paths(3, LabelPath{1, 0});
  const auto b = batch_loss(batch, paths, set, cfg);
  const auto single = hierarchy_loss(r, {1, 0}, set, cfg);
  EXPECT_NEAR(b.mean.total, single.total, 1e-15);
  EXPECT_TRUE((b.grads.row(0).transpose() * 3.0).isApprox(hierarchy_loss_grad(r, {1, 0}, set, cfg), 1e-14));
}

TEST(BatchLoss, TwoSamplesAverageTotals) {
  const auto set = single_level(rows({{1.0, 1.0}, {-1.0, -1.0}}));
  const auto cfg = config({0.5});
  RowMatrix batch = rows({{1.0, 0.0}, {0.0, 0.0}});
  const std::vector<LabelPath> paths{{0}, {1}};
  const auto b = batch_loss(batch, paths, set, cfg);
  // Oracle: -log(1 / (1 + e^-4)) and ln 2.
  EXPECT_NEAR(b.mean.total, 0.5 * (std::log1p(std::exp(-4.0)) + std::log(2.0)), 1e-14);
}

TEST(BatchLoss, SeededBatchMatchesSummedOracle) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  CenterSet set;
  set.levels = {RowMatrix::Zero(4, 3), RowMatrix::Zero(2, 3)};
  for (auto& level : set.levels)
    for (Eigen::Index i = 0; i < level.rows(); ++i)
      for (Eigen::Index j = 0; j < 3; ++j) level(i, j) = n(rng);
  const auto cfg = config({1.0, 2.0});
  RowMatrix batch(16, 3);
  std::vector<LabelPath> paths;
  for (Eigen::Index i = 0; i < 16; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) batch(i, j) = 0.8 * n(rng);
    const auto leaf = static_cast<ClassId>(i % 4);
    paths.push_back({leaf, leaf / 2});
  }
  double expected = 0.0;
  for (Eigen::Index i = 0; i < 16; ++i) {
    const Vector r = batch.row(i).transpose();
    const auto& p = paths[static_cast<std::size_t>(i)];
    double pen = 0.0;
    for (Eigen::Index j = 0; j < 3; ++j) pen += std::max(0.0, std::abs(r(j)) - cfg.alpha);
    expected += direct_ce(r, set.levels[0], 1.0, p[0]) + direct_ce(r, set.levels[1], 2.0, p[1]) + pen;
  }
  expected /= 16.0;
  EXPECT_NEAR(batch_loss(batch, paths, set, cfg).mean.total, expected, 1e-12);
  EXPECT_NEAR(mean_loss(batch, paths, set, cfg).total, expected, 1e-12);
}

TEST(BatchLoss, RejectsEmptyBatch) {
  const auto set = single_level(rows({{1.0, 1.0}}));
  EXPECT_HIHASH_ERROR(batch_loss(RowMatrix(0, 2), {}, set, config({1.0})), ErrorCode::EmptyBatch);
}

TEST(BoxGap, AveragesDistanceToBoxFaces) {
  EXPECT_NEAR(mean_box_gap(rows({{1.1, -1.1}, {0.1, 2.1}}), 1.1), (0.0 + 0.0 + 1.0 + 1.0) / 4.0, 1e-15);
}

}  // namespace
}  // namespace hihash
