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

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hihash/centers.hpp"
#include "hihash/error.hpp"
#include "hihash/hierarchy.hpp"
#include "hihash/linalg.hpp"

namespace hihash {

/// Squared is the Gaussian log-density form; Euclidean is the unsquared norm.
enum class DistanceForm { Squared, Euclidean };

struct LossConfig {
  double alpha = 1.1;
  double eta1 = 1.0;
  std::vector<double> sigma2;
  DistanceForm distance = DistanceForm::Squared;
};

inline void validate_loss_config(const LossConfig& cfg) {
  require(cfg.alpha > 1.0 && std::isfinite(cfg.alpha), ErrorCode::BadConfig, "alpha must be > 1");
  require(cfg.eta1 >= 0.0 && std::isfinite(cfg.eta1), ErrorCode::BadConfig, "eta1 must be >= 0");
  validate_sigma(cfg.sigma2, cfg.sigma2.size());
  require(!cfg.sigma2.empty(), ErrorCode::BadCardinality, "sigma2 schedule is empty");
}

struct LossReport {
  double total = 0.0;
  std::vector<double> level_ce;
  double penalty = 0.0;  // unweighted box violation; total adds eta1 * penalty
  std::vector<Vector> posteriors;
};

inline nlohmann::json to_json(const LossReport& report) {
  nlohmann::json j;
  j["total"] = report.total;
  j["level_ce"] = report.level_ce;
  j["penalty"] = report.penalty;
  if (!report.posteriors.empty()) {
    nlohmann::json post = nlohmann::json::array();
    for (const auto& p : report.posteriors) post.push_back(std::vector<double>(p.data(), p.data() + p.size()));
    j["posteriors"] = std::move(post);
  }
  return j;
}

namespace detail {

inline double center_distance(const Eigen::Ref<const Vector>& r, const Eigen::Ref<const Vector>& mu, DistanceForm form) {
  const double sq = (r - mu).squaredNorm();
  return form == DistanceForm::Squared ? sq : std::sqrt(sq);
}

inline void check_level(const Eigen::Ref<const Vector>& r, const RowMatrix& centers, double sigma2) {
  require(centers.rows() >= 1, ErrorCode::EmptyCenters, "level has no centers");
  require(centers.cols() == r.size(), ErrorCode::DimensionMismatch,
          "center length " + std::to_string(centers.cols()) + " != embedding length " + std::to_string(r.size()));
  require(sigma2 > 0.0, ErrorCode::NonPositiveSigma, "sigma2 must be positive");
}

// logits_i = -d(r, mu_i) / (2 sigma2)
inline Vector level_logits(const Eigen::Ref<const Vector>& r, const RowMatrix& centers, double sigma2,
                           DistanceForm form) {
  Vector logits(centers.rows());
  const double scale = -0.5 / sigma2;
  for (Eigen::Index i = 0; i < centers.rows(); ++i)
    logits(i) = scale * center_distance(r, centers.row(i).transpose(), form);
  return logits;
}

inline double log_sum_exp(const Vector& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

inline Vector softmax(const Vector& logits) {
  Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

inline void check_path(const LabelPath& path, const CenterSet& centers, const LossConfig& cfg) {
  require(path.size() == centers.levels.size(), ErrorCode::InvalidPath,
          "label path has " + std::to_string(path.size()) + " levels, centers have " +
              std::to_string(centers.levels.size()));
  require(cfg.sigma2.size() == path.size(), ErrorCode::BadCardinality, "sigma2 schedule does not match level count");
  for (std::size_t k = 0; k < path.size(); ++k) {
    require(path[k] < static_cast<std::size_t>(centers.levels[k].rows()), ErrorCode::InvalidPath,
            "class " + std::to_string(path[k]) + " out of range at level " + std::to_string(k));
  }
}

}  // namespace detail

/// Softmax over one level's classes with p_i proportional to
/// exp(-d(r, mu_i) / (2 sigma2)).
inline Vector level_posterior(const Eigen::Ref<const Vector>& r, const RowMatrix& centers, double sigma2,
                              DistanceForm form = DistanceForm::Squared) {
  detail::check_level(r, centers, sigma2);
  return detail::softmax(detail::level_logits(r, centers, sigma2, form));
}

/// Sum of hinge violations of the [-alpha, alpha] box.
inline double box_penalty(const Eigen::Ref<const Vector>& r, double alpha) {
  double p = 0.0;
  for (Eigen::Index j = 0; j < r.size(); ++j) p += std::max(0.0, -alpha - r(j)) + std::max(0.0, r(j) - alpha);
  return p;
}

inline LossReport hierarchy_loss(const Eigen::Ref<const Vector>& r, const LabelPath& path, const CenterSet& centers,
                                 const LossConfig& cfg) {
  detail::check_path(path, centers, cfg);
  LossReport report;
  for (std::size_t k = 0; k < path.size(); ++k) {
    detail::check_level(r, centers.levels[k], cfg.sigma2[k]);
    const Vector logits = detail::level_logits(r, centers.levels[k], cfg.sigma2[k], cfg.distance);
    // Cross-entropy straight from log-sum-exp; clamp the -0 / tiny negative rounding.
    const double ce = std::max(0.0, detail::log_sum_exp(logits) - logits(path[k]));
    report.level_ce.push_back(ce);
    report.posteriors.push_back(detail::softmax(logits));
    report.total += ce;
  }
  report.penalty = box_penalty(r, cfg.alpha);
  report.total += cfg.eta1 * report.penalty;
  return report;
}

/// Gradient of hierarchy_loss with respect to r. Centers are constants. The
/// hinge subgradient at |r_j| == alpha is 0.
inline Vector hierarchy_loss_grad(const Eigen::Ref<const Vector>& r, const LabelPath& path, const CenterSet& centers,
                                  const LossConfig& cfg) {
  detail::check_path(path, centers, cfg);
  Vector grad = Vector::Zero(r.size());
  for (std::size_t k = 0; k < path.size(); ++k) {
    const RowMatrix& mu = centers.levels[k];
    detail::check_level(r, mu, cfg.sigma2[k]);
    const Vector p = detail::softmax(detail::level_logits(r, mu, cfg.sigma2[k], cfg.distance));
    // d CE / d r = sum_i (p_i - [i == y]) * dl_i/dr, dl_i/dr = -(1 / (2 sigma2)) * dd_i/dr
    const double scale = -0.5 / cfg.sigma2[k];
    for (Eigen::Index i = 0; i < mu.rows(); ++i) {
      const double w = p(i) - (static_cast<ClassId>(i) == path[k] ? 1.0 : 0.0);
      if (w == 0.0) continue;
      Vector diff = r - mu.row(i).transpose();
      if (cfg.distance == DistanceForm::Squared) {
        grad += (w * scale * 2.0) * diff;
      } else {
        const double norm = diff.norm();
        if (norm > 0.0) grad += (w * scale / norm) * diff;
      }
    }
  }
  for (Eigen::Index j = 0; j < r.size(); ++j) {
    if (r(j) > cfg.alpha) grad(j) += cfg.eta1;
    else if (r(j) < -cfg.alpha) grad(j) -= cfg.eta1;
  }
  return grad;
}

/// Mean report over a batch (posteriors omitted) and per-sample gradients
/// scaled by 1 / batch size, i.e. gradients of the mean loss.
struct BatchLoss {
  LossReport mean;
  RowMatrix grads;
};

inline BatchLoss batch_loss(const RowMatrix& embeddings, std::span<const LabelPath> paths, const CenterSet& centers,
                            const LossConfig& cfg) {
  require(embeddings.rows() > 0 && !paths.empty(), ErrorCode::EmptyBatch, "batch is empty");
  require(static_cast<std::size_t>(embeddings.rows()) == paths.size(), ErrorCode::DimensionMismatch,
          "embedding count does not match label count");
  const auto B = embeddings.rows();
  const double inv = 1.0 / static_cast<double>(B);
  BatchLoss out;
  out.mean.level_ce.assign(paths.front().size(), 0.0);
  out.grads.resize(B, embeddings.cols());
  for (Eigen::Index n = 0; n < B; ++n) {
    const Vector r = embeddings.row(n).transpose();
    const auto& path = paths[static_cast<std::size_t>(n)];
    const LossReport rep = hierarchy_loss(r, path, centers, cfg);
    out.mean.total += rep.total;
    out.mean.penalty += rep.penalty;
    for (std::size_t k = 0; k < rep.level_ce.size(); ++k) out.mean.level_ce[k] += rep.level_ce[k];
    out.grads.row(n) = (hierarchy_loss_grad(r, path, centers, cfg) * inv).transpose();
  }
  out.mean.total *= inv;
  out.mean.penalty *= inv;
  for (double& v : out.mean.level_ce) v *= inv;
  return out;
}

/// Mean report over a whole set of embeddings, without gradients.
inline LossReport mean_loss(const RowMatrix& embeddings, std::span<const LabelPath> paths, const CenterSet& centers,
                            const LossConfig& cfg) {
  require(embeddings.rows() > 0 && !paths.empty(), ErrorCode::EmptyBatch, "no samples");
  require(static_cast<std::size_t>(embeddings.rows()) == paths.size(), ErrorCode::DimensionMismatch,
          "embedding count does not match label count");
  LossReport mean;
  mean.level_ce.assign(paths.front().size(), 0.0);
  for (Eigen::Index n = 0; n < embeddings.rows(); ++n) {
    const LossReport rep = hierarchy_loss(embeddings.row(n).transpose(), paths[static_cast<std::size_t>(n)], centers, cfg);
    mean.total += rep.total;
    mean.penalty += rep.penalty;
    for (std::size_t k = 0; k < rep.level_ce.size(); ++k) mean.level_ce[k] += rep.level_ce[k];
  }
  const double inv = 1.0 / static_cast<double>(embeddings.rows());
  mean.total *= inv;
  mean.penalty *= inv;
  for (double& v : mean.level_ce) v *= inv;
  return mean;
}

/// Mean over all coordinates of | |r_j| - alpha |; a proxy for how far the
/// relaxed outputs sit from the quantization targets.
inline double mean_box_gap(const RowMatrix& embeddings, double alpha) {
  if (embeddings.size() == 0) return 0.0;
  return (embeddings.array().abs() - alpha).abs().mean();
}

}  // namespace hihash
