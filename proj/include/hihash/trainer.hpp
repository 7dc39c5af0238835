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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hihash/binary_io.hpp"
#include "hihash/centers.hpp"
#include "hihash/dataio.hpp"
#include "hihash/encoder.hpp"
#include "hihash/error.hpp"
#include "hihash/hierarchy.hpp"
#include "hihash/loss.hpp"

namespace hihash {

enum class LrDecay { Geometric, Step };

struct TrainConfig {
  double lr_start = 1e-4;
  double lr_end = 1e-5;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t inner_iters = 0;  // SGD steps per outer iteration; 0 means one epoch
  std::size_t max_outer = 100;
  double convergence_tol = 1e-4;
  double stage2_eta1_multiplier = 10.0;
  double stage2_fraction = 0.25;
  std::uint64_t seed = 0;
  LrDecay decay = LrDecay::Geometric;
  std::size_t decay_steps = 3;  // plateaus for step decay
  std::size_t halt_after = 0;   // stop this call after n outer iterations (0: run to the end)
};

inline void validate_train_config(const TrainConfig& cfg) {
  require(cfg.lr_end > 0.0 && cfg.lr_start >= cfg.lr_end, ErrorCode::BadConfig, "need lr_start >= lr_end > 0");
  require(cfg.momentum >= 0.0 && cfg.momentum < 1.0, ErrorCode::BadConfig, "momentum must be in [0, 1)");
  require(cfg.batch_size >= 1, ErrorCode::BadConfig, "batch size must be >= 1");
  require(cfg.stage2_eta1_multiplier >= 1.0, ErrorCode::BadConfig, "stage-two multiplier must be >= 1");
  require(cfg.stage2_fraction >= 0.0 && cfg.stage2_fraction < 1.0, ErrorCode::BadConfig,
          "stage-two fraction must be in [0, 1)");
  require(cfg.convergence_tol >= 0.0, ErrorCode::BadConfig, "convergence tolerance must be >= 0");
  require(cfg.decay_steps >= 1, ErrorCode::BadConfig, "decay steps must be >= 1");
}

/// Learning rate for outer iteration t of max_outer. Geometric decay
/// interpolates log-linearly; step decay holds decay_steps plateaus.
inline double lr_schedule(const TrainConfig& cfg, std::size_t outer_iter, std::size_t max_outer) {
  if (max_outer == 0) return cfg.lr_start;
  double frac = static_cast<double>(std::min(outer_iter, max_outer)) / static_cast<double>(max_outer);
  if (cfg.decay == LrDecay::Step) {
    const auto steps = static_cast<double>(cfg.decay_steps);
    frac = outer_iter >= max_outer ? 1.0 : std::floor(frac * steps) / steps;
  }
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, frac);
}

/// Heavy-ball momentum: v <- momentum * v - lr * g; theta <- theta + v.
inline void sgd_step(EncoderState& state, Velocity& velocity, const std::vector<LayerParams>& grads, double lr,
                     double momentum) {
  require(velocity.size() == state.layers.size() && grads.size() == state.layers.size(), ErrorCode::ShapeMismatch,
          "layer count mismatch between parameters, velocity and gradients");
  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    auto& p = state.layers[l];
    auto& v = velocity[l];
    const auto& g = grads[l];
    require(v.weight.rows() == p.weight.rows() && v.weight.cols() == p.weight.cols() &&
                g.weight.rows() == p.weight.rows() && g.weight.cols() == p.weight.cols() &&
                v.bias.size() == p.bias.size() && g.bias.size() == p.bias.size(),
            ErrorCode::ShapeMismatch, "shape mismatch in layer " + std::to_string(l));
    v.weight = momentum * v.weight - lr * g.weight;
    v.bias = momentum * v.bias - lr * g.bias;
    p.weight += v.weight;
    p.bias += v.bias;
  }
}

/// One log line per outer iteration, measured on the full training set right
/// after the center update and before that iteration's SGD steps.
struct TrainRecord {
  std::size_t outer = 0;
  int stage = 1;
  double lr = 0.0;
  double eta1 = 0.0;
  double mean_loss = 0.0;
  std::vector<double> level_ce;
  double penalty = 0.0;
  double box_gap = 0.0;
  double center_drift = 0.0;
  std::size_t sgd_steps = 0;
  std::uint64_t centers_checksum = 0;
  double wall_seconds = 0.0;
};

using TrainLog = std::vector<TrainRecord>;

inline nlohmann::json to_json(const TrainRecord& r) {
  return {{"outer", r.outer},         {"stage", r.stage},
          {"lr", r.lr},               {"eta1", r.eta1},
          {"mean_loss", r.mean_loss}, {"level_ce", r.level_ce},
          {"penalty", r.penalty},     {"box_gap", r.box_gap},
          {"center_drift", r.center_drift}, {"sgd_steps", r.sgd_steps},
          {"centers_checksum", r.centers_checksum}, {"wall_seconds", r.wall_seconds}};
}

/// Full-dataset statistics at the end of a stage.
struct StageSummary {
  double mean_loss = 0.0;
  double penalty = 0.0;
  double box_gap = 0.0;

  bool operator==(const StageSummary&) const = default;
};

/// Everything needed to continue a run bit-for-bit.
struct TrainState {
  EncoderState encoder;
  Velocity velocity;
  CenterSet centers;
  std::mt19937_64 rng;
  std::vector<std::uint64_t> order;  // current epoch permutation
  std::size_t cursor = 0;            // next position in order
  std::size_t next_outer = 0;
  int stage = 1;
  bool stage_converged = false;
  bool has_prev_loss = false;
  double prev_loss = 0.0;
  bool finished = false;
  StageSummary stage1;
  StageSummary stage2;
};

struct TrainHooks {
  std::function<void(const TrainRecord&)> on_record;
  std::function<void(const TrainState&)> on_checkpoint;
};

struct TrainResult {
  EncoderState encoder;
  CenterSet centers;
  TrainLog log;
  StageSummary stage1;
  StageSummary stage2;
  bool finished = false;
};

namespace detail {

inline void refresh_centers(CenterSet& centers, const LabelTaxonomy& tax, const RowMatrix& embeddings,
                            std::span<const LabelPath> paths) {
  update_fine_centers(centers, embeddings, paths);
  propagate_upper_centers(centers, tax);
}

inline void fisher_yates(std::vector<std::uint64_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
}

inline LossConfig stage_loss(const LossConfig& base, const TrainConfig& cfg, int stage) {
  LossConfig out = base;
  if (stage == 2) out.eta1 *= cfg.stage2_eta1_multiplier;
  return out;
}

inline StageSummary summarize(const RowMatrix& embeddings, std::span<const LabelPath> paths, const CenterSet& centers,
                              const LossConfig& loss) {
  const LossReport rep = mean_loss(embeddings, paths, centers, loss);
  return {rep.total, rep.penalty, mean_box_gap(embeddings, loss.alpha)};
}

inline void check_inputs(const Dataset& ds, const LabelTaxonomy& tax, const EncoderState& encoder,
                         const LossConfig& loss, const TrainConfig& cfg) {
  validate_taxonomy(tax);
  validate_loss_config(loss);
  validate_train_config(cfg);
  require(loss.sigma2.size() == tax.levels(), ErrorCode::BadCardinality, "sigma2 schedule does not match taxonomy");
  require(ds.size() >= 1, ErrorCode::TooSmall, "training set is empty");
  require(ds.dim() == encoder.input_dim(), ErrorCode::DimensionMismatch,
          "feature width " + std::to_string(ds.dim()) + " != encoder input " + std::to_string(encoder.input_dim()));
  for (const auto& p : ds.paths) require_valid_path(tax, p);
}

}  // namespace detail

/// Mandatory first pass: encode everything, set leaf centers, propagate.
inline TrainState initial_state(const Dataset& ds, const LabelTaxonomy& tax, const EncoderState& encoder,
                                const LossConfig& loss, const TrainConfig& cfg) {
  detail::check_inputs(ds, tax, encoder, loss, cfg);
  TrainState st;
  st.encoder = encoder;
  st.velocity = zero_like(encoder);
  st.centers = make_center_set(tax, encoder.output_dim());
  st.rng.seed(cfg.seed);
  st.order.resize(ds.size());
  std::iota(st.order.begin(), st.order.end(), 0);
  st.cursor = st.order.size();  // forces a shuffle before the first batch
  detail::refresh_centers(st.centers, tax, forward_batch(encoder, ds.features), ds.paths);
  return st;
}

/// Alternates full-pass center estimation with mini-batch SGD on the
/// encoder. Stage one uses the loss as configured; stage two scales eta1 by
/// stage2_eta1_multiplier. Each stage ends on convergence of the full-data
/// mean loss or when its share of max_outer is used up.
inline TrainResult continue_training(const Dataset& ds, const LabelTaxonomy& tax, const LossConfig& loss,
                                     const TrainConfig& cfg, TrainState& st, const TrainHooks& hooks = {}) {
  detail::check_inputs(ds, tax, st.encoder, loss, cfg);
  const auto clock_start = std::chrono::steady_clock::now();
  const auto stage2_iters =
      static_cast<std::size_t>(std::llround(cfg.stage2_fraction * static_cast<double>(cfg.max_outer)));
  const std::size_t stage1_end = cfg.max_outer - stage2_iters;
  const std::size_t steps_per_outer =
      cfg.inner_iters > 0 ? cfg.inner_iters : (ds.size() + cfg.batch_size - 1) / cfg.batch_size;

  TrainResult result;
  std::size_t executed = 0;
  while (!st.finished) {
    if (st.stage == 1 && (st.next_outer >= stage1_end || st.stage_converged)) {
      const RowMatrix emb = forward_batch(st.encoder, ds.features);
      detail::refresh_centers(st.centers, tax, emb, ds.paths);
      st.stage1 = detail::summarize(emb, ds.paths, st.centers, detail::stage_loss(loss, cfg, 1));
      st.stage = 2;
      st.stage_converged = false;
      st.has_prev_loss = false;
      continue;
    }
    if (st.stage == 2 && (st.next_outer >= cfg.max_outer || st.stage_converged)) {
      const RowMatrix emb = forward_batch(st.encoder, ds.features);
      detail::refresh_centers(st.centers, tax, emb, ds.paths);
      st.stage2 = detail::summarize(emb, ds.paths, st.centers, detail::stage_loss(loss, cfg, 2));
      st.finished = true;
      if (hooks.on_checkpoint) hooks.on_checkpoint(st);
      break;
    }
    if (cfg.halt_after > 0 && executed >= cfg.halt_after) break;

    const LossConfig stage_cfg = detail::stage_loss(loss, cfg, st.stage);
    const CenterSet previous = st.centers;
    const RowMatrix emb = forward_batch(st.encoder, ds.features);
    detail::refresh_centers(st.centers, tax, emb, ds.paths);
    const LossReport full = mean_loss(emb, ds.paths, st.centers, stage_cfg);

    TrainRecord rec;
    rec.outer = st.next_outer;
    rec.stage = st.stage;
    rec.lr = lr_schedule(cfg, st.next_outer, cfg.max_outer);
    rec.eta1 = stage_cfg.eta1;
    rec.mean_loss = full.total;
    rec.level_ce = full.level_ce;
    rec.penalty = full.penalty;
    rec.box_gap = mean_box_gap(emb, loss.alpha);
    rec.center_drift = max_center_drift(previous, st.centers);
    rec.centers_checksum = centers_checksum(st.centers);
    require(std::isfinite(full.total), ErrorCode::Diverged,
            "mean loss became non-finite at outer iteration " + std::to_string(st.next_outer));

    if (st.has_prev_loss &&
        std::abs(full.total - st.prev_loss) <= cfg.convergence_tol * std::max(std::abs(st.prev_loss), 1e-300)) {
      st.stage_converged = true;
    } else {
      for (std::size_t step = 0; step < steps_per_outer; ++step) {
        if (st.cursor >= st.order.size()) {
          detail::fisher_yates(st.order, st.rng);
          st.cursor = 0;
        }
        const std::size_t take = std::min(cfg.batch_size, st.order.size() - st.cursor);
        RowMatrix x(static_cast<Eigen::Index>(take), ds.features.cols());
        std::vector<LabelPath> paths(take);
        for (std::size_t b = 0; b < take; ++b) {
          const auto row = static_cast<Eigen::Index>(st.order[st.cursor + b]);
          x.row(static_cast<Eigen::Index>(b)) = ds.features.row(row);
          paths[b] = ds.paths[static_cast<std::size_t>(row)];
        }
        st.cursor += take;
        const ForwardCache cache = forward_cached(st.encoder, x);
        RowMatrix upstream(cache.output().rows(), cache.output().cols());
        for (Eigen::Index b = 0; b < upstream.rows(); ++b)
          upstream.row(b) =
              hierarchy_loss_grad(cache.output().row(b).transpose(), paths[static_cast<std::size_t>(b)], st.centers,
                                  stage_cfg)
                  .transpose();
        const EncoderGradient grad = backward_cached(st.encoder, cache, upstream);
        sgd_step(st.encoder, st.velocity, grad.layers, rec.lr, cfg.momentum);
      }
      rec.sgd_steps = steps_per_outer;
      require(is_finite(st.encoder), ErrorCode::Diverged,
              "encoder parameters became non-finite at outer iteration " + std::to_string(st.next_outer));
      // Centers stay frozen for the whole inner loop.
      require(centers_checksum(st.centers) == rec.centers_checksum, ErrorCode::Diverged,
              "centers changed during the inner loop");
    }
    st.prev_loss = full.total;
    st.has_prev_loss = true;
    ++st.next_outer;
    ++executed;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    if (hooks.on_record) hooks.on_record(rec);
    result.log.push_back(std::move(rec));
    if (hooks.on_checkpoint) hooks.on_checkpoint(st);
  }
  result.encoder = st.encoder;
  result.centers = st.centers;
  result.stage1 = st.stage1;
  result.stage2 = st.stage2;
  result.finished = st.finished;
  return result;
}

inline TrainResult train(const Dataset& ds, const LabelTaxonomy& tax, const EncoderState& encoder_init,
                         const LossConfig& loss, const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  TrainState st = initial_state(ds, tax, encoder_init, loss, cfg);
  if (cfg.max_outer == 0) {
    TrainResult r;
    r.encoder = st.encoder;
    r.centers = st.centers;
    r.finished = true;
    return r;
  }
  return continue_training(ds, tax, loss, cfg, st, hooks);
}

// Training checkpoint layout (little-endian):
//   "HITS" | u32 version | encoder (HIHE block) | velocity f64 blocks |
//   centers snapshot | u64 rng text length | rng text | u64 n | u64 order[n] |
//   u64 cursor | u64 next_outer | u32 stage | u32 flags | f64 prev_loss |
//   f64 x3 stage-one summary | f64 x3 stage-two summary
inline constexpr std::uint32_t kTrainStateVersion = 1;

inline void save_train_state(const TrainState& st, const std::filesystem::path& path) {
  auto out = io::open_out(path);
  io::BinaryWriter w(out);
  w.magic("HITS");
  w.u32(kTrainStateVersion);
  write_encoder(w, st.encoder);
  for (const auto& v : st.velocity) {
    for (Eigen::Index r = 0; r < v.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < v.weight.cols(); ++c) w.f64(v.weight(r, c));
    for (Eigen::Index r = 0; r < v.bias.size(); ++r) w.f64(v.bias(r));
  }
  write_centers(out, st.centers);
  std::ostringstream rng;
  rng << st.rng;
  w.u64(rng.str().size());
  w.bytes(rng.str());
  w.u64(st.order.size());
  for (auto v : st.order) w.u64(v);
  w.u64(st.cursor);
  w.u64(st.next_outer);
  w.u32(static_cast<std::uint32_t>(st.stage));
  w.u32((st.stage_converged ? 1u : 0u) | (st.has_prev_loss ? 2u : 0u) | (st.finished ? 4u : 0u));
  w.f64(st.prev_loss);
  for (const auto* s : {&st.stage1, &st.stage2}) {
    w.f64(s->mean_loss);
    w.f64(s->penalty);
    w.f64(s->box_gap);
  }
  w.check(path.string());
}

inline TrainState load_train_state(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  io::BinaryReader r(in, path.string());
  r.expect_magic("HITS");
  const auto version = r.u32();
  require(version == kTrainStateVersion, ErrorCode::BadFormat,
          path.string() + ": unsupported training state version " + std::to_string(version));
  TrainState st;
  st.encoder = read_encoder(r);
  st.velocity = zero_like(st.encoder);
  for (auto& v : st.velocity) {
    for (Eigen::Index i = 0; i < v.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < v.weight.cols(); ++j) v.weight(i, j) = r.f64();
    for (Eigen::Index i = 0; i < v.bias.size(); ++i) v.bias(i) = r.f64();
  }
  st.centers = read_centers(in, path.string());
  std::istringstream rng(r.bytes(r.u64()));
  rng >> st.rng;
  require(!rng.fail(), ErrorCode::BadFormat, path.string() + ": bad RNG state");
  st.order.resize(r.u64());
  for (auto& v : st.order) v = r.u64();
  st.cursor = r.u64();
  st.next_outer = r.u64();
  st.stage = static_cast<int>(r.u32());
  const auto flags = r.u32();
  st.stage_converged = flags & 1u;
  st.has_prev_loss = flags & 2u;
  st.finished = flags & 4u;
  st.prev_loss = r.f64();
  for (auto* s : {&st.stage1, &st.stage2}) {
    s->mean_loss = r.f64();
    s->penalty = r.f64();
    s->box_gap = r.f64();
  }
  return st;
}

}  // namespace hihash
