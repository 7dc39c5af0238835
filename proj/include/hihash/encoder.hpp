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
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hihash/binary_io.hpp"
#include "hihash/error.hpp"
#include "hihash/linalg.hpp"

namespace hihash {

enum class Activation : std::uint32_t { Identity = 0, Tanh = 1, Relu = 2 };

enum class InitScheme { Xavier, Zero };

/// One affine layer: y = weight * x + bias, weight is (out x in).
struct LayerParams {
  Matrix weight;
  Vector bias;

  bool operator==(const LayerParams& o) const {
    return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() && bias.size() == o.bias.size() &&
           weight == o.weight && bias == o.bias;
  }
};

/// Parameters of a feed-forward encoder. The activation is applied between
/// layers, never after the last one, so the output is unbounded and the loss
/// penalty alone keeps it near the [-alpha, alpha] box.
struct EncoderState {
  std::vector<LayerParams> layers;
  Activation activation = Activation::Tanh;

  std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols()); }
  std::size_t output_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows()); }

  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    if (layers.empty()) return d;
    d.push_back(input_dim());
    for (const auto& l : layers) d.push_back(static_cast<std::size_t>(l.weight.rows()));
    return d;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  bool operator==(const EncoderState&) const = default;
};

/// Mean parameter gradients over a batch plus per-sample input gradients.
struct EncoderGradient {
  std::vector<LayerParams> layers;
  RowMatrix input;
};

using Velocity = std::vector<LayerParams>;

inline Velocity zero_like(const EncoderState& state) {
  Velocity v;
  v.reserve(state.layers.size());
  for (const auto& l : state.layers)
    v.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  return v;
}

inline bool is_finite(const EncoderState& state) {
  for (const auto& l : state.layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

namespace detail {

inline void check_dims(const std::vector<std::size_t>& dims) {
  require(dims.size() >= 2, ErrorCode::BadDims, "encoder needs an input and an output dimension");
  for (std::size_t d : dims) require(d > 0, ErrorCode::BadDims, "encoder dimensions must be positive");
}

inline RowMatrix activate(Activation act, const RowMatrix& z) {
  switch (act) {
    case Activation::Tanh: return z.array().tanh().matrix();
    case Activation::Relu: return z.cwiseMax(0.0);
    case Activation::Identity: return z;
  }
  return z;
}

// d act / d z, expressed through the pre-activation z and the output h.
inline RowMatrix activation_slope(Activation act, const RowMatrix& z, const RowMatrix& h) {
  switch (act) {
    case Activation::Tanh: return (1.0 - h.array().square()).matrix();
    case Activation::Relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::Identity: return RowMatrix::Ones(z.rows(), z.cols());
  }
  return RowMatrix::Ones(z.rows(), z.cols());
}

}  // namespace detail

inline EncoderState init_encoder(const std::vector<std::size_t>& dims, std::uint64_t seed,
                                 InitScheme scheme = InitScheme::Xavier, Activation activation = Activation::Tanh) {
  detail::check_dims(dims);
  std::mt19937_64 rng(seed);
  EncoderState state;
  state.activation = activation;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(dims[l]);
    const auto fan_out = static_cast<Eigen::Index>(dims[l + 1]);
    LayerParams layer{Matrix::Zero(fan_out, fan_in), Vector::Zero(fan_out)};
    if (scheme == InitScheme::Xavier) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      // Row-major draw order so the result does not depend on storage order.
      for (Eigen::Index r = 0; r < fan_out; ++r) {
        for (Eigen::Index c = 0; c < fan_in; ++c) {
          const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
          layer.weight(r, c) = (2.0 * u - 1.0) * bound;
        }
      }
    }
    state.layers.push_back(std::move(layer));
  }
  return state;
}

/// Intermediate values of a batched forward pass, kept for backward.
struct ForwardCache {
  std::vector<RowMatrix> pre;   // z_l for l = 1..M
  std::vector<RowMatrix> post;  // h_0 = x, h_l for l = 1..M (h_M == z_M)

  const RowMatrix& output() const { return post.back(); }
};

inline ForwardCache forward_cached(const EncoderState& state, const RowMatrix& inputs) {
  require(!state.layers.empty(), ErrorCode::BadDims, "encoder has no layers");
  require(static_cast<std::size_t>(inputs.cols()) == state.input_dim(), ErrorCode::DimensionMismatch,
          "input width " + std::to_string(inputs.cols()) + " != encoder input " + std::to_string(state.input_dim()));
  ForwardCache cache;
  cache.post.push_back(inputs);
  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    const auto& layer = state.layers[l];
    RowMatrix z = cache.post.back() * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    const bool last = (l + 1 == state.layers.size());
    RowMatrix h = last ? z : detail::activate(state.activation, z);
    cache.pre.push_back(std::move(z));
    cache.post.push_back(std::move(h));
  }
  return cache;
}

inline RowMatrix forward_batch(const EncoderState& state, const RowMatrix& inputs) {
  return forward_cached(state, inputs).output();
}

inline Embedding forward(const EncoderState& state, const Eigen::Ref<const Vector>& x) {
  RowMatrix in = x.transpose();
  return forward_batch(state, in).row(0).transpose();
}

/// Back-propagates per-sample upstream gradients (rows of grad_out) through a
/// cached forward pass. Parameter gradients are averaged over the batch.
inline EncoderGradient backward_cached(const EncoderState& state, const ForwardCache& cache,
                                       const RowMatrix& grad_out) {
  const std::size_t M = state.layers.size();
  require(cache.post.size() == M + 1, ErrorCode::ShapeMismatch, "forward cache does not match encoder");
  require(static_cast<std::size_t>(grad_out.cols()) == state.output_dim() && grad_out.rows() == cache.output().rows(),
          ErrorCode::DimensionMismatch, "upstream gradient shape does not match encoder output");
  const double inv_batch = 1.0 / static_cast<double>(grad_out.rows());
  EncoderGradient grad;
  grad.layers.resize(M);
  RowMatrix dz = grad_out;
  for (std::size_t l = M; l-- > 0;) {
    const RowMatrix& h_prev = cache.post[l];
    grad.layers[l].weight = (dz.transpose() * h_prev) * inv_batch;
    grad.layers[l].bias = dz.colwise().sum().transpose() * inv_batch;
    RowMatrix dh = dz * state.layers[l].weight;
    if (l == 0) {
      grad.input = std::move(dh);
    } else {
      dz = dh.cwiseProduct(detail::activation_slope(state.activation, cache.pre[l - 1], cache.post[l]));
    }
  }
  return grad;
}

inline EncoderGradient backward_batch(const EncoderState& state, const RowMatrix& inputs, const RowMatrix& grad_out) {
  return backward_cached(state, forward_cached(state, inputs), grad_out);
}

inline EncoderGradient backward(const EncoderState& state, const Eigen::Ref<const Vector>& x,
                                const Eigen::Ref<const Vector>& grad_out) {
  require(static_cast<std::size_t>(grad_out.size()) == state.output_dim(), ErrorCode::DimensionMismatch,
          "upstream gradient length does not match encoder output");
  RowMatrix in = x.transpose();
  RowMatrix g = grad_out.transpose();
  return backward_batch(state, in, g);
}

// Checkpoint layout (little-endian):
//   "HIHE" | u32 version | u32 layer count M | u32 dims[M+1] | u32 activation |
//   per layer: f64 weight (row-major, out x in), f64 bias[out]
inline constexpr std::uint32_t kEncoderFormatVersion = 1;

inline void write_encoder(io::BinaryWriter& w, const EncoderState& state) {
  w.magic("HIHE");
  w.u32(kEncoderFormatVersion);
  w.u32(static_cast<std::uint32_t>(state.layers.size()));
  for (std::size_t d : state.dims()) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(state.activation));
  for (const auto& layer : state.layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) w.f64(layer.weight(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) w.f64(layer.bias(r));
  }
}

inline EncoderState read_encoder(io::BinaryReader& r) {
  r.expect_magic("HIHE");
  const auto version = r.u32();
  require(version == kEncoderFormatVersion, ErrorCode::BadFormat,
          r.source() + ": unsupported encoder version " + std::to_string(version));
  const auto M = r.u32();
  require(M >= 1 && M < 1024, ErrorCode::BadFormat, r.source() + ": bad layer count");
  std::vector<std::size_t> dims(M + 1);
  for (auto& d : dims) d = r.u32();
  const auto act = r.u32();
  require(act <= 2, ErrorCode::BadFormat, r.source() + ": unknown activation");
  detail::check_dims(dims);
  EncoderState state = init_encoder(dims, 0, InitScheme::Zero, static_cast<Activation>(act));
  for (auto& layer : state.layers) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = r.f64();
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = r.f64();
  }
  return state;
}

inline void save_encoder(const EncoderState& state, const std::filesystem::path& path) {
  auto out = io::open_out(path);
  io::BinaryWriter w(out);
  write_encoder(w, state);
  w.check(path.string());
}

inline EncoderState load_encoder(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  io::BinaryReader r(in, path.string());
  return read_encoder(r);
}

}  // namespace hihash
