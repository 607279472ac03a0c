// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode differentiation over dense float tensors.
//
// Spatial tensors have shape [C, X, Y, Z] and are stored channel-major with x
// fastest inside each channel: flat = x + X * (y + Y * (z + Z * c)). Convolution
// weights are [C_out, C_in, kx, ky, kz], kernel taps stored x fastest. Nodes are
// appended to a Tape in creation order, which is therefore a topological order.

#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace agemap::ad {

using Shape = std::vector<std::size_t>;
using NodeId = std::size_t;

std::size_t numel(const Shape& s);

class Tape;

/// Lightweight handle to a node on a tape.
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return tape_ != nullptr; }
  NodeId id() const { return id_; }
  Tape& tape() const { return *tape_; }
  const Shape& shape() const;
  std::span<const float> value() const;
  std::size_t size() const { return value().size(); }
  float item() const;  // value of a one-element tensor

 private:
  friend class Tape;
  Tensor(Tape* tape, NodeId id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

class Gradients {
 public:
  bool contains(NodeId id) const { return grads_.contains(id); }
  std::span<const float> of(NodeId id) const;
  std::span<const float> of(const Tensor& t) const { return of(t.id()); }

 private:
  friend class Tape;
  std::unordered_map<NodeId, std::vector<float>> grads_;
};

/// Handed to each node's backward function.
class BackwardContext {
 public:
  std::span<const float> grad_out;
  /// Accumulation buffer for input `k`, or an empty span when that input
  /// does not need a gradient.
  std::span<float> grad_in(std::size_t k);
  std::span<const float> input_value(std::size_t k) const;
  std::span<const float> output_value() const;

 private:
  friend class Tape;
  BackwardContext(Tape& tape, NodeId self, std::vector<std::vector<float>>& grads)
      : tape_(tape), self_(self), grads_(grads) {}
  Tape& tape_;
  NodeId self_;
  std::vector<std::vector<float>>& grads_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<float> value);
  Tensor parameter(Shape shape, std::vector<float> value);

  /// Reverse sweep from a one-element root with unit upstream gradient.
  /// Returns gradients of every parameter and of each retained node.
  Gradients backward(const Tensor& root, std::span<const NodeId> retain = {});

  std::size_t size() const { return nodes_.size(); }

  /// Appends an op result. `inputs` must already be on this tape.
  Tensor record(Shape shape, std::vector<float> value, std::vector<NodeId> inputs, BackwardFn backward);

  const Shape& shape(NodeId id) const { return nodes_.at(id).shape; }
  std::span<const float> value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

 private:
  friend class BackwardContext;
  struct Node {
    Shape shape;
    std::vector<float> value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_parameter = false;
  };
  Tensor push(Node node);
  std::vector<Node> nodes_;
};

struct ConvGeometry {
  std::array<std::size_t, 3> kernel{3, 3, 3};  // 1 or 3 per axis, padding kernel / 2
  std::array<std::size_t, 3> stride{1, 1, 1};
};

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride);

/// Cross-correlation over [C_in, X, Y, Z]; `bias` may be an invalid Tensor.
Tensor conv(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvGeometry& geom);

/// 3x3x3 kernel, padding 1, the same stride on all axes.
Tensor conv3(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride);

/// 3x3 kernel on planar tensors [C, X, Y, 1].
Tensor conv2(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride);

/// Bias-free 1x1x1 strided convolution for residual skips. Planar inputs
/// (Z = 1) keep Z = 1.
Tensor projection1x1(const Tensor& input, const Tensor& weight, std::size_t stride);

Tensor relu(const Tensor& t);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, float factor);

/// Per-channel spatial mean: [C, ...] -> [C].
Tensor gap(const Tensor& t);

/// W [m, n] row-major times t [n] plus b [m].
Tensor linear(const Tensor& t, const Tensor& weight, const Tensor& bias);

/// Mean absolute error; gradient sign(pred - target) / B with sign(0) = 0.
Tensor mae_loss(const Tensor& pred, std::span<const float> target);

/// Flattened concatenation.
Tensor concat(std::span<const Tensor> parts);

/// Sum of w_i * t_i with constant weights; [1].
Tensor weighted_sum(const Tensor& t, std::span<const float> weights);

}  // namespace agemap::ad
