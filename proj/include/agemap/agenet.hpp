// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agemap/autodiff.hpp"
#include "agemap/volume.hpp"

namespace agemap {

/// Residual age regressor: stem conv, three strided residual stages, global
/// average pooling, fc(hidden) + relu, fc(1). With `planar` set the same
/// topology runs on [C, X, Y, 1] inputs with 3x3 kernels.
struct NetConfig {
  std::array<std::size_t, 3> channels{8, 16, 32};
  std::size_t hidden = 256;
  Dims input{32, 64, 24};
  std::size_t in_channels = 1;
  bool planar = false;
  std::uint64_t seed = 7;

  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

struct NamedParam {
  std::string name;
  ad::Shape shape;
  std::vector<float> value;
};

class AgeNet {
 public:
  /// All parameters zero.
  explicit AgeNet(NetConfig config);

  /// He-normal weights from config.seed, zero biases, fc2 bias = output_bias.
  static AgeNet initialized(NetConfig config, float output_bias);

  const NetConfig& config() const { return config_; }
  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }
  NamedParam& param(std::string_view name);
  const NamedParam& param(std::string_view name) const;
  std::size_t parameter_count() const;

  /// Parameter layout implied by a config, in storage order.
  static std::vector<std::pair<std::string, ad::Shape>> layout(const NetConfig& config);

  struct Pass {
    ad::Tensor prediction;  // [1]
    ad::Tensor cam_layer;   // stage-3 post-activation [C3, X3, Y3, Z3]
  };

  /// Leaves for every parameter on `tape`, in params() order.
  std::vector<ad::Tensor> bind(ad::Tape& tape) const;

  /// `input` is [in_channels, X, Y, Z] in tensor layout.
  Pass forward(ad::Tape& tape, std::span<const ad::Tensor> bound, std::span<const float> input) const;
  Pass forward(ad::Tape& tape, std::span<const float> input) const;
  /// As above with the input already on the tape (e.g. as a parameter).
  Pass forward(std::span<const ad::Tensor> bound, const ad::Tensor& input) const;

  double predict(std::span<const float> input) const;
  double predict(const Volume3& image) const;

  ad::Shape input_shape() const;

 private:
  NetConfig config_;
  std::vector<NamedParam> params_;
};

}  // namespace agemap
