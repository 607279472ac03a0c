// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/agenet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "agemap/error.hpp"

namespace agemap {

namespace {

std::string dims_str(const Dims& d) {
  return std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" + std::to_string(d.nz);
}

}  // namespace

void NetConfig::validate() const {
  for (std::size_t c : channels) require(c > 0, "net channels must be positive");
  require(channels[0] < channels[1] && channels[1] < channels[2], "net stage channels must be increasing");
  require(hidden >= 1, "net hidden width must be >= 1");
  require(in_channels >= 1, "net needs at least one input channel");
  // each stage opens with a stride-2 conv; stage 3 still needs extent >= 3
  const auto half = [](std::size_t n) { return (n - 1) / 2 + 1; };
  const auto reduced = [&](std::size_t n) { return half(half(half(n))); };
  const bool xy_ok = input.nx >= 1 && input.ny >= 1 && reduced(input.nx) >= 3 && reduced(input.ny) >= 3;
  if (planar) {
    require(xy_ok && input.nz == 1, "planar net input must be X>=17, Y>=17, Z=1, got " + dims_str(input));
  } else {
    require(xy_ok && input.nz >= 1 && reduced(input.nz) >= 3, "net input dims must each be >= 17, got " + dims_str(input));
  }
}

std::vector<std::pair<std::string, ad::Shape>> AgeNet::layout(const NetConfig& c) {
  const std::size_t kz = c.planar ? 1 : 3;
  std::vector<std::pair<std::string, ad::Shape>> out;
  out.emplace_back("stem.weight", ad::Shape{c.channels[0], c.in_channels, 3, 3, kz});
  out.emplace_back("stem.bias", ad::Shape{c.channels[0]});
  std::size_t prev = c.channels[0];
  for (int s = 0; s < 3; ++s) {
    const std::string p = "stage" + std::to_string(s + 1) + ".";
    const std::size_t ch = c.channels[s];
    out.emplace_back(p + "conv_a.weight", ad::Shape{ch, prev, 3, 3, kz});
    out.emplace_back(p + "conv_a.bias", ad::Shape{ch});
    out.emplace_back(p + "conv_b.weight", ad::Shape{ch, ch, 3, 3, kz});
    out.emplace_back(p + "conv_b.bias", ad::Shape{ch});
    out.emplace_back(p + "skip.weight", ad::Shape{ch, prev, 1, 1, 1});
    prev = ch;
  }
  out.emplace_back("fc1.weight", ad::Shape{c.hidden, prev});
  out.emplace_back("fc1.bias", ad::Shape{c.hidden});
  out.emplace_back("fc2.weight", ad::Shape{1, c.hidden});
  out.emplace_back("fc2.bias", ad::Shape{1});
  return out;
}

AgeNet::AgeNet(NetConfig config) : config_(std::move(config)) {
  config_.validate();
  for (auto& [name, shape] : layout(config_)) params_.push_back({name, shape, std::vector<float>(ad::numel(shape), 0.0f)});
}

AgeNet AgeNet::initialized(NetConfig config, float output_bias) {
  AgeNet net(std::move(config));
  std::mt19937_64 rng(net.config_.seed);
  for (NamedParam& p : net.params_) {
    if (p.shape.size() < 2) continue;  // biases stay zero
    const std::size_t fan_in = ad::numel(p.shape) / p.shape[0];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
    for (float& w : p.value) w = static_cast<float>(dist(rng));
  }
  net.param("fc2.bias").value[0] = output_bias;
  return net;
}

NamedParam& AgeNet::param(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  fail(Errc::invalid_argument, "no parameter named " + std::string(name));
}

const NamedParam& AgeNet::param(std::string_view name) const {
  return const_cast<AgeNet*>(this)->param(name);
}

std::size_t AgeNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

ad::Shape AgeNet::input_shape() const {
  return {config_.in_channels, config_.input.nx, config_.input.ny, config_.input.nz};
}

std::vector<ad::Tensor> AgeNet::bind(ad::Tape& tape) const {
  std::vector<ad::Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(tape.parameter(p.shape, p.value));
  return out;
}

AgeNet::Pass AgeNet::forward(ad::Tape& tape, std::span<const ad::Tensor> w, std::span<const float> input) const {
  const ad::Shape shape = input_shape();
  if (input.size() != ad::numel(shape))
    fail(Errc::invalid_argument, "net input has " + std::to_string(input.size()) + " values, expected " +
                                     std::to_string(ad::numel(shape)) + " (" + dims_str(config_.input) + ")");
  return forward(w, tape.constant(shape, std::vector<float>(input.begin(), input.end())));
}

AgeNet::Pass AgeNet::forward(std::span<const ad::Tensor> w, const ad::Tensor& input) const {
  require(input.shape() == input_shape(), "forward: input shape does not match the net");
  require(w.size() == params_.size(), "forward: bound parameter count mismatch");
  const auto conv = [&](const ad::Tensor& x, std::size_t k, std::size_t stride) {
    return config_.planar ? ad::conv2(x, w[k], w[k + 1], stride) : ad::conv3(x, w[k], w[k + 1], stride);
  };

  ad::Tensor h = ad::relu(conv(input, 0, 1));
  std::size_t k = 2;
  for (int s = 0; s < 3; ++s, k += 5) {
    const ad::Tensor a = ad::relu(conv(h, k, 2));
    const ad::Tensor b = conv(a, k + 2, 1);
    const ad::Tensor skip = ad::projection1x1(h, w[k + 4], 2);
    h = ad::relu(ad::add(b, skip));
  }
  const ad::Tensor cam_layer = h;
  const ad::Tensor hidden = ad::relu(ad::linear(ad::gap(h), w[k], w[k + 1]));
  const ad::Tensor out = ad::linear(hidden, w[k + 2], w[k + 3]);
  return {out, cam_layer};
}

AgeNet::Pass AgeNet::forward(ad::Tape& tape, std::span<const float> input) const {
  const auto bound = bind(tape);
  return forward(tape, bound, input);
}

double AgeNet::predict(std::span<const float> input) const {
  ad::Tape tape;
  return forward(tape, input).prediction.item();
}

double AgeNet::predict(const Volume3& image) const {
  if (config_.in_channels != 1 || image.dims() != config_.input)
    fail(Errc::invalid_argument, "image dims " + dims_str(image.dims()) + " do not match net input " +
                                     dims_str(config_.input));
  return predict(image.data());
}

}  // namespace agemap
