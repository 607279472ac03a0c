// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference sweep over every tape op and the full network.

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "agemap/agenet.hpp"
#include "fd_check.hpp"

namespace agemap::testing {

struct OpReport {
  int instances = 0;
  double max_rel_error = 0;
};

inline void record(OpReport& rep, const FdResult& r) {
  ++rep.instances;
  rep.max_rel_error = std::max(rep.max_rel_error, r.rel_error());
}

inline NetConfig tiny_net(bool planar) {
  NetConfig c;
  c.channels = {2, 3, 4};
  c.hidden = 5;
  c.input = planar ? Dims{18, 17, 1} : Dims{17, 18, 17};
  c.in_channels = planar ? 2 : 1;
  c.planar = planar;
  return c;
}

/// `instances` random draws per op. Returns one report per op name.
inline std::map<std::string, OpReport> gradient_suite(int instances, std::uint64_t seed = 2024) {
  std::map<std::string, OpReport> out;
  std::mt19937_64 rng(seed);
  const double h = 2e-3;

  for (int n = 0; n < instances; ++n) {
    const std::uint64_t s = seed * 1000 + std::uint64_t(n);
    {
      const ad::Shape in{2, 5, 4, 3}, w{3, 2, 3, 3, 3};
      for (std::size_t stride : {1u, 2u}) {
        const auto r = fd_check(
            [stride](ad::Tape&, std::span<const ad::Tensor> p) { return ad::conv3(p[0], p[1], p[2], stride); },
            {{in, random_values(ad::numel(in), rng)}, {w, random_values(ad::numel(w), rng)}, {{3}, random_values(3, rng)}},
            s, h);
        record(out[stride == 1 ? "conv3" : "conv3_stride2"], r);
      }
    }
    {
      const ad::Shape in{2, 5, 6, 1}, w{3, 2, 3, 3, 1};
      const auto r = fd_check(
          [](ad::Tape&, std::span<const ad::Tensor> p) { return ad::conv2(p[0], p[1], p[2], 2); },
          {{in, random_values(ad::numel(in), rng)}, {w, random_values(ad::numel(w), rng)}, {{3}, random_values(3, rng)}},
          s, h);
      record(out["conv2"], r);
    }
    {
      const ad::Shape in{3, 5, 4, 3}, w{2, 3, 1, 1, 1};
      const auto r = fd_check(
          [](ad::Tape&, std::span<const ad::Tensor> p) { return ad::projection1x1(p[0], p[1], 2); },
          {{in, random_values(ad::numel(in), rng)}, {w, random_values(ad::numel(w), rng)}}, s, h);
      record(out["projection1x1"], r);
    }
    {
      const ad::Shape in{2, 3, 4, 2};
      const auto r = fd_check([](ad::Tape&, std::span<const ad::Tensor> p) { return ad::relu(p[0]); },
                              {{in, random_values(ad::numel(in), rng, -1, 1, 0.05)}}, s, h);
      record(out["relu"], r);
    }
    {
      const ad::Shape in{2, 3, 4, 2};
      const auto r = fd_check([](ad::Tape&, std::span<const ad::Tensor> p) { return ad::add(p[0], p[1]); },
                              {{in, random_values(ad::numel(in), rng)}, {in, random_values(ad::numel(in), rng)}}, s, h);
      record(out["add"], r);
    }
    {
      const ad::Shape in{3, 4, 2, 2};
      const auto r = fd_check([](ad::Tape&, std::span<const ad::Tensor> p) { return ad::scale(p[0], -1.7f); },
                              {{in, random_values(ad::numel(in), rng)}}, s, h);
      record(out["scale"], r);
    }
    {
      const ad::Shape in{3, 4, 2, 2};
      const auto r = fd_check([](ad::Tape&, std::span<const ad::Tensor> p) { return ad::gap(p[0]); },
                              {{in, random_values(ad::numel(in), rng)}}, s, h);
      record(out["gap"], r);
    }
    {
      const auto r = fd_check(
          [](ad::Tape&, std::span<const ad::Tensor> p) { return ad::linear(p[0], p[1], p[2]); },
          {{{4}, random_values(4, rng)}, {{3, 4}, random_values(12, rng)}, {{3}, random_values(3, rng)}}, s, h);
      record(out["linear"], r);
    }
    {
      // Predictions kept at least 0.1 away from their targets.
      std::vector<float> target = random_values(4, rng);
      std::vector<float> pred = target;
      const auto off = random_values(4, rng, -1, 1, 0.1);
      for (std::size_t i = 0; i < 4; ++i) pred[i] += off[i];
      const auto r = fd_check(
          [target](ad::Tape&, std::span<const ad::Tensor> p) { return ad::mae_loss(p[0], target); },
          {{{4}, pred}}, s, h);
      record(out["mae_loss"], r);
    }
    {
      const auto r = fd_check(
          [](ad::Tape&, std::span<const ad::Tensor> p) {
            const ad::Tensor parts[] = {p[0], p[1]};
            return ad::concat(parts);
          },
          {{{2, 2}, random_values(4, rng)}, {{3}, random_values(3, rng)}}, s, h);
      record(out["concat"], r);
    }
    {
      const std::vector<float> w = random_values(6, rng);
      const auto r = fd_check(
          [w](ad::Tape&, std::span<const ad::Tensor> p) { return ad::weighted_sum(p[0], w); },
          {{{6}, random_values(6, rng)}}, s, h);
      record(out["weighted_sum"], r);
    }
    for (bool planar : {false, true}) {
      const NetConfig cfg = tiny_net(planar);
      AgeNet net = AgeNet::initialized([&] {
        NetConfig c = cfg;
        c.seed = s;
        return c;
      }(), 0.0f);
      std::vector<FdInput> inputs;
      for (const auto& p : net.params()) {
        std::vector<float> v = p.value;
        // biases get small nonzero values so their gradients are exercised
        if (p.shape.size() == 1)
          for (float& b : v) b = static_cast<float>(std::uniform_real_distribution<double>(-0.1, 0.1)(rng));
        inputs.push_back({p.shape, v});
      }
      const ad::Shape in_shape = net.input_shape();
      inputs.push_back({in_shape, random_values(ad::numel(in_shape), rng, 0.0, 1.0)});
      const auto r = fd_check(
          [&net](ad::Tape&, std::span<const ad::Tensor> p) {
            // The input enters as a parameter so its gradient is checked too.
            return net.forward(p.first(p.size() - 1), p.back()).prediction;
          },
          inputs, s, 1e-3);
      record(out[planar ? "agenet_planar" : "agenet"], r);
    }
  }
  return out;
}

}  // namespace agemap::testing
