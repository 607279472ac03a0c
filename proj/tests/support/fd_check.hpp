// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference checks of tape gradients along random directions.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "agemap/autodiff.hpp"

namespace agemap::testing {

struct FdInput {
  ad::Shape shape;
  std::vector<float> value;
};

/// Builds the op under test from parameter tensors and returns its output.
using Graph = std::function<ad::Tensor(ad::Tape&, std::span<const ad::Tensor>)>;

struct FdResult {
  double analytic = 0, numeric = 0;
  double bound = 0;  // |grad| * |step|, the largest the derivative could be
  double rel_error() const {
    // a direction nearly orthogonal to the gradient would otherwise turn
    // float rounding into a large ratio
    const double scale = std::max({std::abs(analytic), std::abs(numeric), bound, 1e-6});
    return std::abs(analytic - numeric) / scale;
  }
};

/// Projects the output on fixed random weights, so the objective is
/// sum_i w_i out_i (accumulated in double), and compares the tape gradient
/// with a central difference along a random unit direction.
inline FdResult fd_check(const Graph& graph, const std::vector<FdInput>& inputs, std::uint64_t seed, double h) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<float> weights;
  const auto objective = [&](const std::vector<std::vector<float>>& values) {
    ad::Tape tape;
    std::vector<ad::Tensor> params;
    for (std::size_t k = 0; k < inputs.size(); ++k) params.push_back(tape.parameter(inputs[k].shape, values[k]));
    const ad::Tensor out = graph(tape, params);
    if (weights.empty())
      for (std::size_t i = 0; i < out.size(); ++i) weights.push_back(static_cast<float>(normal(rng)));
    double f = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) f += double(weights[i]) * double(out.value()[i]);
    return f;
  };

  std::vector<std::vector<float>> base;
  for (const auto& in : inputs) base.push_back(in.value);
  objective(base);  // fixes the projection weights

  std::vector<std::vector<double>> dir(inputs.size());
  double norm = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].value.size(); ++i) {
      dir[k].push_back(normal(rng));
      norm += dir[k].back() * dir[k].back();
    }
  norm = std::sqrt(norm);
  for (auto& d : dir)
    for (double& x : d) x /= norm;

  const auto shifted = [&](double step) {
    std::vector<std::vector<float>> v = base;
    for (std::size_t k = 0; k < v.size(); ++k)
      for (std::size_t i = 0; i < v[k].size(); ++i) v[k][i] = static_cast<float>(double(v[k][i]) + step * dir[k][i]);
    return v;
  };
  const auto plus = shifted(h), minus = shifted(-h);

  FdResult r;
  double gnorm = 0.0, snorm = 0.0;
  {
    ad::Tape tape;
    std::vector<ad::Tensor> params;
    for (std::size_t k = 0; k < inputs.size(); ++k) params.push_back(tape.parameter(inputs[k].shape, base[k]));
    const ad::Tensor out = graph(tape, params);
    const ad::Tensor root = ad::weighted_sum(out, weights);
    const ad::Gradients g = tape.backward(root);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const auto gk = g.of(params[k]);
      // project on the step the float inputs actually took, not the ideal one
      for (std::size_t i = 0; i < gk.size(); ++i) {
        const double step = (double(plus[k][i]) - double(minus[k][i])) / (2.0 * h);
        r.analytic += double(gk[i]) * step;
        gnorm += double(gk[i]) * double(gk[i]);
        snorm += step * step;
      }
    }
    r.bound = std::sqrt(gnorm * snorm);
  }
  r.numeric = (objective(plus) - objective(minus)) / (2.0 * h);
  return r;
}

/// Uniform values in [lo, hi] with magnitude at least `margin` (keeps ReLU
/// and sign kinks out of the difference stencil).
inline std::vector<float> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                                        double margin = 0.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<float> out(n);
  for (float& x : out) {
    double v = u(rng);
    while (std::abs(v) < margin) v = u(rng);
    x = static_cast<float>(v);
  }
  return out;
}

}  // namespace agemap::testing
