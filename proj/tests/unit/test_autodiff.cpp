// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "agemap/autodiff.hpp"
#include "agemap/error.hpp"
#include "../support/gradient_suite.hpp"

using namespace agemap;

TEST_CASE("every op passes a central finite-difference check") {
  const auto reports = testing::gradient_suite(4, 77);
  for (const auto& [op, rep] : reports) {
    INFO(op);
    CHECK(rep.instances == 4);
    CHECK(rep.max_rel_error < 1e-3);
  }
}

TEST_CASE("conv output extents follow padding and stride") {
  CHECK(ad::conv_output_extent(32, 3, 2) == 16);
  CHECK(ad::conv_output_extent(5, 3, 2) == 3);
  CHECK(ad::conv_output_extent(24, 1, 2) == 12);
  CHECK(ad::conv_output_extent(7, 3, 1) == 7);
}

TEST_CASE("conv of a delta with a known kernel") {
  ad::Tape tape;
  std::vector<float> in(27, 0.0f);
  in[13] = 1.0f;  // center of 3x3x3
  std::vector<float> w(27);
  for (std::size_t i = 0; i < 27; ++i) w[i] = float(i);
  const auto x = tape.constant({1, 3, 3, 3}, in);
  const auto k = tape.constant({1, 1, 3, 3, 3}, w);
  const auto b = tape.constant({1}, {0.5f});
  const auto y = ad::conv3(x, k, b, 1);
  // cross-correlation: out(p) = sum_d w(d) in(p + d - 1), so out(p) = w(2 - p) + b
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t yy = 0; yy < 3; ++yy)
      for (std::size_t xx = 0; xx < 3; ++xx)
        CHECK(y.value()[xx + 3 * (yy + 3 * z)] == doctest::Approx(w[(2 - xx) + 3 * ((2 - yy) + 3 * (2 - z))] + 0.5f));
}

TEST_CASE("fan-out gradients are summed") {
  ad::Tape tape;
  const auto x = tape.parameter({2}, {1.5f, -2.0f});
  const auto y = ad::add(x, ad::scale(x, 3.0f));
  const std::vector<float> w{1.0f, 1.0f};
  const auto g = tape.backward(ad::weighted_sum(y, w));
  CHECK(g.of(x)[0] == doctest::Approx(4.0));
  CHECK(g.of(x)[1] == doctest::Approx(4.0));
}

TEST_CASE("mae gradient uses sign with sign(0) = 0") {
  ad::Tape tape;
  const auto p = tape.parameter({3}, {1.0f, 2.0f, 3.0f});
  const std::vector<float> t{0.0f, 2.0f, 5.0f};
  const auto l = ad::mae_loss(p, t);
  CHECK(l.item() == doctest::Approx(1.0));
  const auto g = tape.backward(l);
  CHECK(g.of(p)[0] == doctest::Approx(1.0 / 3));
  CHECK(g.of(p)[1] == 0.0f);
  CHECK(g.of(p)[2] == doctest::Approx(-1.0 / 3));
}

TEST_CASE("retained intermediates expose their gradient") {
  ad::Tape tape;
  const auto x = tape.parameter({3}, {1.0f, -1.0f, 2.0f});
  const auto r = ad::relu(x);
  const std::vector<float> w{2.0f, 3.0f, 4.0f};
  const ad::NodeId keep[] = {r.id()};
  const auto g = tape.backward(ad::weighted_sum(r, w), keep);
  REQUIRE(g.contains(r.id()));
  CHECK(g.of(r)[1] == 3.0f);
  CHECK(g.of(x)[1] == 0.0f);
}

TEST_CASE("shape mismatches are rejected") {
  ad::Tape tape;
  const auto a = tape.constant({2}, {1, 2});
  const auto b = tape.constant({3}, {1, 2, 3});
  CHECK_THROWS_AS(ad::add(a, b), Error);
  const auto w = tape.constant({2, 3}, std::vector<float>(6, 1.0f));
  const auto bias = tape.constant({2}, {0, 0});
  CHECK_THROWS_AS(ad::linear(a, w, bias), Error);
}
