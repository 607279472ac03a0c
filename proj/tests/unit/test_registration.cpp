// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "agemap/error.hpp"
#include "agemap/registration.hpp"
#include "../support/registration_cases.hpp"
#include "../support/temp_dir.hpp"

using namespace agemap;

namespace {

Volume3 random_volume(Dims d, std::uint64_t seed) {
  Volume3 v(d);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& x : v.data()) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("similarity values") {
  const Volume3 a = random_volume({4, 5, 3}, 1);
  CHECK(similarity(a, a, Similarity::ssd) == 0.0);
  CHECK(similarity(a, a, Similarity::ncc) == doctest::Approx(0.0).epsilon(1e-9));
  Volume3 b = a;
  for (float& v : b.data()) v = 2.0f * v + 1.0f;
  CHECK(similarity(a, b, Similarity::ncc) == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(similarity(a, Volume3(a.dims(), {}, 0.3f), Similarity::ncc), Error);
}

TEST_CASE("similarity gradients match finite differences") {
  const Volume3 f = random_volume({4, 4, 3}, 2);
  const Volume3 m = random_volume({4, 4, 3}, 3);
  for (Similarity kind : {Similarity::ssd, Similarity::ncc}) {
    std::vector<double> g;
    similarity_gradient(f, m, kind, g);
    for (std::size_t i : {0u, 7u, 20u, 47u}) {
      Volume3 up = m, down = m;
      const float h = 1e-2f;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double num = (similarity(f, up, kind) - similarity(f, down, kind)) / (2.0 * h);
      CHECK(g[i] == doctest::Approx(num).epsilon(2e-3).scale(1e-4));
    }
  }
}

TEST_CASE("affine helpers") {
  const auto t = AffineTransform::translation(1, -2, 3);
  const GridPoint p = t.apply({1, 1, 1});
  CHECK(p.x == 2.0);
  CHECK(p.y == -1.0);
  CHECK(p.z == 4.0);
  const auto s = AffineTransform::scaling_about_center(2.0, {5, 5, 5});
  const GridPoint c = s.apply({2, 2, 2});
  CHECK(c.x == doctest::Approx(2.0));
  CHECK(s.determinant() == doctest::Approx(8.0));
  testing::TempDir dir("affine");
  write_affine(s, dir / "a.json");
  CHECK(read_affine(dir / "a.json") == s);
}

TEST_CASE("warping by an integer translation shifts samples") {
  const Volume3 v = random_volume({6, 5, 4}, 4);
  const Volume3 w = warp(v, AffineTransform::translation(1, 0, 0));
  CHECK(w.at(2, 3, 1) == v.at(3, 3, 1));
  CHECK(w.at(5, 3, 1) == 0.0f);
}

TEST_CASE("compose_linear makes one interpolation equal affine after field") {
  const Volume3 v = random_volume({8, 8, 8}, 5);
  AffineTransform a = AffineTransform::scaling_about_center(1.1, v.dims());
  DisplacementField u(v.dims());
  for (std::size_t i = 0; i < v.size(); ++i) u.set(i, {0.5f, 0.0f, -0.25f});
  // Constant field + affine: v(A(x + u)) computed directly.
  const DisplacementField lu = compose_linear(a, u);
  const Volume3 once = warp(v, a, &lu);
  AffineTransform shifted = a;
  for (int r = 0; r < 3; ++r) shifted.m[4 * r + 3] += a.L(r, 0) * 0.5 + a.L(r, 2) * -0.25;
  const Volume3 direct = warp(v, shifted);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(once.data()[i] == doctest::Approx(direct.data()[i]).epsilon(1e-5));
}

TEST_CASE("self-registration stays at identity") {
  const Volume3 f = testing::registration_fixture();
  const AffineResult r = affine_register(f, f, RegConfig{});
  CHECK(testing::max_abs_linear_error(r.transform) < 0.01);
  const double zero[3] = {0, 0, 0};
  CHECK(testing::max_abs_translation(r.transform, zero) < 0.1);
  CHECK(testing::monotone_best(r.trace));
}

TEST_CASE("a planted two-voxel translation is recovered") {
  const Volume3 f = testing::registration_fixture();
  const Volume3 m = warp(f, AffineTransform::translation(-2, 0, 0));
  const AffineResult r = affine_register(f, m, RegConfig{});
  const double expect[3] = {2, 0, 0};
  CHECK(testing::max_abs_translation(r.transform, expect) < 0.25);
  CHECK(r.final_loss < r.initial_loss);
  CHECK(testing::monotone_best(r.trace));
}

TEST_CASE("deformable registration halves SSD on a sinusoidal warp") {
  const Volume3 f = gaussian_smooth(testing::registration_fixture(), 1.0);
  const DisplacementField planted = testing::sinusoidal_field(f.dims(), 1.5);
  const Volume3 m = warp(f, AffineTransform::identity(), &planted);
  const DeformableResult r = deformable_register(f, m, RegConfig{});
  const Volume3 out = warp(m, AffineTransform::identity(), &r.field);
  const double before = similarity(f, m, Similarity::ssd), after = similarity(f, out, Similarity::ssd);
  INFO("ssd before " << before << " after " << after);
  CHECK(after < 0.5 * before);
  CHECK(testing::monotone_best(r.trace));
}

TEST_CASE("registration config validation") {
  RegConfig c;
  c.levels = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = RegConfig{};
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(parse_similarity("ssd") == Similarity::ssd);
  CHECK_THROWS_AS(parse_similarity("mi"), Error);
}
