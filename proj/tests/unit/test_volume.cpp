// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "agemap/error.hpp"
#include "agemap/volume.hpp"
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

// Direct weighted sum over the 8 corners.
double trilinear_oracle(const Volume3& v, double x, double y, double z) {
  const auto d = v.dims();
  if (x < 0 || y < 0 || z < 0 || x > double(d.nx - 1) || y > double(d.ny - 1) || z > double(d.nz - 1)) return 0.0;
  double s = 0.0;
  for (int cz = 0; cz < 2; ++cz)
    for (int cy = 0; cy < 2; ++cy)
      for (int cx = 0; cx < 2; ++cx) {
        const double px = std::floor(x) + cx, py = std::floor(y) + cy, pz = std::floor(z) + cz;
        const double w = (1 - std::abs(x - px)) * (1 - std::abs(y - py)) * (1 - std::abs(z - pz));
        if (w <= 0) continue;
        s += w * v.at(std::size_t(px), std::size_t(py), std::size_t(pz));
      }
  return s;
}

}  // namespace

TEST_CASE("volume indexing is x-fastest") {
  Volume3 v({3, 4, 5});
  v.at(2, 1, 3) = 7.0f;
  CHECK(v.index(2, 1, 3) == 2 + 3 * (1 + 4 * 3));
  CHECK(v.data()[v.index(2, 1, 3)] == 7.0f);
}

TEST_CASE("trilinear sampling matches the corner-weight oracle") {
  const Volume3 v = random_volume({5, 6, 4}, 3);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ux(-0.5, 4.5), uy(-0.5, 5.5), uz(-0.5, 3.5);
  for (int i = 0; i < 200; ++i) {
    const double x = ux(rng), y = uy(rng), z = uz(rng);
    CHECK(trilinear_sample(v, {x, y, z}) == doctest::Approx(trilinear_oracle(v, x, y, z)).epsilon(1e-5));
  }
  CHECK(trilinear_sample(v, {2, 3, 1}) == v.at(2, 3, 1));
  CHECK(trilinear_sample(v, {-0.01, 1, 1}) == 0.0f);
  CHECK(trilinear_sample(v, {4.0, 5.0, 3.0}) == v.at(4, 5, 3));
}

TEST_CASE("sample gradient agrees with finite differences inside cells") {
  const Volume3 v = random_volume({5, 5, 5}, 4);
  const GridPoint p{1.3, 2.6, 2.2};
  const auto g = trilinear_sample_gradient(v, p);
  const double h = 1e-3;
  CHECK(g.grad[0] == doctest::Approx((trilinear_oracle(v, p.x + h, p.y, p.z) - trilinear_oracle(v, p.x - h, p.y, p.z)) / (2 * h)).epsilon(1e-3));
  CHECK(g.grad[1] == doctest::Approx((trilinear_oracle(v, p.x, p.y + h, p.z) - trilinear_oracle(v, p.x, p.y - h, p.z)) / (2 * h)).epsilon(1e-3));
  CHECK(g.grad[2] == doctest::Approx((trilinear_oracle(v, p.x, p.y, p.z + h) - trilinear_oracle(v, p.x, p.y, p.z - h)) / (2 * h)).epsilon(1e-3));
}

TEST_CASE("resampling to the same grid is the identity") {
  const Volume3 v = random_volume({6, 5, 4}, 5);
  const Volume3 r = resample(v, v.dims());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(r.data()[i] == doctest::Approx(v.data()[i]).epsilon(1e-6));
}

TEST_CASE("gaussian kernel is normalized with radius ceil(3 sigma)") {
  for (double sigma : {0.5, 1.0, 2.0}) {
    const auto k = gaussian_kernel(sigma);
    CHECK(k.size() == 2 * std::size_t(std::ceil(3 * sigma)) + 1);
    double s = 0;
    for (double w : k) s += w;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  Volume3 c({7, 7, 7}, {}, 2.5f);
  const Volume3 sm = gaussian_smooth(c, 1.0);
  CHECK(sm.at(3, 3, 3) == doctest::Approx(2.5).epsilon(1e-6));
}

TEST_CASE("vol and dfield files round-trip bit-exactly") {
  testing::TempDir dir("volume");
  const Volume3 r = random_volume({4, 3, 2}, 6);
  const Volume3 v(r.dims(), Spacing{1.0, 2.0, 0.5}, std::vector<float>(r.data().begin(), r.data().end()));
  write_vol(v, dir / "a.vol");
  CHECK(read_vol(dir / "a.vol") == v);

  DisplacementField f({3, 2, 2});
  for (std::size_t i = 0; i < f.data().size(); ++i) f.data()[i] = 0.25f * float(i) - 1.0f;
  write_dfield(f, dir / "a.dfield");
  CHECK(read_dfield(dir / "a.dfield") == f);
}

TEST_CASE("corrupt volume files are decode errors") {
  testing::TempDir dir("volume-bad");
  {
    std::ofstream out(dir / "bad.vol", std::ios::binary);
    out << "NOTAVOL0garbage";
  }
  try {
    read_vol(dir / "bad.vol");
    FAIL("expected a decode error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::decode);
  }
  auto bytes = encode_vol(random_volume({2, 2, 2}, 1));
  bytes.pop_back();
  CHECK_THROWS_AS(decode_vol(bytes), Error);
}

TEST_CASE("displacement field smoothness of a constant field is zero") {
  DisplacementField f({4, 4, 4});
  for (std::size_t v = 0; v < f.dims().count(); ++v) f.set(v, {0.5f, -1.0f, 2.0f});
  CHECK(f.smoothness() == doctest::Approx(0.0));
  CHECK(f.mean_magnitude() == doctest::Approx(std::sqrt(0.25 + 1.0 + 4.0)));
  const auto ux = f.component(0);
  CHECK(ux.at(1, 2, 3) == 0.5f);
}
