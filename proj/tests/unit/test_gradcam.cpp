// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <random>

#include "agemap/gradcam.hpp"
#include "agemap/phantom.hpp"
#include "../support/fd_check.hpp"
#include "../support/temp_dir.hpp"

using namespace agemap;

namespace {

AgeNet random_net(std::uint64_t seed) {
  NetConfig c;
  c.seed = seed;
  return AgeNet::initialized(c, 63.58f);
}

Volume3 subject(std::int64_t id) {
  return generate_subject(PhantomParams{}, id, 46 + int(id % 36), Sex::F, BmiGroup::healthy).image;
}

}  // namespace

TEST_CASE("maps are non-negative and peak at one") {
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const AgeNet net = random_net(s);
    const CamResult r = grad_cam(net, subject(std::int64_t(s)).data());
    CHECK(r.map.dims() == NetConfig{}.input);
    const auto d = r.map.data();
    CHECK(*std::min_element(d.begin(), d.end()) >= 0.0f);
    const float peak = *std::max_element(d.begin(), d.end());
    CHECK((peak == 1.0f || peak == 0.0f));
    CHECK(r.raw.dims() == Dims{4, 8, 3});
    CHECK(r.alpha.size() == 32);
  }
}

TEST_CASE("output bias shifts leave the map bit-identical") {
  AgeNet net = random_net(4);
  const Volume3 img = subject(9);
  const Volume3 a = extract_cam(net, img);
  net.param("fc2.bias").value[0] += 17.25f;
  CHECK(extract_cam(net, img) == a);
}

TEST_CASE("normalized maps are invariant to scaling the head") {
  AgeNet net = random_net(5);
  const Volume3 img = subject(11);
  const Volume3 a = extract_cam(net, img);
  for (float& w : net.param("fc2.weight").value) w *= 3.5f;
  const Volume3 b = extract_cam(net, img);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.data()[i] - b.data()[i]) < 1e-5f);
}

TEST_CASE("a constant-output head gives an all-zero map") {
  AgeNet net = random_net(6);
  for (float& w : net.param("fc2.weight").value) w = 0.0f;
  for (bool normalize : {true, false}) {
    const Volume3 m = extract_cam(net, subject(3), CamOptions{normalize});
    CHECK(std::all_of(m.data().begin(), m.data().end(), [](float v) { return v == 0.0f; }));
  }
}

TEST_CASE("combination oracle on a hand-made activation") {
  // Two channels on a 2x1x1 grid, gradients chosen so alpha = (1, -2).
  const std::vector<float> act{1, 3, 2, 0.5f};
  const std::vector<float> grad{0.5f, 1.5f, -2, -2};
  const CamResult r = cam_from_activation(act, grad, {2, 2, 1, 1}, {2, 1, 1}, {}, CamOptions{false});
  CHECK(r.alpha[0] == doctest::Approx(1.0));
  CHECK(r.alpha[1] == doctest::Approx(-2.0));
  // relu(1*1 - 2*2) = 0, relu(1*3 - 2*0.5) = 2
  CHECK(r.raw.data()[0] == 0.0f);
  CHECK(r.raw.data()[1] == doctest::Approx(2.0));
}

TEST_CASE("cohort extraction writes one map per subject with provenance") {
  testing::TempDir dir("cams");
  const PhantomParams p;
  const Manifest m = generate_cohort(p, 6, 6, 6, dir / "cohort", 1);
  const Manifest test = split_filter(m, Split::test);
  const AgeNet net = random_net(7);
  const auto res = extract_cohort(net, test, dir / "cams", "abc123", {}, 2);
  CHECK(res.failures.empty());
  REQUIRE(res.manifest.records.size() == 6);
  for (const auto& r : res.manifest.records) {
    REQUIRE(r.cam_path);
    REQUIRE(r.cam_provenance);
    CHECK(r.cam_provenance->find("abc123") != std::string::npos);
    CHECK(read_vol(res.manifest.resolve(*r.cam_path)) == extract_cam(net, read_vol(m.resolve(r.image_path))));
  }
}
