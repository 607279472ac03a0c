// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "agemap/agenet.hpp"
#include "agemap/checkpoint.hpp"
#include "agemap/error.hpp"
#include "agemap/trainer.hpp"
#include "../support/fd_check.hpp"
#include "../support/gradient_suite.hpp"
#include "../support/temp_dir.hpp"

using namespace agemap;

namespace {

NetConfig small_net() {
  NetConfig c;
  c.channels = {2, 3, 4};
  c.hidden = 6;
  c.input = {17, 17, 17};
  c.seed = 5;
  return c;
}

Dataset random_dataset(const NetConfig& c, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    d.ids.push_back(std::int64_t(i));
    d.inputs.push_back(testing::random_values(c.input.count(), rng, 0.0, 1.0));
    d.targets.push_back(float(50 + (i * 7) % 30));
  }
  return d;
}

}  // namespace

TEST_CASE("zero network predicts zero, output bias shifts it") {
  NetConfig c;
  AgeNet net(c);
  const Volume3 image(c.input, {}, 0.3f);
  CHECK(net.predict(image) == 0.0);
  net.param("fc2.bias").value[0] = 63.58f;
  CHECK(net.predict(image) == doctest::Approx(63.58).epsilon(1e-7));
}

TEST_CASE("default stage-3 activation is 32x4x8x3") {
  const AgeNet net = AgeNet::initialized(NetConfig{}, 60.0f);
  ad::Tape tape;
  const std::vector<float> input(NetConfig{}.input.count(), 0.5f);
  const auto pass = net.forward(tape, input);
  CHECK(pass.cam_layer.shape() == ad::Shape{32, 4, 8, 3});
  CHECK(pass.prediction.size() == 1);
}

TEST_CASE("prediction is bit-identical on repeat") {
  const AgeNet net = AgeNet::initialized(small_net(), 60.0f);
  std::mt19937_64 rng(1);
  const auto x = testing::random_values(small_net().input.count(), rng, 0, 1);
  CHECK(net.predict(x) == net.predict(x));
}

TEST_CASE("net config validation") {
  NetConfig c;
  c.channels = {8, 4, 32};
  CHECK_THROWS_AS(c.validate(), Error);
  c = NetConfig{};
  c.hidden = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  const AgeNet net = AgeNet::initialized(NetConfig{}, 0.0f);
  CHECK_THROWS_AS(net.predict(std::vector<float>(10, 0.0f)), Error);
}

TEST_CASE("plateau scheduler decays after three flat epochs") {
  PlateauScheduler s(1e-4, 3, 0.1);
  CHECK(s.observe(5) == doctest::Approx(1e-4));
  CHECK(s.observe(5) == doctest::Approx(1e-4));
  CHECK(s.observe(5) == doctest::Approx(1e-4));
  CHECK(s.observe(5) == doctest::Approx(1e-5));
  CHECK(s.observe(4) == doctest::Approx(1e-5));
  CHECK(s.epochs_since_improvement() == 0);
}

TEST_CASE("a leftover window is flushed as the mean of its gradients") {
  const NetConfig c = small_net();
  AgeNet net = AgeNet::initialized(c, 60.0f);
  const Dataset d = random_dataset(c, 17, 3);
  TrainConfig tc;
  tc.accumulation = 32;
  Trainer trainer(net, tc);

  // Recomputation oracle: per-sample gradients at the same weights.
  std::vector<std::vector<double>> mean;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::vector<float>* in[] = {&d.inputs[i]};
    const float tgt[] = {d.targets[i]};
    const auto g = trainer.gradient(in, tgt, nullptr);
    if (mean.empty())
      for (const auto& p : g) mean.emplace_back(p.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k)
      for (std::size_t j = 0; j < g[k].size(); ++j) mean[k][j] += g[k][j] / 17.0;
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::vector<float>* in[] = {&d.inputs[i]};
    const float tgt[] = {d.targets[i]};
    trainer.accumulate(in, tgt);
  }
  CHECK(trainer.steps() == 0);
  CHECK(trainer.pending() == 17);
  REQUIRE(trainer.flush());
  CHECK(trainer.steps() == 1);
  const auto& applied = trainer.last_applied_gradient();
  double worst = 0;
  for (std::size_t k = 0; k < applied.size(); ++k)
    for (std::size_t j = 0; j < applied[k].size(); ++j)
      worst = std::max(worst, std::abs(applied[k][j] - mean[k][j]) / std::max(1.0, std::abs(mean[k][j])));
  CHECK(worst < 1e-5);
}

TEST_CASE("32 samples with accumulation 32 take exactly one averaged step") {
  const NetConfig c = small_net();
  AgeNet a = AgeNet::initialized(c, 60.0f);
  const Dataset d = random_dataset(c, 32, 4);
  TrainConfig tc;
  tc.epochs = 1;
  tc.jobs = 1;
  History h = train(a, d, d, tc);
  REQUIRE(h.epochs.size() == 1);
  CHECK(h.epochs[0].lr == doctest::Approx(1e-4));

  // Same thing by hand with a single Adam step on the mean gradient.
  AgeNet b = AgeNet::initialized(c, 60.0f);
  TrainConfig big = tc;
  big.accumulation = 64;
  Trainer t(b, big);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::vector<float>* in[] = {&d.inputs[i]};
    const float tgt[] = {d.targets[i]};
    t.accumulate(in, tgt);
  }
  t.flush();
  for (std::size_t k = 0; k < a.params().size(); ++k)
    for (std::size_t j = 0; j < a.params()[k].value.size(); ++j)
      CHECK(a.params()[k].value[j] == doctest::Approx(b.params()[k].value[j]).epsilon(1e-5));
}

TEST_CASE("parallel accumulation is bit-identical to sequential") {
  const NetConfig c = small_net();
  const Dataset d = random_dataset(c, 40, 8);
  TrainConfig tc;
  tc.epochs = 2;
  AgeNet a = AgeNet::initialized(c, 60.0f), b = AgeNet::initialized(c, 60.0f);
  tc.jobs = 1;
  const History ha = train(a, d, d, tc);
  tc.jobs = 3;
  const History hb = train(b, d, d, tc);
  for (std::size_t k = 0; k < a.params().size(); ++k) CHECK(a.params()[k].value == b.params()[k].value);
  CHECK(ha.epochs.back().val_mae == hb.epochs.back().val_mae);
}

TEST_CASE("checkpoints round-trip and reject corruption") {
  testing::TempDir dir("ckpt");
  const AgeNet net = AgeNet::initialized(small_net(), 61.0f);
  save_checkpoint(net, dir / "a.ckpt");
  const AgeNet back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.config() == net.config());
  for (std::size_t k = 0; k < net.params().size(); ++k) CHECK(back.params()[k].value == net.params()[k].value);

  NetConfig other = small_net();
  other.hidden = 7;
  try {
    load_checkpoint(dir / "a.ckpt", other);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::config);
  }

  auto bytes = encode_checkpoint(net);
  bytes[0] = 'X';
  try {
    decode_checkpoint(bytes);
    FAIL("expected a decode error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::decode);
  }
  bytes = encode_checkpoint(net);
  bytes.resize(bytes.size() - 4);
  CHECK_THROWS_AS(decode_checkpoint(bytes), Error);

  try {
    load_checkpoint(dir / "missing.ckpt");
    FAIL("expected a missing dependency");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::missing_dependency);
  }
}
