// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/checkpoint.hpp"

#include <string>

#include "agemap/error.hpp"
#include "binary_io.hpp"

namespace agemap {

namespace {

constexpr std::string_view kMagic = "AGEN0001";

nlohmann::ordered_json config_to_json(const NetConfig& c) {
  nlohmann::ordered_json j;
  j["channels"] = {c.channels[0], c.channels[1], c.channels[2]};
  j["hidden"] = c.hidden;
  j["input"] = {c.input.nx, c.input.ny, c.input.nz};
  j["in_channels"] = c.in_channels;
  j["planar"] = c.planar;
  j["seed"] = c.seed;
  return j;
}

NetConfig config_from_json(const nlohmann::json& j) {
  NetConfig c;
  const auto ch = j.at("channels").get<std::vector<std::size_t>>();
  if (ch.size() != 3) fail(Errc::decode, "checkpoint: channels must list 3 stages");
  c.channels = {ch[0], ch[1], ch[2]};
  c.hidden = j.at("hidden").get<std::size_t>();
  const auto in = j.at("input").get<std::vector<std::size_t>>();
  if (in.size() != 3) fail(Errc::decode, "checkpoint: input must list 3 dims");
  c.input = {in[0], in[1], in[2]};
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.planar = j.at("planar").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const AgeNet& net) {
  nlohmann::ordered_json h;
  h["version"] = kCheckpointVersion;
  h["config"] = config_to_json(net.config());
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (const auto& p : net.params()) params.push_back({{"name", p.name}, {"shape", p.shape}});
  h["params"] = params;
  auto out = detail::frame(kMagic, h);
  for (const auto& p : net.params()) detail::append_f32(out, p.value);
  return out;
}

AgeNet decode_checkpoint(std::span<const unsigned char> bytes) {
  const auto u = detail::unframe(bytes, kMagic);
  NetConfig config;
  std::vector<std::pair<std::string, ad::Shape>> stored;
  try {
    const int version = u.header.at("version").get<int>();
    if (version != kCheckpointVersion)
      fail(Errc::decode, "unsupported checkpoint version " + std::to_string(version));
    config = config_from_json(u.header.at("config"));
    for (const auto& p : u.header.at("params"))
      stored.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<ad::Shape>());
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::decode, std::string("checkpoint header: ") + e.what());
  }
  try {
    config.validate();
  } catch (const Error& e) {
    fail(Errc::decode, std::string("checkpoint config: ") + e.what());
  }
  const auto expected = AgeNet::layout(config);
  if (stored.size() != expected.size())
    fail(Errc::decode, "checkpoint has " + std::to_string(stored.size()) + " parameters, config implies " +
                           std::to_string(expected.size()));
  std::size_t total = 0;
  for (std::size_t i = 0; i < stored.size(); ++i) {
    if (stored[i] != expected[i]) fail(Errc::decode, "checkpoint parameter layout mismatch at " + stored[i].first);
    total += ad::numel(stored[i].second);
  }
  if (u.payload.size() != 4 * total) fail(Errc::decode, "length mismatch");
  const std::vector<float> flat = detail::load_f32(u.payload, true);
  AgeNet net(config);
  std::size_t off = 0;
  for (auto& p : net.params()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), p.value.size(), p.value.begin());
    off += p.value.size();
  }
  return net;
}

void save_checkpoint(const AgeNet& net, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(net));
}

AgeNet load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::missing_dependency, "checkpoint not found: " + path.string());
  return decode_checkpoint(detail::read_file(path));
}

AgeNet load_checkpoint(const std::filesystem::path& path, const NetConfig& expected) {
  AgeNet net = load_checkpoint(path);
  if (!(net.config() == expected))
    fail(Errc::config, "checkpoint " + path.string() + " was trained with a different net config");
  return net;
}

}  // namespace agemap
