// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "agemap/agenet.hpp"

namespace agemap {

inline constexpr int kCheckpointVersion = 1;

/// AGEN0001 framing: JSON header with version, net config and the ordered
/// (name, shape) layout, followed by all parameters as little-endian f32.
std::vector<unsigned char> encode_checkpoint(const AgeNet& net);

/// Fails with Errc::decode on bad magic, unknown version, a layout that does
/// not match the config, or a payload of the wrong size.
AgeNet decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const AgeNet& net, const std::filesystem::path& path);
AgeNet load_checkpoint(const std::filesystem::path& path);

/// As load_checkpoint, but additionally requires the stored config to equal `expected`.
AgeNet load_checkpoint(const std::filesystem::path& path, const NetConfig& expected);

}  // namespace agemap
