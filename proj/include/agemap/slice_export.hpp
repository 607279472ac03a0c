// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "agemap/volume.hpp"

namespace agemap {

/// 8-bit raster, row-major, `channels` interleaved (1 = gray, 3 = RGB).
struct Raster {
  std::size_t width = 0, height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// A plane through the volume: the fixed axis and its index. The in-plane
/// axes are the remaining two in increasing order (column axis first).
struct SliceSpec {
  int axis = 2;
  std::size_t index = 0;
};

/// Fixed 256-entry "hot" colormap (black -> red -> yellow -> white).
std::array<std::uint8_t, 3> hot_color(std::uint8_t level);

/// Slice values rescaled to [0, 255] between the slice minimum and maximum.
Raster slice_gray(const Volume3& v, SliceSpec slice);

/// out = (1 - alpha) * gray + alpha * hot(cam), with cam expected in [0, 1].
Raster slice_overlay(const Volume3& base, const Volume3& cam, SliceSpec slice, double alpha = 0.5);

/// Tile equally-typed rasters into a grid, padding cells to the largest tile.
Raster tile(const std::vector<Raster>& tiles, std::size_t columns);

void write_pgm(const Raster& r, const std::filesystem::path& path);
void write_ppm(const Raster& r, const std::filesystem::path& path);

void export_slice(const Volume3& v, SliceSpec slice, const std::filesystem::path& path);
void overlay_slice(const Volume3& base, const Volume3& cam, SliceSpec slice, double alpha,
                   const std::filesystem::path& path);

}  // namespace agemap
