// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/slice_export.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "agemap/error.hpp"
#include "binary_io.hpp"

namespace agemap {

namespace {

struct Plane {
  int col_axis, row_axis;
};

Plane plane_for(int axis) {
  switch (axis) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    case 2: return {0, 1};
    default: fail(Errc::invalid_argument, "slice axis must be 0, 1 or 2");
  }
}

void check_slice(const Volume3& v, SliceSpec s) {
  (void)plane_for(s.axis);
  if (s.index >= v.dims()[s.axis])
    fail(Errc::invalid_argument, "slice index " + std::to_string(s.index) + " out of range for axis " +
                                     std::to_string(s.axis));
}

template <class F>
void for_each_pixel(const Volume3& v, SliceSpec s, F&& fn) {
  const Plane p = plane_for(s.axis);
  const std::size_t w = v.dims()[p.col_axis], h = v.dims()[p.row_axis];
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      std::size_t xyz[3];
      xyz[s.axis] = s.index;
      xyz[p.col_axis] = c;
      xyz[p.row_axis] = r;
      fn(r * w + c, v.index(xyz[0], xyz[1], xyz[2]));
    }
}

std::uint8_t to_byte(double x) { return static_cast<std::uint8_t>(std::clamp(std::lround(x), 0L, 255L)); }

void write_netpbm(const Raster& r, const std::filesystem::path& path, int channels, const char* tag) {
  require(r.channels == channels, std::string("raster has wrong channel count for ") + tag);
  const std::string header =
      std::string(tag) + "\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), r.pixels.begin(), r.pixels.end());
  detail::write_file(path, bytes);
}

}  // namespace

std::array<std::uint8_t, 3> hot_color(std::uint8_t level) {
  const double t = level / 255.0;
  return {to_byte(255.0 * std::clamp(3.0 * t, 0.0, 1.0)), to_byte(255.0 * std::clamp(3.0 * t - 1.0, 0.0, 1.0)),
          to_byte(255.0 * std::clamp(3.0 * t - 2.0, 0.0, 1.0))};
}

Raster slice_gray(const Volume3& v, SliceSpec s) {
  check_slice(v, s);
  const Plane p = plane_for(s.axis);
  Raster out{v.dims()[p.col_axis], v.dims()[p.row_axis], 1, {}};
  out.pixels.resize(out.width * out.height);
  float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
  for_each_pixel(v, s, [&](std::size_t, std::size_t vi) {
    lo = std::min(lo, v.data()[vi]);
    hi = std::max(hi, v.data()[vi]);
  });
  const double range = double(hi) - double(lo);
  for_each_pixel(v, s, [&](std::size_t pi, std::size_t vi) {
    out.pixels[pi] = range > 0 ? to_byte((double(v.data()[vi]) - lo) / range * 255.0) : 0;
  });
  return out;
}

Raster slice_overlay(const Volume3& base, const Volume3& cam, SliceSpec s, double alpha) {
  require(base.dims() == cam.dims(), "overlay: base and cam dims differ");
  require(alpha >= 0.0 && alpha <= 1.0, "overlay: alpha must lie in [0, 1]");
  const Raster gray = slice_gray(base, s);
  Raster out{gray.width, gray.height, 3, std::vector<std::uint8_t>(gray.pixels.size() * 3)};
  for_each_pixel(cam, s, [&](std::size_t pi, std::size_t vi) {
    const double c = std::clamp(double(cam.data()[vi]), 0.0, 1.0);
    const auto color = hot_color(to_byte(c * 255.0));
    const double g = gray.pixels[pi];
    for (int k = 0; k < 3; ++k) out.pixels[3 * pi + k] = to_byte((1.0 - alpha) * g + alpha * color[k]);
  });
  return out;
}

Raster tile(const std::vector<Raster>& tiles, std::size_t columns) {
  require(!tiles.empty() && columns > 0, "tile: need at least one raster and one column");
  const int ch = tiles.front().channels;
  std::size_t cw = 0, chh = 0;
  for (const Raster& t : tiles) {
    require(t.channels == ch, "tile: mixed channel counts");
    cw = std::max(cw, t.width);
    chh = std::max(chh, t.height);
  }
  const std::size_t rows = (tiles.size() + columns - 1) / columns;
  Raster out{cw * columns, chh * rows, ch, {}};
  out.pixels.assign(out.width * out.height * ch, 0);
  for (std::size_t n = 0; n < tiles.size(); ++n) {
    const Raster& t = tiles[n];
    const std::size_t ox = (n % columns) * cw, oy = (n / columns) * chh;
    for (std::size_t r = 0; r < t.height; ++r)
      std::copy_n(t.pixels.begin() + static_cast<std::ptrdiff_t>(r * t.width * ch), t.width * ch,
                  out.pixels.begin() + static_cast<std::ptrdiff_t>(((oy + r) * out.width + ox) * ch));
  }
  return out;
}

void write_pgm(const Raster& r, const std::filesystem::path& path) { write_netpbm(r, path, 1, "P5"); }
void write_ppm(const Raster& r, const std::filesystem::path& path) { write_netpbm(r, path, 3, "P6"); }

void export_slice(const Volume3& v, SliceSpec slice, const std::filesystem::path& path) {
  write_pgm(slice_gray(v, slice), path);
}

void overlay_slice(const Volume3& base, const Volume3& cam, SliceSpec slice, double alpha,
                   const std::filesystem::path& path) {
  write_ppm(slice_overlay(base, cam, slice, alpha), path);
}

}  // namespace agemap
