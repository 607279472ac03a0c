// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "agemap/error.hpp"
#include "binary_io.hpp"

namespace agemap {

namespace {

constexpr std::string_view kVolMagic = "VOLF0001";
constexpr std::string_view kFieldMagic = "DFLD0001";

void check_geometry(const Dims& dims, const Spacing& spacing) {
  require(dims.nx > 0 && dims.ny > 0 && dims.nz > 0, "volume dims must be positive");
  require(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0, "volume spacing must be positive");
}

// Cell index and fractional offset for one axis; false when outside [0, n-1].
bool locate(double c, std::size_t n, std::size_t& i0, double& f) {
  const double hi = static_cast<double>(n - 1);
  if (!(c >= 0.0 && c <= hi)) return false;
  if (n == 1) {
    i0 = 0;
    f = 0.0;
    return true;
  }
  double fl = std::floor(c);
  if (fl >= hi) fl = hi - 1.0;
  i0 = static_cast<std::size_t>(fl);
  f = c - fl;
  return true;
}

nlohmann::ordered_json geometry_header(const Dims& d, const Spacing& s, const char* dtype) {
  nlohmann::ordered_json h;
  h["dims"] = {d.nx, d.ny, d.nz};
  h["spacing"] = {s.sx, s.sy, s.sz};
  h["dtype"] = dtype;
  return h;
}

struct Geometry {
  Dims dims;
  Spacing spacing;
};

Geometry parse_geometry(const nlohmann::json& h, const char* dtype) {
  Geometry g;
  try {
    const auto& d = h.at("dims");
    const auto& s = h.at("spacing");
    if (d.size() != 3 || s.size() != 3) fail(Errc::decode, "bad header: dims/spacing need 3 entries");
    g.dims = {d[0].get<std::size_t>(), d[1].get<std::size_t>(), d[2].get<std::size_t>()};
    g.spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    if (h.at("dtype").get<std::string>() != dtype)
      fail(Errc::decode, std::string("bad header: dtype must be ") + dtype);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::decode, std::string("bad header: ") + e.what());
  }
  if (g.dims.count() == 0 || !(g.spacing.sx > 0 && g.spacing.sy > 0 && g.spacing.sz > 0))
    fail(Errc::decode, "bad header: non-positive geometry");
  return g;
}

}  // namespace

Volume3::Volume3(Dims dims, Spacing spacing, float fill)
    : dims_(dims), spacing_(spacing), data_(dims.count(), fill) {
  check_geometry(dims_, spacing_);
}

Volume3::Volume3(Dims dims, Spacing spacing, std::vector<float> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_geometry(dims_, spacing_);
  require(data_.size() == dims_.count(), "volume data length does not match dims");
}

DisplacementField::DisplacementField(Dims dims, Spacing spacing)
    : dims_(dims), spacing_(spacing), data_(3 * dims.count(), 0.0f) {
  check_geometry(dims_, spacing_);
}

DisplacementField::DisplacementField(Dims dims, Spacing spacing, std::vector<float> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_geometry(dims_, spacing_);
  require(data_.size() == 3 * dims_.count(), "field data length does not match dims");
}

Volume3 DisplacementField::component(int axis) const {
  Volume3 out(dims_, spacing_);
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = data_[3 * i + static_cast<std::size_t>(axis)];
  return out;
}

DisplacementField DisplacementField::from_components(const Volume3& ux, const Volume3& uy,
                                                     const Volume3& uz) {
  require(ux.dims() == uy.dims() && ux.dims() == uz.dims(), "field components differ in dims");
  DisplacementField f(ux.dims(), ux.spacing());
  for (std::size_t i = 0; i < ux.size(); ++i) f.set(i, {ux.data()[i], uy.data()[i], uz.data()[i]});
  return f;
}

double DisplacementField::smoothness() const {
  const Dims& d = dims_;
  double acc = 0.0;
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t i = x + d.nx * (y + d.ny * z);
        const std::size_t nb[3] = {x + 1 < d.nx ? i + 1 : i, y + 1 < d.ny ? i + d.nx : i,
                                   z + 1 < d.nz ? i + d.nx * d.ny : i};
        for (std::size_t n : nb)
          for (int c = 0; c < 3; ++c) {
            const double g = double(data_[3 * n + c]) - double(data_[3 * i + c]);
            acc += g * g;
          }
      }
  return acc / static_cast<double>(d.count());
}

double DisplacementField::mean_magnitude() const {
  double acc = 0.0;
  const std::size_t n = dims_.count();
  for (std::size_t i = 0; i < n; ++i) {
    const double a = data_[3 * i], b = data_[3 * i + 1], c = data_[3 * i + 2];
    acc += std::sqrt(a * a + b * b + c * c);
  }
  return acc / static_cast<double>(n);
}

float trilinear_sample(const Volume3& v, GridPoint p) {
  const Dims& d = v.dims();
  std::size_t x0, y0, z0;
  double fx, fy, fz;
  if (!locate(p.x, d.nx, x0, fx) || !locate(p.y, d.ny, y0, fy) || !locate(p.z, d.nz, z0, fz))
    return 0.0f;
  const std::size_t x1 = d.nx > 1 ? x0 + 1 : x0;
  const std::size_t y1 = d.ny > 1 ? y0 + 1 : y0;
  const std::size_t z1 = d.nz > 1 ? z0 + 1 : z0;
  const auto c = [&](std::size_t x, std::size_t y, std::size_t z) { return double(v.at(x, y, z)); };
  const double c00 = c(x0, y0, z0) * (1 - fx) + c(x1, y0, z0) * fx;
  const double c10 = c(x0, y1, z0) * (1 - fx) + c(x1, y1, z0) * fx;
  const double c01 = c(x0, y0, z1) * (1 - fx) + c(x1, y0, z1) * fx;
  const double c11 = c(x0, y1, z1) * (1 - fx) + c(x1, y1, z1) * fx;
  const double c0 = c00 * (1 - fy) + c10 * fy;
  const double c1 = c01 * (1 - fy) + c11 * fy;
  return static_cast<float>(c0 * (1 - fz) + c1 * fz);
}

SampleGradient trilinear_sample_gradient(const Volume3& v, GridPoint p) {
  const Dims& d = v.dims();
  std::size_t x0, y0, z0;
  double fx, fy, fz;
  SampleGradient out;
  if (!locate(p.x, d.nx, x0, fx) || !locate(p.y, d.ny, y0, fy) || !locate(p.z, d.nz, z0, fz))
    return out;
  const std::size_t x1 = d.nx > 1 ? x0 + 1 : x0;
  const std::size_t y1 = d.ny > 1 ? y0 + 1 : y0;
  const std::size_t z1 = d.nz > 1 ? z0 + 1 : z0;
  const auto c = [&](std::size_t x, std::size_t y, std::size_t z) { return double(v.at(x, y, z)); };
  const double c000 = c(x0, y0, z0), c100 = c(x1, y0, z0), c010 = c(x0, y1, z0), c110 = c(x1, y1, z0);
  const double c001 = c(x0, y0, z1), c101 = c(x1, y0, z1), c011 = c(x0, y1, z1), c111 = c(x1, y1, z1);
  const double gx = d.nx > 1 ? 1.0 : 0.0, gy = d.ny > 1 ? 1.0 : 0.0, gz = d.nz > 1 ? 1.0 : 0.0;

  const double c00 = c000 * (1 - fx) + c100 * fx, c10 = c010 * (1 - fx) + c110 * fx;
  const double c01 = c001 * (1 - fx) + c101 * fx, c11 = c011 * (1 - fx) + c111 * fx;
  const double c0 = c00 * (1 - fy) + c10 * fy, c1 = c01 * (1 - fy) + c11 * fy;
  out.value = static_cast<float>(c0 * (1 - fz) + c1 * fz);

  const double dx0 = (c100 - c000) * (1 - fy) + (c110 - c010) * fy;
  const double dx1 = (c101 - c001) * (1 - fy) + (c111 - c011) * fy;
  out.grad[0] = static_cast<float>(gx * (dx0 * (1 - fz) + dx1 * fz));
  out.grad[1] = static_cast<float>(gy * ((c10 - c00) * (1 - fz) + (c11 - c01) * fz));
  out.grad[2] = static_cast<float>(gz * (c1 - c0));
  return out;
}

Volume3 resample(const Volume3& v, Dims dims, Alignment alignment) {
  require(dims.nx > 0 && dims.ny > 0 && dims.nz > 0, "resample: dims must be positive");
  const Dims& src = v.dims();
  const auto coords = [&](std::size_t n_src, std::size_t n_dst) {
    std::vector<double> c(n_dst);
    const double ratio = static_cast<double>(n_src) / static_cast<double>(n_dst);
    for (std::size_t i = 0; i < n_dst; ++i) {
      double s = alignment == Alignment::centers ? (double(i) + 0.5) * ratio - 0.5 : double(i) * ratio;
      c[i] = std::clamp(s, 0.0, double(n_src - 1));
    }
    return c;
  };
  const auto cx = coords(src.nx, dims.nx), cy = coords(src.ny, dims.ny), cz = coords(src.nz, dims.nz);
  const Spacing sp{v.spacing().sx * double(src.nx) / double(dims.nx),
                   v.spacing().sy * double(src.ny) / double(dims.ny),
                   v.spacing().sz * double(src.nz) / double(dims.nz)};
  Volume3 out(dims, sp);
  for (std::size_t z = 0; z < dims.nz; ++z)
    for (std::size_t y = 0; y < dims.ny; ++y)
      for (std::size_t x = 0; x < dims.nx; ++x)
        out.at(x, y, z) = trilinear_sample(v, {cx[x], cy[y], cz[z]});
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  require(sigma >= 0.0 && std::isfinite(sigma), "gaussian sigma must be finite and >= 0");
  if (sigma == 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * double(i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& w : k) w /= sum;
  return k;
}

Volume3 gaussian_smooth(const Volume3& v, double sigma) {
  const std::vector<double> k = gaussian_kernel(sigma);
  if (k.size() == 1) return v;
  const int radius = static_cast<int>(k.size() / 2);
  const Dims& d = v.dims();
  std::vector<double> cur(v.data().begin(), v.data().end()), next(cur.size());
  const std::size_t stride[3] = {1, d.nx, d.nx * d.ny};
  for (int axis = 0; axis < 3; ++axis) {
    const long n = static_cast<long>(d[axis]);
    const std::size_t s = stride[axis];
    for (std::size_t z = 0; z < d.nz; ++z)
      for (std::size_t y = 0; y < d.ny; ++y)
        for (std::size_t x = 0; x < d.nx; ++x) {
          const std::size_t i = x + d.nx * (y + d.ny * z);
          const long pos = static_cast<long>(axis == 0 ? x : axis == 1 ? y : z);
          double acc = 0.0, wsum = 0.0;
          for (int t = -radius; t <= radius; ++t) {
            const long q = pos + t;
            if (q < 0 || q >= n) continue;
            const double w = k[t + radius];
            acc += w * cur[static_cast<std::size_t>(static_cast<long>(i) + t * static_cast<long>(s))];
            wsum += w;
          }
          next[i] = acc / wsum;
        }
    std::swap(cur, next);
  }
  std::vector<float> out(cur.size());
  std::transform(cur.begin(), cur.end(), out.begin(), [](double x) { return static_cast<float>(x); });
  return Volume3(d, v.spacing(), std::move(out));
}

std::vector<unsigned char> encode_vol(const Volume3& v) {
  for (float f : v.data())
    if (!std::isfinite(f)) fail(Errc::numerical, "refusing to encode non-finite volume");
  auto bytes = detail::frame(kVolMagic, geometry_header(v.dims(), v.spacing(), "f32"));
  detail::append_f32(bytes, v.data());
  return bytes;
}

Volume3 decode_vol(std::span<const unsigned char> bytes) {
  const auto u = detail::unframe(bytes, kVolMagic);
  const Geometry g = parse_geometry(u.header, "f32");
  if (u.payload.size() != 4 * g.dims.count()) fail(Errc::decode, "length mismatch");
  return Volume3(g.dims, g.spacing, detail::load_f32(u.payload, true));
}

void write_vol(const Volume3& v, const std::filesystem::path& path) {
  detail::write_file(path, encode_vol(v));
}

Volume3 read_vol(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_vol(bytes);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

void write_dfield(const DisplacementField& f, const std::filesystem::path& path) {
  for (float x : f.data())
    if (!std::isfinite(x)) fail(Errc::numerical, "refusing to encode non-finite field");
  auto bytes = detail::frame(kFieldMagic, geometry_header(f.dims(), f.spacing(), "f32x3"));
  detail::append_f32(bytes, f.data());
  detail::write_file(path, bytes);
}

DisplacementField read_dfield(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    const auto u = detail::unframe(bytes, kFieldMagic);
    const Geometry g = parse_geometry(u.header, "f32x3");
    if (u.payload.size() != 12 * g.dims.count()) fail(Errc::decode, "length mismatch");
    return DisplacementField(g.dims, g.spacing, detail::load_f32(u.payload, true));
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace agemap
