// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace agemap {

struct Dims {
  std::size_t nx = 0, ny = 0, nz = 0;

  std::size_t count() const { return nx * ny * nz; }
  std::size_t operator[](int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  bool operator==(const Dims&) const = default;
};

struct Spacing {
  double sx = 1.0, sy = 1.0, sz = 1.0;
  double operator[](int axis) const { return axis == 0 ? sx : axis == 1 ? sy : sz; }
  bool operator==(const Spacing&) const = default;
};

/// Continuous coordinates in voxel units of some reference grid.
struct GridPoint {
  double x = 0, y = 0, z = 0;
};

/// A 3D scalar grid, x-fastest: index = x + nx * (y + ny * z).
class Volume3 {
 public:
  Volume3() = default;
  explicit Volume3(Dims dims, Spacing spacing = {}, float fill = 0.0f);
  Volume3(Dims dims, Spacing spacing, std::vector<float> data);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return data_.size(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims_.nx * (y + dims_.ny * z);
  }
  float at(std::size_t x, std::size_t y, std::size_t z) const { return data_[index(x, y, z)]; }
  float& at(std::size_t x, std::size_t y, std::size_t z) { return data_[index(x, y, z)]; }

  bool operator==(const Volume3&) const = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<float> data_;
};

/// Per-voxel displacement vectors on a target grid, interleaved (ux, uy, uz).
class DisplacementField {
 public:
  DisplacementField() = default;
  explicit DisplacementField(Dims dims, Spacing spacing = {});
  DisplacementField(Dims dims, Spacing spacing, std::vector<float> data);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  std::array<float, 3> at(std::size_t voxel) const {
    return {data_[3 * voxel], data_[3 * voxel + 1], data_[3 * voxel + 2]};
  }
  void set(std::size_t voxel, std::array<float, 3> u) {
    data_[3 * voxel] = u[0];
    data_[3 * voxel + 1] = u[1];
    data_[3 * voxel + 2] = u[2];
  }

  /// One displacement component as a scalar volume.
  Volume3 component(int axis) const;
  static DisplacementField from_components(const Volume3& ux, const Volume3& uy, const Volume3& uz);

  /// Mean squared forward-difference gradient over all components.
  double smoothness() const;
  double mean_magnitude() const;

  bool operator==(const DisplacementField&) const = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<float> data_;
};

/// Trilinear interpolation; points outside [0, n-1] on any axis sample 0.
float trilinear_sample(const Volume3& v, GridPoint p);

struct SampleGradient {
  float value = 0.0f;
  std::array<float, 3> grad{};  // d value / d (x, y, z); zero outside the domain
};

/// Trilinear value together with its analytic spatial derivative.
SampleGradient trilinear_sample_gradient(const Volume3& v, GridPoint p);

enum class Alignment {
  centers,  // voxel centers aligned: src = (i + 0.5) * n_src / n_dst - 0.5
  origin,   // voxel 0 aligned: src = i * n_src / n_dst (matches strided conv grids)
};

/// Resample to new dims, scaling coordinates proportionally. Source
/// coordinates are clamped to the source domain so edges replicate.
Volume3 resample(const Volume3& v, Dims dims, Alignment alignment = Alignment::centers);

/// Separable Gaussian smoothing, radius ceil(3 sigma). Taps falling outside the
/// volume are dropped and the remaining weights renormalized.
Volume3 gaussian_smooth(const Volume3& v, double sigma);

std::vector<double> gaussian_kernel(double sigma);

void write_vol(const Volume3& v, const std::filesystem::path& path);
Volume3 read_vol(const std::filesystem::path& path);

void write_dfield(const DisplacementField& f, const std::filesystem::path& path);
DisplacementField read_dfield(const std::filesystem::path& path);

/// Encode/decode in memory; the file functions are thin wrappers.
std::vector<unsigned char> encode_vol(const Volume3& v);
Volume3 decode_vol(std::span<const unsigned char> bytes);

}  // namespace agemap
