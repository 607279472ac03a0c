// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

// Intensity-based registration of a moving volume onto a fixed (target) grid.
// All transforms map target voxel coordinates to source coordinates, so a
// warped volume is out(x) = v(L x + t + u(x)).

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "agemap/volume.hpp"

namespace agemap {

struct AffineTransform {
  // Row-major 3x4 [L | t] in voxel units.
  std::array<double, 12> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};

  static AffineTransform identity() { return {}; }
  static AffineTransform translation(double tx, double ty, double tz);
  /// Isotropic scaling by `s` about the center of a grid.
  static AffineTransform scaling_about_center(double s, Dims dims);

  double L(int r, int c) const { return m[4 * r + c]; }
  double t(int r) const { return m[4 * r + 3]; }
  double determinant() const;
  GridPoint apply(GridPoint p) const;
  bool finite() const;

  bool operator==(const AffineTransform&) const = default;
};

enum class Similarity { ncc, ssd };

std::string_view to_string(Similarity s);
Similarity parse_similarity(std::string_view s);

struct RegConfig {
  Similarity similarity = Similarity::ncc;
  int levels = 3;                  // pyramid factors 2^(levels-1) .. 1
  int affine_iterations = 100;     // per level
  int deformable_iterations = 150; // per level
  double affine_lr = 0.01;         // Adam rate at the coarsest level, halved per finer level
  double deformable_lr = 0.5;
  double lambda = 0.1;             // diffusion weight
  double field_sigma = 1.0;        // field smoothing after each update
  double tolerance = 1e-5;         // relative loss change ...
  int tolerance_window = 10;       // ... over this many iterations ends a level

  void validate() const;
};

struct TraceEntry {
  int level = 0;  // 0 = coarsest
  int iteration = 0;
  double loss = 0;  // at the level's resolution
  double best = 0;  // best so far on this level
};

/// SSD is the mean squared difference; NCC loss is 1 - correlation.
/// NCC throws Errc::invalid_argument on a constant input.
double similarity(const Volume3& fixed, const Volume3& moving, Similarity kind);

/// Loss and its gradient with respect to each moving voxel value.
double similarity_gradient(const Volume3& fixed, const Volume3& moving, Similarity kind, std::vector<double>& grad);

struct AffineResult {
  AffineTransform transform;
  double initial_loss = 0;  // identity, full resolution
  double final_loss = 0;    // returned transform, full resolution
  std::vector<TraceEntry> trace;
};

AffineResult affine_register(const Volume3& fixed, const Volume3& moving, const RegConfig& config);

struct DeformableResult {
  DisplacementField field;
  double initial_loss = 0;  // zero field, full resolution, similarity + lambda * smoothness
  double final_loss = 0;
  std::vector<TraceEntry> trace;
};

DeformableResult deformable_register(const Volume3& fixed, const Volume3& moving, const RegConfig& config);

/// Backward warping with trilinear interpolation; samples outside the source are 0.
/// `field`, when given, must have the output dims.
Volume3 warp(const Volume3& v, const AffineTransform& affine, const DisplacementField* field = nullptr);
Volume3 warp(const Volume3& v, const AffineTransform& affine, Dims out, const DisplacementField* field = nullptr);

/// Field u' = L u, so that warp(v, A, u') matches warping by A after u.
DisplacementField compose_linear(const AffineTransform& affine, const DisplacementField& field);

void write_affine(const AffineTransform& a, const std::filesystem::path& path);
AffineTransform read_affine(const std::filesystem::path& path);

void write_trace_csv(const std::vector<TraceEntry>& trace, const std::filesystem::path& path);

}  // namespace agemap
