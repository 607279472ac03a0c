// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "agemap/agenet.hpp"
#include "agemap/phantom.hpp"

namespace agemap {

inline constexpr const char* kCamLayer = "stage3";

struct CamOptions {
  bool normalize = true;  // divide by the map maximum after upsampling
};

struct CamResult {
  Volume3 map;                // on the input grid
  Volume3 raw;                // relu(sum_c alpha_c A_c) on the activation grid
  std::vector<float> alpha;   // per-channel mean gradient
  double prediction = 0.0;
};

/// Combines an activation A [C, X, Y, Z] with dy/dA into a Grad-CAM map,
/// upsampled to `out` (voxel 0 aligned, as the strided grid is).
CamResult cam_from_activation(std::span<const float> activation, std::span<const float> gradient,
                              const ad::Shape& shape, Dims out, Spacing spacing, const CamOptions& options);

/// Grad-CAM of the scalar prediction with respect to the stage-3 activation.
/// `input` is the net's input tensor; the map has the net's spatial input dims.
CamResult grad_cam(const AgeNet& net, std::span<const float> input, Spacing spacing = {},
                   const CamOptions& options = {});

Volume3 extract_cam(const AgeNet& net, const Volume3& image, const CamOptions& options = {});

struct CohortCamResult {
  Manifest manifest;                  // records carry cam_path and provenance
  std::vector<std::string> failures;  // one message per failed subject
};

/// Writes <cam_dir>/<id>.vol for every record. Failures do not stop the batch.
CohortCamResult extract_cohort(const AgeNet& net, const Manifest& subset, const std::filesystem::path& cam_dir,
                               const std::string& checkpoint_id, const CamOptions& options = {}, int jobs = 1);

}  // namespace agemap
