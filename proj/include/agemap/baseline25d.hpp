// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

// Projection baseline: each volume is collapsed to a coronal (mean over z) and
// a sagittal (mean over x) image and a planar AgeNet is trained on the pair.

#pragma once

#include "agemap/agenet.hpp"
#include "agemap/gradcam.hpp"
#include "agemap/trainer.hpp"

namespace agemap {

/// Width and height shared by both projection channels: W = max(nx, nz), H = ny.
Dims projection_dims(Dims volume);

/// Two-channel projection stored as a volume with nz = 2: slice z = 0 holds the
/// coronal image indexed (x, y), slice z = 1 the sagittal image indexed (z, y).
/// Columns past a channel's own width are zero. The data is laid out exactly
/// as the planar net's [2, W, H, 1] input tensor.
Volume3 project(const Volume3& v);

NetConfig net25d_config(Dims volume, const NetConfig& base);

Dataset load_projection_dataset(const Manifest& m, int jobs = 1);

struct Baseline25d {
  AgeNet net;
  History history;
};

Baseline25d train25d(const Manifest& train_split, const Manifest& val_split, const NetConfig& base,
                     const TrainConfig& config, const EpochCallback& on_epoch = {});

double predict25d(const AgeNet& net, const Volume3& v);

/// Planar Grad-CAM over the projection grid, dims (W, H, 1).
Volume3 cam25d(const AgeNet& net, const Volume3& v, const CamOptions& options = {});

}  // namespace agemap
