// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

// Stage orchestration. Every stage reads and writes fixed paths under the
// output root and leaves a receipt at <root>/stages/<name>/stage.json holding
// digests of its input files and of the config fields it depends on. A stage
// whose receipt matches and whose outputs exist is skipped.

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "agemap/run_config.hpp"

namespace agemap {

/// Fixed artifact layout under the root.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path cohort() const { return root / "cohort"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path cams() const { return root / "cams"; }
  std::filesystem::path transforms() const { return root / "transforms"; }
  std::filesystem::path atlases() const { return root / "atlases"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path stages() const { return root / "stages"; }

  std::filesystem::path manifest() const { return cohort() / "manifest.jsonl"; }
  std::filesystem::path predicted() const { return cohort() / "predicted.jsonl"; }
  std::filesystem::path corrected() const { return cohort() / "corrected.jsonl"; }
  std::filesystem::path cam_manifest() const { return cohort() / "cams.jsonl"; }
  std::filesystem::path checkpoint() const { return checkpoints() / "agenet.ckpt"; }
  std::filesystem::path checkpoint25d() const { return checkpoints() / "net25d.ckpt"; }
  std::filesystem::path receipt(std::string_view stage) const { return stages() / std::string(stage) / "stage.json"; }
};

/// Registration frame used for the age-band and gap-band atlases.
inline constexpr const char* kPopulationFrame = "all";

struct StageOptions {
  int jobs = 1;
  bool force = false;
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

struct StageOutcome {
  std::string stage;
  bool skipped = false;
  double seconds = 0;
};

/// All stage names, in run-all order followed by the optional baseline.
const std::vector<std::string>& stage_names();

/// phantom, train, predict, bias, cam, register, atlas, report.
const std::vector<std::string>& run_all_stages();

StageOutcome run_stage(const RunConfig& config, std::string_view stage, const StageOptions& options = {});

std::vector<StageOutcome> run_all(const RunConfig& config, const StageOptions& options = {});

}  // namespace agemap
