// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agemap/phantom.hpp"
#include "agemap/registration.hpp"
#include "agemap/slice_export.hpp"

namespace agemap {

enum class AgeBand { below60, from60to70, from70 };
enum class GapBand { aligned, accelerated, decelerated };

std::string_view to_string(AgeBand b);
std::string_view to_string(GapBand b);

AgeBand age_band(double age);

struct GapThresholds {
  double aligned = 0.5;      // |delta| below this
  double accelerated = 4.0;  // |delta| above this, by sign

  void validate() const;
};

/// Unassigned deltas (between the thresholds) yield nullopt.
std::optional<GapBand> gap_band(double delta, const GapThresholds& t = {});

enum class Scheme { sex_bmi, age_band, gap_band };

/// "F-healthy", "M-obese", ...
std::string group_key(Sex sex, BmiGroup bmi);

/// Ordered by key; member order follows the manifest. The gap scheme needs
/// corrected_age on every record and drops unassigned subjects.
using GroupMap = std::map<std::string, std::vector<SubjectRecord>>;
GroupMap stratify(const Manifest& m, Scheme scheme, const GapThresholds& t = {});

/// Member whose age is closest to the group median; ties go to the lowest id.
std::int64_t select_target(std::span<const SubjectRecord> group);

struct MemberTransform {
  std::int64_t id = 0;
  bool ok = false;
  std::string error;
  AffineTransform affine;
  DisplacementField field;  // composed so that warp(v, affine, &field) maps onto the target
};

/// All members of one registration frame mapped onto a common target.
struct FrameRegistration {
  std::string key;
  std::int64_t target_id = 0;
  std::vector<MemberTransform> members;  // ascending id

  const MemberTransform* find(std::int64_t id) const;
};

/// Registers every member image to the target image (affine, then deformable).
/// The target itself gets the identity. With a non-empty `dir`, transforms are
/// written as <id>.affine.json / <id>.dfield plus frame.json, and with
/// `traces` set the per-iteration losses as <id>.affine.csv / <id>.deformable.csv.
FrameRegistration register_frame(const Manifest& m, std::span<const SubjectRecord> members, const std::string& key,
                                 const RegConfig& config, const std::filesystem::path& dir, int jobs = 1,
                                 bool traces = false);

FrameRegistration read_frame(const std::filesystem::path& dir);

struct ImportanceAtlas {
  std::string key;
  std::int64_t target_id = 0;
  Volume3 mean_image;
  Volume3 mean_cam;
  std::vector<std::int64_t> contributors;  // ascending id
  std::vector<std::pair<std::int64_t, std::string>> failures;

  std::size_t n_contributors() const { return contributors.size(); }
};

struct AggregateOptions {
  double min_success = 0.8;  // fraction of members that must register
  int jobs = 1;
};

/// Voxel-wise means of the warped member images and CAMs. Every member needs
/// a cam_path and an entry in `frame`; summation follows ascending id.
ImportanceAtlas aggregate(const Manifest& m, std::span<const SubjectRecord> members, const std::string& key,
                          const FrameRegistration& frame, const AggregateOptions& options = {});

/// register_frame + aggregate for one group with itself as the frame.
ImportanceAtlas build_group(const Manifest& m, std::span<const SubjectRecord> members, const std::string& key,
                            const RegConfig& config, const std::filesystem::path& transform_dir,
                            const AggregateOptions& options = {});

/// mean_image.vol, mean_cam.vol, group.json.
void write_atlas(const ImportanceAtlas& atlas, const std::filesystem::path& dir);
ImportanceAtlas read_atlas(const std::filesystem::path& dir);

/// Slices at 1/4, 1/2 and 3/4 of each axis, axial (z) first.
std::vector<SliceSpec> default_slices(Dims dims);

/// Overlay panels, one row per plane, one column per slice of that plane.
Raster render_atlas(const ImportanceAtlas& atlas, std::span<const SliceSpec> slices, double alpha = 0.5);

}  // namespace agemap
