// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agemap/volume.hpp"

namespace agemap {

inline constexpr int kMinAge = 46;
inline constexpr int kMaxAge = 81;

enum class Sex { F, M };
enum class BmiGroup { healthy, overweight, obese };
enum class Split { train, val, test };

std::string_view to_string(Sex s);
std::string_view to_string(BmiGroup b);
std::string_view to_string(Split s);
Sex parse_sex(std::string_view s);
BmiGroup parse_bmi(std::string_view s);
Split parse_split(std::string_view s);

inline constexpr Sex kSexes[] = {Sex::F, Sex::M};
inline constexpr BmiGroup kBmiGroups[] = {BmiGroup::healthy, BmiGroup::overweight, BmiGroup::obese};

struct SubjectRecord {
  std::int64_t id = 0;
  int age = kMinAge;
  Sex sex = Sex::F;
  BmiGroup bmi_group = BmiGroup::healthy;
  Split split = Split::train;
  std::string image_path;  // relative to the manifest directory
  std::optional<std::string> cam_path;
  std::optional<std::string> field_path;
  std::optional<std::string> affine_path;
  std::optional<double> predicted_age;  // raw network output
  std::optional<double> corrected_age;  // after bias correction
  std::optional<std::string> cam_provenance;

  bool operator==(const SubjectRecord&) const = default;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<SubjectRecord> records;

  std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
};

/// Generator settings. Geometry is laid out on the 32x64x24 reference grid
/// and scaled when `dims` differs.
struct PhantomParams {
  Dims dims{32, 64, 24};
  Spacing spacing{};
  double noise_sigma = 0.02;
  double gain_lo = 0.95, gain_hi = 1.05;
  int max_shift = 2;             // translation jitter, voxels, each axis
  double axis_jitter = 1.0;      // torso x semi-axis perturbation, voxels
  bool nuisance = true;          // false disables gain, jitter and noise
  std::uint64_t seed = 1234;

  // Aging laws, evaluated at (age - 46).
  double spine_base = 0.95, spine_slope = -0.006;
  double heart_radius_base = 3.0, heart_radius_slope = 0.04;
  double muscle_base = 0.85, muscle_slope = -0.004;

  void validate() const;
};

struct GroundTruth {
  Volume3 aging_mask;  // spine, heart at its largest radius, back muscles
  Volume3 body_mask;
  Volume3 spine_mask;
  Volume3 heart_mask;
  Volume3 muscle_mask;
};

struct Phantom {
  Volume3 image;
  GroundTruth truth;
};

double spine_intensity(const PhantomParams& p, int age);
double heart_radius(const PhantomParams& p, int age);
double muscle_intensity(const PhantomParams& p, int age);

/// Deterministic in (params.seed, id); nuisance draws come from a stream keyed
/// on that pair only.
Phantom generate_subject(const PhantomParams& params, std::int64_t id, int age, Sex sex, BmiGroup bmi);

/// Ground truth of the un-jittered reference body for one sex x BMI cell.
GroundTruth reference_truth(const PhantomParams& params, Sex sex, BmiGroup bmi);

/// Balanced record plan without touching disk: equal sex x BMI cells per
/// split, ages spread by stratification over [46, 81], ids 0..n-1.
std::vector<SubjectRecord> plan_cohort(int n_train, int n_val, int n_test);

/// Generates volumes, reference truth masks and manifest.jsonl under out_dir.
Manifest generate_cohort(const PhantomParams& params, int n_train, int n_val, int n_test,
                         const std::filesystem::path& out_dir, int jobs = 1);

std::string truth_file_stem(Sex sex, BmiGroup bmi);

Manifest split_filter(const Manifest& m, const std::function<bool(const SubjectRecord&)>& pred);
Manifest split_filter(const Manifest& m, Split split);

std::string record_to_json(const SubjectRecord& r);
SubjectRecord record_from_json(std::string_view line);

void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace agemap
