// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "agemap/error.hpp"
#include "agemap/parallel.hpp"
#include "binary_io.hpp"

namespace agemap {

namespace {

constexpr double kRefX = 32.0, kRefY = 64.0, kRefZ = 24.0;

// Reference-grid anatomy.
constexpr double kTorsoCx = 16.0, kTorsoCy = 40.0, kTorsoCz = 12.0;
constexpr double kTorsoAy = 18.0, kTorsoAz = 8.0;
constexpr double kHeartCx = 13.0, kHeartCy = 48.0, kHeartCz = 10.0;
constexpr double kSpineX = 16.0, kSpineZ = 16.0, kSpineRadius = 2.0;
constexpr int kSpineDisks = 9;
constexpr double kSpineFirstY = 24.0, kSpinePitch = 4.0, kSpineThickness = 2.0;
constexpr double kLegOffsetX = 5.0, kLegRadius = 3.0, kLegTopY = 28.0;
constexpr double kNeckRadius = 2.0, kNeckBottomY = 56.0;
constexpr double kMuscleY0 = 34.0, kMuscleY1 = 45.0;
constexpr double kMuscleZ0 = 18.0, kMuscleZ1 = 20.0;

constexpr float kTorsoValue = 0.5f, kFatValue = 0.9f, kLimbValue = 0.5f, kHeartValue = 0.8f;

double torso_half_width(BmiGroup b) {
  switch (b) {
    case BmiGroup::healthy: return 10.0;
    case BmiGroup::overweight: return 12.0;
    case BmiGroup::obese: return 14.0;
  }
  return 10.0;
}

double fat_thickness(BmiGroup b) {
  switch (b) {
    case BmiGroup::healthy: return 1.0;
    case BmiGroup::overweight: return 2.0;
    case BmiGroup::obese: return 3.0;
  }
  return 1.0;
}

struct Nuisance {
  double gain = 1.0;
  int shift[3] = {0, 0, 0};
  double axis_delta = 0.0;
};

std::mt19937_64 subject_stream(std::uint64_t seed, std::int64_t id) {
  const auto uid = static_cast<std::uint64_t>(id);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(uid), static_cast<std::uint32_t>(uid >> 32), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

enum Label : unsigned char {
  kBackground = 0,
  kLimb,
  kTorso,
  kFat,
  kMuscle,
  kHeart,
  kSpine,
};

struct Layout {
  std::vector<unsigned char> label;  // drawn structure per voxel (last writer wins)
  std::vector<unsigned char> heart_max;
  std::vector<unsigned char> body;
};

double sq(double v) { return v * v; }

// Rasterizes labels for one body; `heart_r` drives the visible heart, `heart_max_r`
// the truth mask.
Layout rasterize(const PhantomParams& p, Sex sex, BmiGroup bmi, const Nuisance& n, double heart_r,
                 double heart_max_r) {
  const Dims& d = p.dims;
  Layout out;
  out.label.assign(d.count(), kBackground);
  out.heart_max.assign(d.count(), 0);
  out.body.assign(d.count(), 0);
  const double scale[3] = {kRefX / double(d.nx), kRefY / double(d.ny), kRefZ / double(d.nz)};
  const double half_w = torso_half_width(bmi) + n.axis_delta;
  const double fat = fat_thickness(bmi);

  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const double qx = (double(x) - n.shift[0]) * scale[0];
        const double qy = (double(y) - n.shift[1]) * scale[1];
        const double qz = (double(z) - n.shift[2]) * scale[2];
        const std::size_t i = x + d.nx * (y + d.ny * z);
        unsigned char lab = kBackground;

        const bool in_leg = qy >= 0.0 && qy < kLegTopY &&
                            (sq(qx - (kTorsoCx - kLegOffsetX)) + sq(qz - kTorsoCz) <= sq(kLegRadius) ||
                             sq(qx - (kTorsoCx + kLegOffsetX)) + sq(qz - kTorsoCz) <= sq(kLegRadius));
        const bool in_neck = qy >= kNeckBottomY && qy < kRefY &&
                             sq(qx - kTorsoCx) + sq(qz - kTorsoCz) <= sq(kNeckRadius);
        if (in_leg || in_neck) lab = kLimb;

        double ax = half_w;
        if (sex == Sex::M) ax += 2.0 * std::clamp((qy - 44.0) / 8.0, 0.0, 1.0);
        const double e = sq((qx - kTorsoCx) / ax) + sq((qy - kTorsoCy) / kTorsoAy) + sq((qz - kTorsoCz) / kTorsoAz);
        if (e <= 1.0) {
          const double ei = sq((qx - kTorsoCx) / (ax - fat)) + sq((qy - kTorsoCy) / (kTorsoAy - fat)) +
                            sq((qz - kTorsoCz) / (kTorsoAz - fat));
          lab = ei <= 1.0 ? kTorso : kFat;
        }

        const bool in_muscle = qy >= kMuscleY0 && qy < kMuscleY1 && qz >= kMuscleZ0 && qz < kMuscleZ1 &&
                               ((qx >= 12.0 && qx < 14.0) || (qx >= 19.0 && qx < 21.0));
        if (in_muscle) lab = kMuscle;

        const double hd = sq(qx - kHeartCx) + sq(qy - kHeartCy) + sq(qz - kHeartCz);
        if (hd <= sq(heart_r)) lab = kHeart;
        if (hd <= sq(heart_max_r)) out.heart_max[i] = 1;

        if (sq(qx - kSpineX) + sq(qz - kSpineZ) <= sq(kSpineRadius) && qy >= kSpineFirstY) {
          const double rel = qy - kSpineFirstY;
          const int k = static_cast<int>(std::floor(rel / kSpinePitch));
          if (k < kSpineDisks && rel - k * kSpinePitch < kSpineThickness) lab = kSpine;
        }

        out.label[i] = lab;
        out.body[i] = (lab != kBackground || out.heart_max[i]) ? 1 : 0;
      }
  return out;
}

GroundTruth truth_from_layout(const PhantomParams& p, const Layout& l) {
  GroundTruth gt{Volume3(p.dims, p.spacing), Volume3(p.dims, p.spacing), Volume3(p.dims, p.spacing),
                 Volume3(p.dims, p.spacing), Volume3(p.dims, p.spacing)};
  for (std::size_t i = 0; i < l.label.size(); ++i) {
    const bool spine = l.label[i] == kSpine;
    const bool muscle = l.label[i] == kMuscle;
    const bool heart = l.heart_max[i] != 0;
    gt.spine_mask.data()[i] = spine ? 1.0f : 0.0f;
    gt.muscle_mask.data()[i] = muscle ? 1.0f : 0.0f;
    gt.heart_mask.data()[i] = heart ? 1.0f : 0.0f;
    gt.aging_mask.data()[i] = (spine || muscle || heart) ? 1.0f : 0.0f;
    gt.body_mask.data()[i] = l.body[i] ? 1.0f : 0.0f;
  }
  return gt;
}

void check_covariates(int age) {
  if (age < kMinAge || age > kMaxAge)
    fail(Errc::invalid_argument, "age " + std::to_string(age) + " outside [46, 81]");
}

}  // namespace

std::string_view to_string(Sex s) { return s == Sex::F ? "F" : "M"; }

std::string_view to_string(BmiGroup b) {
  switch (b) {
    case BmiGroup::healthy: return "healthy";
    case BmiGroup::overweight: return "overweight";
    case BmiGroup::obese: return "obese";
  }
  return "healthy";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Sex parse_sex(std::string_view s) {
  if (s == "F") return Sex::F;
  if (s == "M") return Sex::M;
  fail(Errc::invalid_argument, "unknown sex '" + std::string(s) + "'");
}

BmiGroup parse_bmi(std::string_view s) {
  if (s == "healthy") return BmiGroup::healthy;
  if (s == "overweight") return BmiGroup::overweight;
  if (s == "obese") return BmiGroup::obese;
  fail(Errc::invalid_argument, "unknown BMI group '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  fail(Errc::invalid_argument, "unknown split '" + std::string(s) + "'");
}

void PhantomParams::validate() const {
  require(dims.nx > 0 && dims.ny > 0 && dims.nz > 0, "phantom dims must be positive");
  require(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0, "phantom spacing must be positive");
  require(noise_sigma >= 0.0, "noise_sigma must be >= 0");
  require(gain_lo > 0.0 && gain_hi >= gain_lo, "gain range must be positive and ordered");
  require(max_shift >= 0 && axis_jitter >= 0.0, "jitter bounds must be >= 0");
}

double spine_intensity(const PhantomParams& p, int age) { return p.spine_base + p.spine_slope * (age - kMinAge); }
double heart_radius(const PhantomParams& p, int age) {
  return p.heart_radius_base + p.heart_radius_slope * (age - kMinAge);
}
double muscle_intensity(const PhantomParams& p, int age) {
  return p.muscle_base + p.muscle_slope * (age - kMinAge);
}

Phantom generate_subject(const PhantomParams& params, std::int64_t id, int age, Sex sex, BmiGroup bmi) {
  params.validate();
  check_covariates(age);
  std::mt19937_64 rng = subject_stream(params.seed, id);
  Nuisance n;
  if (params.nuisance) {
    n.gain = std::uniform_real_distribution<double>(params.gain_lo, params.gain_hi)(rng);
    std::uniform_int_distribution<int> shift(-params.max_shift, params.max_shift);
    for (int& s : n.shift) s = shift(rng);
    n.axis_delta = std::uniform_real_distribution<double>(-params.axis_jitter, params.axis_jitter)(rng);
  }
  const double max_r = heart_radius(params, kMaxAge);
  const Layout layout = rasterize(params, sex, bmi, n, heart_radius(params, age), max_r);

  const float spine = static_cast<float>(spine_intensity(params, age));
  const float muscle = static_cast<float>(muscle_intensity(params, age));
  Volume3 image(params.dims, params.spacing);
  auto px = image.data();
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < px.size(); ++i) {
    float v = 0.0f;
    switch (layout.label[i]) {
      case kLimb: v = kLimbValue; break;
      case kTorso: v = kTorsoValue; break;
      case kFat: v = kFatValue; break;
      case kMuscle: v = muscle; break;
      case kHeart: v = kHeartValue; break;
      case kSpine: v = spine; break;
      default: break;
    }
    double out = v * n.gain;
    if (params.nuisance && params.noise_sigma > 0.0) out += params.noise_sigma * noise(rng);
    px[i] = static_cast<float>(std::clamp(out, 0.0, 1.2));
  }
  return {std::move(image), truth_from_layout(params, layout)};
}

GroundTruth reference_truth(const PhantomParams& params, Sex sex, BmiGroup bmi) {
  params.validate();
  const double max_r = heart_radius(params, kMaxAge);
  return truth_from_layout(params, rasterize(params, sex, bmi, Nuisance{}, max_r, max_r));
}

std::vector<SubjectRecord> plan_cohort(int n_train, int n_val, int n_test) {
  const int counts[3] = {n_train, n_val, n_test};
  for (int c : counts)
    if (c < 0 || c % 6 != 0)
      fail(Errc::invalid_argument, "cohort split sizes must be non-negative multiples of 6, got " +
                                       std::to_string(c));
  std::vector<SubjectRecord> out;
  std::int64_t id = 0;
  const Split splits[3] = {Split::train, Split::val, Split::test};
  const int span = kMaxAge - kMinAge + 1;
  for (int s = 0; s < 3; ++s) {
    const int per_cell = counts[s] / 6;
    // Interleave cells so every prefix of a split stays close to balanced. The
    // age grid runs over the whole split, so even one subject per cell gives
    // six distinct ages.
    for (int k = 0; k < per_cell; ++k) {
      int cell = 0;
      for (Sex sex : kSexes)
        for (BmiGroup bmi : kBmiGroups) {
          const int slot = k * 6 + cell++;
          const int age = kMinAge + static_cast<int>(std::floor((slot + 0.5) * span / counts[s]));
          SubjectRecord r;
          r.id = id;
          r.age = age;
          r.sex = sex;
          r.bmi_group = bmi;
          r.split = splits[s];
          char buf[32];
          std::snprintf(buf, sizeof buf, "images/%06lld.vol", static_cast<long long>(id));
          r.image_path = buf;
          out.push_back(std::move(r));
          ++id;
        }
    }
  }
  return out;
}

std::string truth_file_stem(Sex sex, BmiGroup bmi) {
  return "truth/" + std::string(to_string(sex)) + "-" + std::string(to_string(bmi));
}

Manifest generate_cohort(const PhantomParams& params, int n_train, int n_val, int n_test,
                         const std::filesystem::path& out_dir, int jobs) {
  params.validate();
  Manifest m{out_dir, plan_cohort(n_train, n_val, n_test)};
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) fail(Errc::io, "cannot create " + (out_dir / "images").string() + ": " + ec.message());
  parallel_for(m.records.size(), jobs, [&](std::size_t i) {
    const SubjectRecord& r = m.records[i];
    write_vol(generate_subject(params, r.id, r.age, r.sex, r.bmi_group).image, m.resolve(r.image_path));
  });
  for (Sex sex : kSexes)
    for (BmiGroup bmi : kBmiGroups) {
      const GroundTruth gt = reference_truth(params, sex, bmi);
      const std::string stem = truth_file_stem(sex, bmi);
      write_vol(gt.aging_mask, out_dir / (stem + "_aging.vol"));
      write_vol(gt.body_mask, out_dir / (stem + "_body.vol"));
      write_vol(gt.spine_mask, out_dir / (stem + "_spine.vol"));
    }
  write_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

Manifest split_filter(const Manifest& m, const std::function<bool(const SubjectRecord&)>& pred) {
  Manifest out{m.base_dir, {}};
  std::copy_if(m.records.begin(), m.records.end(), std::back_inserter(out.records), pred);
  return out;
}

Manifest split_filter(const Manifest& m, Split split) {
  return split_filter(m, [split](const SubjectRecord& r) { return r.split == split; });
}

std::string record_to_json(const SubjectRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["age"] = r.age;
  j["sex"] = to_string(r.sex);
  j["bmi_group"] = to_string(r.bmi_group);
  j["split"] = to_string(r.split);
  j["image_path"] = r.image_path;
  if (r.cam_path) j["cam_path"] = *r.cam_path;
  if (r.field_path) j["field_path"] = *r.field_path;
  if (r.affine_path) j["affine_path"] = *r.affine_path;
  if (r.predicted_age) j["predicted_age"] = *r.predicted_age;
  if (r.corrected_age) j["corrected_age"] = *r.corrected_age;
  if (r.cam_provenance) j["cam_provenance"] = *r.cam_provenance;
  return j.dump();
}

SubjectRecord record_from_json(std::string_view line) {
  SubjectRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.id = j.at("id").get<std::int64_t>();
    r.age = j.at("age").get<int>();
    r.sex = parse_sex(j.at("sex").get<std::string>());
    r.bmi_group = parse_bmi(j.at("bmi_group").get<std::string>());
    r.split = parse_split(j.at("split").get<std::string>());
    r.image_path = j.at("image_path").get<std::string>();
    const auto opt_str = [&](const char* key, std::optional<std::string>& dst) {
      if (j.contains(key)) dst = j[key].get<std::string>();
    };
    const auto opt_num = [&](const char* key, std::optional<double>& dst) {
      if (j.contains(key)) dst = j[key].get<double>();
    };
    opt_str("cam_path", r.cam_path);
    opt_str("field_path", r.field_path);
    opt_str("affine_path", r.affine_path);
    opt_num("predicted_age", r.predicted_age);
    opt_num("corrected_age", r.corrected_age);
    opt_str("cam_provenance", r.cam_provenance);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::decode, std::string("bad manifest record: ") + e.what());
  } catch (const Error& e) {
    fail(Errc::decode, std::string("bad manifest record: ") + e.what());
  }
  return r;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::string text;
  for (const auto& r : m.records) {
    text += record_to_json(r);
    text += '\n';
  }
  detail::write_text(path, text);
}

Manifest read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::missing_dependency, "manifest not found: " + path.string());
  Manifest m{path.parent_path(), {}};
  std::istringstream in(detail::read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    m.records.push_back(record_from_json(line));
  }
  return m;
}

}  // namespace agemap
