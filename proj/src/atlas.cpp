// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "agemap/error.hpp"
#include "agemap/parallel.hpp"
#include "binary_io.hpp"

namespace agemap {

namespace {

std::string id_stem(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(id));
  return buf;
}

std::vector<SubjectRecord> sorted_by_id(std::span<const SubjectRecord> group) {
  std::vector<SubjectRecord> out(group.begin(), group.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

}  // namespace

std::string_view to_string(AgeBand b) {
  switch (b) {
    case AgeBand::below60: return "age_lt60";
    case AgeBand::from60to70: return "age_60to70";
    case AgeBand::from70: return "age_ge70";
  }
  return "";
}

std::string_view to_string(GapBand b) {
  switch (b) {
    case GapBand::aligned: return "aligned";
    case GapBand::accelerated: return "accelerated";
    case GapBand::decelerated: return "decelerated";
  }
  return "";
}

AgeBand age_band(double age) {
  if (age < 60.0) return AgeBand::below60;
  if (age < 70.0) return AgeBand::from60to70;
  return AgeBand::from70;
}

void GapThresholds::validate() const {
  if (!(aligned > 0.0) || !(accelerated >= aligned))
    fail(Errc::config, "gap thresholds need 0 < aligned <= accelerated");
}

std::optional<GapBand> gap_band(double delta, const GapThresholds& t) {
  if (std::abs(delta) < t.aligned) return GapBand::aligned;
  if (delta > t.accelerated) return GapBand::accelerated;
  if (delta < -t.accelerated) return GapBand::decelerated;
  return std::nullopt;
}

std::string group_key(Sex sex, BmiGroup bmi) { return std::string(to_string(sex)) + "-" + std::string(to_string(bmi)); }

GroupMap stratify(const Manifest& m, Scheme scheme, const GapThresholds& t) {
  GroupMap groups;
  for (const auto& r : m.records) {
    switch (scheme) {
      case Scheme::sex_bmi:
        groups[group_key(r.sex, r.bmi_group)].push_back(r);
        break;
      case Scheme::age_band:
        groups[std::string(to_string(age_band(r.age)))].push_back(r);
        break;
      case Scheme::gap_band: {
        if (!r.corrected_age)
          fail(Errc::missing_dependency, "gap stratification needs corrected_age (subject " + std::to_string(r.id) +
                                             "); run the bias stage first");
        if (const auto b = gap_band(*r.corrected_age - r.age, t)) groups[std::string(to_string(*b))].push_back(r);
        break;
      }
    }
  }
  return groups;
}

std::int64_t select_target(std::span<const SubjectRecord> group) {
  require(!group.empty(), "select_target: empty group");
  std::vector<double> ages;
  for (const auto& r : group) ages.push_back(r.age);
  std::sort(ages.begin(), ages.end());
  const std::size_t n = ages.size();
  const double median = n % 2 ? ages[n / 2] : 0.5 * (ages[n / 2 - 1] + ages[n / 2]);
  const SubjectRecord* best = nullptr;
  for (const auto& r : group) {
    const double d = std::abs(r.age - median);
    if (!best) {
      best = &r;
      continue;
    }
    const double bd = std::abs(best->age - median);
    if (d < bd || (d == bd && r.id < best->id)) best = &r;
  }
  return best->id;
}

const MemberTransform* FrameRegistration::find(std::int64_t id) const {
  for (const auto& t : members)
    if (t.id == id) return &t;
  return nullptr;
}

FrameRegistration register_frame(const Manifest& m, std::span<const SubjectRecord> members, const std::string& key,
                                 const RegConfig& config, const std::filesystem::path& dir, int jobs, bool traces) {
  config.validate();
  const std::vector<SubjectRecord> sorted = sorted_by_id(members);
  FrameRegistration frame;
  frame.key = key;
  frame.target_id = select_target(sorted);
  const auto target_it = std::find_if(sorted.begin(), sorted.end(), [&](const auto& r) { return r.id == frame.target_id; });
  const Volume3 target = read_vol(m.resolve(target_it->image_path));

  frame.members.resize(sorted.size());
  parallel_for(sorted.size(), jobs, [&](std::size_t i) {
    const SubjectRecord& r = sorted[i];
    MemberTransform& t = frame.members[i];
    t.id = r.id;
    try {
      if (r.id == frame.target_id) {
        t.affine = AffineTransform::identity();
        t.field = DisplacementField(target.dims(), target.spacing());
      } else {
        const Volume3 moving = read_vol(m.resolve(r.image_path));
        if (moving.dims() != target.dims()) fail(Errc::invalid_argument, "image dims differ from the target");
        const AffineResult a = affine_register(target, moving, config);
        const DeformableResult d = deformable_register(target, warp(moving, a.transform), config);
        t.affine = a.transform;
        t.field = compose_linear(a.transform, d.field);
        if (traces && !dir.empty()) {
          write_trace_csv(a.trace, dir / (id_stem(r.id) + ".affine.csv"));
          write_trace_csv(d.trace, dir / (id_stem(r.id) + ".deformable.csv"));
        }
      }
      t.ok = true;
    } catch (const std::exception& e) {
      t.ok = false;
      t.error = e.what();
    }
  });

  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json j;
    j["key"] = key;
    j["target_id"] = frame.target_id;
    j["members"] = nlohmann::ordered_json::array();
    for (const auto& t : frame.members) {
      nlohmann::ordered_json e;
      e["id"] = t.id;
      e["ok"] = t.ok;
      if (t.ok) {
        write_affine(t.affine, dir / (id_stem(t.id) + ".affine.json"));
        write_dfield(t.field, dir / (id_stem(t.id) + ".dfield"));
        e["affine"] = id_stem(t.id) + ".affine.json";
        e["field"] = id_stem(t.id) + ".dfield";
      } else {
        e["error"] = t.error;
      }
      j["members"].push_back(e);
    }
    detail::write_text(dir / "frame.json", j.dump(2) + "\n");
  }
  return frame;
}

FrameRegistration read_frame(const std::filesystem::path& dir) {
  const auto path = dir / "frame.json";
  if (!std::filesystem::exists(path))
    fail(Errc::missing_dependency, "registration frame not found: " + path.string() + " (run the register stage)");
  FrameRegistration frame;
  try {
    const auto j = nlohmann::json::parse(detail::read_text(path));
    frame.key = j.at("key").get<std::string>();
    frame.target_id = j.at("target_id").get<std::int64_t>();
    for (const auto& e : j.at("members")) {
      MemberTransform t;
      t.id = e.at("id").get<std::int64_t>();
      t.ok = e.at("ok").get<bool>();
      if (t.ok) {
        t.affine = read_affine(dir / e.at("affine").get<std::string>());
        t.field = read_dfield(dir / e.at("field").get<std::string>());
      } else {
        t.error = e.value("error", std::string("registration failed"));
      }
      frame.members.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::decode, "bad frame.json in " + dir.string() + ": " + e.what());
  }
  return frame;
}

ImportanceAtlas aggregate(const Manifest& m, std::span<const SubjectRecord> members, const std::string& key,
                          const FrameRegistration& frame, const AggregateOptions& options) {
  require(!members.empty(), "aggregate: empty group " + key);
  const std::vector<SubjectRecord> sorted = sorted_by_id(members);
  for (const auto& r : sorted)
    if (!r.cam_path)
      fail(Errc::missing_dependency, "subject " + std::to_string(r.id) +
                                         " has no cam_path in the manifest; run the cam stage before atlas");

  struct Warped {
    Volume3 image, cam;
    std::string error;
  };
  std::vector<Warped> warped(sorted.size());
  parallel_for(sorted.size(), options.jobs, [&](std::size_t i) {
    const SubjectRecord& r = sorted[i];
    const MemberTransform* t = frame.find(r.id);
    if (!t) {
      warped[i].error = "not registered in frame " + frame.key;
      return;
    }
    if (!t->ok) {
      warped[i].error = t->error;
      return;
    }
    try {
      const Volume3 image = read_vol(m.resolve(r.image_path));
      const Volume3 cam = read_vol(m.resolve(*r.cam_path));
      if (cam.dims() != image.dims()) fail(Errc::invalid_argument, "CAM dims differ from the image");
      const DisplacementField* field = t->field.dims().count() ? &t->field : nullptr;
      warped[i].image = warp(image, t->affine, field);
      warped[i].cam = warp(cam, t->affine, field);
    } catch (const std::exception& e) {
      warped[i].error = e.what();
    }
  });

  ImportanceAtlas atlas;
  atlas.key = key;
  atlas.target_id = frame.target_id;
  std::vector<double> img_sum, cam_sum;
  Dims dims;
  Spacing spacing;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (!warped[i].error.empty()) {
      atlas.failures.emplace_back(sorted[i].id, warped[i].error);
      continue;
    }
    if (img_sum.empty()) {
      dims = warped[i].image.dims();
      spacing = warped[i].image.spacing();
      img_sum.assign(dims.count(), 0.0);
      cam_sum.assign(dims.count(), 0.0);
    }
    const auto im = warped[i].image.data();
    const auto cm = warped[i].cam.data();
    for (std::size_t k = 0; k < img_sum.size(); ++k) {
      img_sum[k] += im[k];
      cam_sum[k] += cm[k];
    }
    atlas.contributors.push_back(sorted[i].id);
  }
  const double ok_fraction = double(atlas.contributors.size()) / double(sorted.size());
  if (atlas.contributors.empty() || ok_fraction < options.min_success)
    fail(Errc::numerical, "atlas " + key + ": only " + std::to_string(atlas.contributors.size()) + " of " +
                              std::to_string(sorted.size()) + " members registered");
  const double inv = 1.0 / double(atlas.contributors.size());
  std::vector<float> img(dims.count()), cam(dims.count());
  for (std::size_t k = 0; k < img.size(); ++k) {
    img[k] = static_cast<float>(img_sum[k] * inv);
    cam[k] = static_cast<float>(cam_sum[k] * inv);
  }
  atlas.mean_image = Volume3(dims, spacing, std::move(img));
  atlas.mean_cam = Volume3(dims, spacing, std::move(cam));
  return atlas;
}

ImportanceAtlas build_group(const Manifest& m, std::span<const SubjectRecord> members, const std::string& key,
                            const RegConfig& config, const std::filesystem::path& transform_dir,
                            const AggregateOptions& options) {
  const FrameRegistration frame = register_frame(m, members, key, config, transform_dir, options.jobs);
  return aggregate(m, members, key, frame, options);
}

void write_atlas(const ImportanceAtlas& atlas, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_vol(atlas.mean_image, dir / "mean_image.vol");
  write_vol(atlas.mean_cam, dir / "mean_cam.vol");
  nlohmann::ordered_json j;
  j["key"] = atlas.key;
  j["target_id"] = atlas.target_id;
  j["n_contributors"] = atlas.n_contributors();
  j["contributors"] = atlas.contributors;
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& [id, err] : atlas.failures) j["failures"].push_back({{"id", id}, {"error", err}});
  detail::write_text(dir / "group.json", j.dump(2) + "\n");
}

ImportanceAtlas read_atlas(const std::filesystem::path& dir) {
  const auto path = dir / "group.json";
  if (!std::filesystem::exists(path)) fail(Errc::missing_dependency, "atlas not found: " + path.string());
  ImportanceAtlas a;
  try {
    const auto j = nlohmann::json::parse(detail::read_text(path));
    a.key = j.at("key").get<std::string>();
    a.target_id = j.at("target_id").get<std::int64_t>();
    a.contributors = j.at("contributors").get<std::vector<std::int64_t>>();
    for (const auto& f : j.at("failures"))
      a.failures.emplace_back(f.at("id").get<std::int64_t>(), f.at("error").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::decode, "bad group.json in " + dir.string() + ": " + e.what());
  }
  a.mean_image = read_vol(dir / "mean_image.vol");
  a.mean_cam = read_vol(dir / "mean_cam.vol");
  return a;
}

std::vector<SliceSpec> default_slices(Dims dims) {
  std::vector<SliceSpec> out;
  for (int axis : {2, 1, 0})
    for (int q = 1; q <= 3; ++q) out.push_back({axis, dims[axis] * static_cast<std::size_t>(q) / 4});
  return out;
}

Raster render_atlas(const ImportanceAtlas& atlas, std::span<const SliceSpec> slices, double alpha) {
  require(!slices.empty(), "render_atlas: no slices requested");
  std::vector<Raster> panels;
  std::size_t columns = 0, run = 0;
  int axis = slices.front().axis;
  for (const auto& s : slices) {
    if (s.axis != axis) {
      columns = std::max(columns, run);
      run = 0;
      axis = s.axis;
    }
    ++run;
    panels.push_back(slice_overlay(atlas.mean_image, atlas.mean_cam, s, alpha));
  }
  columns = std::max(columns, run);
  return tile(panels, columns);
}

}  // namespace agemap
