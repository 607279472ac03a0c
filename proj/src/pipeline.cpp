// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "agemap/analysis.hpp"
#include "agemap/atlas.hpp"
#include "agemap/baseline25d.hpp"
#include "agemap/checkpoint.hpp"
#include "agemap/digest.hpp"
#include "agemap/error.hpp"
#include "agemap/gradcam.hpp"
#include "agemap/slice_export.hpp"
#include "agemap/trainer.hpp"
#include "binary_io.hpp"

namespace agemap {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Plan {
  std::vector<fs::path> inputs;
  ojson config = ojson::object();
  std::vector<fs::path> outputs;
  std::function<void()> run;
};

struct Context {
  const RunConfig& config;
  const StageOptions& options;
  Layout layout;

  void log(const std::string& msg) const {
    if (options.log) options.log(msg);
  }
};

std::string num(double v, int digits = 6) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void need(const fs::path& path, std::string_view stage, std::string_view upstream, const std::string& what) {
  if (!fs::exists(path))
    fail(Errc::missing_dependency, std::string(stage) + ": missing " + what + " (" + path.string() + "); run `agemap " +
                                       std::string(upstream) + "` first");
}

Manifest load_manifest(const fs::path& path, std::string_view stage, std::string_view upstream, const std::string& what) {
  need(path, stage, upstream, what);
  return read_manifest(path);
}

void add_images(std::vector<fs::path>& inputs, const Manifest& m) {
  for (const auto& r : m.records) inputs.push_back(m.resolve(r.image_path));
}

std::vector<std::string> sex_bmi_keys() {
  std::vector<std::string> keys;
  for (BmiGroup b : kBmiGroups)
    for (Sex s : kSexes) keys.push_back(group_key(s, b));
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::vector<std::string> age_band_keys() {
  return {std::string(to_string(AgeBand::below60)), std::string(to_string(AgeBand::from60to70)),
          std::string(to_string(AgeBand::from70))};
}

std::vector<std::string> gap_band_keys() {
  return {std::string(to_string(GapBand::aligned)), std::string(to_string(GapBand::accelerated)),
          std::string(to_string(GapBand::decelerated))};
}

std::string rel(const Layout& l, const fs::path& p) { return p.lexically_relative(l.root).generic_string(); }

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---- stages -----------------------------------------------------------------

Plan plan_phantom(const Context& c) {
  Plan p;
  p.config["seed"] = c.config.seed();
  p.config["phantom"] = c.config.section("phantom");
  p.config["cohort"] = c.config.section("cohort");
  p.outputs = {c.layout.manifest()};
  p.run = [&c] {
    const CohortSizes s = c.config.cohort();
    const Manifest m = generate_cohort(c.config.phantom(), s.n_train, s.n_val, s.n_test, c.layout.cohort(), c.options.jobs);
    c.log("phantom: wrote " + std::to_string(m.records.size()) + " subjects to " + c.layout.cohort().string());
  };
  return p;
}

Plan plan_train(const Context& c) {
  Plan p;
  const Manifest m = load_manifest(c.layout.manifest(), "train", "phantom", "cohort manifest");
  const Manifest train_split = split_filter(m, Split::train), val_split = split_filter(m, Split::val);
  p.inputs.push_back(c.layout.manifest());
  add_images(p.inputs, train_split);
  add_images(p.inputs, val_split);
  p.config["seed"] = c.config.seed();
  p.config["dims"] = c.config.section("phantom").at("dims");
  p.config["net"] = c.config.section("net");
  p.config["train"] = c.config.section("train");
  const fs::path history = c.layout.checkpoints() / "history.csv";
  p.outputs = {c.layout.checkpoint(), history};
  p.run = [&c, train_split, val_split, history] {
    const TrainConfig tc = c.config.train(c.options.jobs);
    const Dataset train_set = load_dataset(train_split, c.options.jobs);
    const Dataset val_set = load_dataset(val_split, c.options.jobs);
    AgeNet net = AgeNet::initialized(c.config.net(), static_cast<float>(mean_target(train_set)));
    c.log("train: " + std::to_string(train_set.size()) + " train / " + std::to_string(val_set.size()) + " val, " +
          std::to_string(net.parameter_count()) + " parameters");
    const History h = train(net, train_set, val_set, tc, [&](const EpochStats& e) {
      c.log("train: epoch " + std::to_string(e.epoch) + " loss " + num(e.train_loss, 4) + " val_mae " +
            num(e.val_mae, 4) + " lr " + num(e.lr, 8));
    });
    save_checkpoint(net, c.layout.checkpoint());
    std::string csv = "epoch,train_loss,val_mae,lr\n";
    for (const auto& e : h.epochs)
      csv += std::to_string(e.epoch) + "," + num(e.train_loss, 9) + "," + num(e.val_mae, 9) + "," + num(e.lr, 10) + "\n";
    detail::write_text(history, csv);
  };
  return p;
}

Plan plan_predict(const Context& c) {
  Plan p;
  need(c.layout.checkpoint(), "predict", "train", "checkpoint");
  const Manifest m = load_manifest(c.layout.manifest(), "predict", "phantom", "cohort manifest");
  p.inputs = {c.layout.checkpoint(), c.layout.manifest()};
  add_images(p.inputs, m);
  p.config["net"] = c.config.section("net");
  p.outputs = {c.layout.predicted()};
  p.run = [&c, m] {
    const AgeNet net = load_checkpoint(c.layout.checkpoint(), c.config.net());
    const Manifest out = predict_manifest(net, m, c.options.jobs);
    write_manifest(out, c.layout.predicted());
    c.log("predict: " + std::to_string(out.records.size()) + " predictions");
  };
  return p;
}

Plan plan_bias(const Context& c) {
  Plan p;
  need(c.layout.predicted(), "bias", "predict", "raw predictions");
  p.inputs = {c.layout.predicted()};
  p.config["bias_form"] = c.config.section("analysis").at("bias_form");
  const fs::path summary = c.layout.reports() / "bias.json";
  p.outputs = {c.layout.corrected(), summary};
  p.run = [&c, summary] {
    Manifest m = read_manifest(c.layout.predicted());
    const Manifest val = split_filter(m, Split::val);
    const BiasModel model = fit_bias(val.records);
    const BiasForm form = c.config.bias_form();
    apply_bias(model, m.records, form);
    write_manifest(m, c.layout.corrected());

    const Manifest test = split_filter(m, Split::test);
    std::vector<double> age, raw_gap, corr_gap;
    for (const auto& r : test.records) {
      age.push_back(r.age);
      raw_gap.push_back(*r.predicted_age - r.age);
      corr_gap.push_back(*r.corrected_age - r.age);
    }
    ojson j;
    j["a"] = model.a;
    j["b"] = model.b;
    j["form"] = to_string(form);
    j["n_val"] = val.records.size();
    if (age.size() >= 2) {
      j["test_raw_gap_slope"] = ols_slope(age, raw_gap);
      j["test_corrected_gap_slope"] = ols_slope(age, corr_gap);
    }
    detail::write_text(summary, j.dump(2) + "\n");
    c.log("bias: a " + num(model.a, 4) + " b " + num(model.b, 4));
  };
  return p;
}

Plan plan_cam(const Context& c) {
  Plan p;
  need(c.layout.checkpoint(), "cam", "train", "checkpoint");
  const Manifest m = load_manifest(c.layout.corrected(), "cam", "bias", "corrected predictions");
  const Manifest test = split_filter(m, Split::test);
  p.inputs = {c.layout.checkpoint(), c.layout.corrected()};
  add_images(p.inputs, test);
  p.config["net"] = c.config.section("net");
  p.config["cam"] = c.config.section("cam");
  p.outputs = {c.layout.cam_manifest()};
  p.run = [&c, test] {
    const AgeNet net = load_checkpoint(c.layout.checkpoint(), c.config.net());
    const std::string ckpt = sha256_file(c.layout.checkpoint()).substr(0, 16);
    const CohortCamResult res = extract_cohort(net, test, c.layout.cams(), ckpt, c.config.cam(), c.options.jobs);
    write_manifest(res.manifest, c.layout.cam_manifest());
    for (const auto& f : res.failures) c.log("cam: " + f);
    if (!res.failures.empty())
      fail(Errc::io, "cam: " + std::to_string(res.failures.size()) + " of " + std::to_string(test.records.size()) +
                         " subjects failed");
    c.log("cam: " + std::to_string(test.records.size()) + " maps in " + c.layout.cams().string());
  };
  return p;
}

Plan plan_register(const Context& c) {
  Plan p;
  const Manifest m = load_manifest(c.layout.manifest(), "register", "phantom", "cohort manifest");
  const Manifest test = split_filter(m, Split::test);
  p.inputs = {c.layout.manifest()};
  add_images(p.inputs, test);
  p.config["reg"] = c.config.section("reg");
  for (const auto& key : sex_bmi_keys()) p.outputs.push_back(c.layout.transforms() / key / "frame.json");
  p.outputs.push_back(c.layout.transforms() / kPopulationFrame / "frame.json");
  p.run = [&c, test] {
    const RegConfig reg = c.config.reg();
    const bool traces = c.config.section("reg").at("trace").get<bool>();
    const auto report = [&](const FrameRegistration& f) {
      std::size_t failed = 0;
      for (const auto& t : f.members) {
        if (t.ok) continue;
        ++failed;
        c.log("register: " + f.key + " subject " + std::to_string(t.id) + " failed: " + t.error);
      }
      c.log("register: frame " + f.key + " target " + std::to_string(f.target_id) + ", " +
            std::to_string(f.members.size() - failed) + "/" + std::to_string(f.members.size()) + " registered");
    };
    const GroupMap groups = stratify(test, Scheme::sex_bmi);
    for (const auto& [key, members] : groups)
      report(register_frame(test, members, key, reg, c.layout.transforms() / key, c.options.jobs, traces));
    report(register_frame(test, test.records, kPopulationFrame, reg, c.layout.transforms() / kPopulationFrame,
                          c.options.jobs, traces));
  };
  return p;
}

void add_frame_inputs(std::vector<fs::path>& inputs, const fs::path& dir) {
  const fs::path frame = dir / "frame.json";
  inputs.push_back(frame);
  const auto j = nlohmann::json::parse(detail::read_text(frame));
  for (const auto& e : j.at("members")) {
    if (!e.at("ok").get<bool>()) continue;
    inputs.push_back(dir / e.at("affine").get<std::string>());
    inputs.push_back(dir / e.at("field").get<std::string>());
  }
}

Plan plan_atlas(const Context& c) {
  Plan p;
  if (!fs::exists(c.layout.cam_manifest()))
    fail(Errc::missing_dependency,
         "atlas: subjects have no cam_path (" + c.layout.cam_manifest().string() + " is missing); run `agemap cam` first");
  const Manifest m = read_manifest(c.layout.cam_manifest());
  for (const auto& r : m.records)
    if (!r.cam_path)
      fail(Errc::missing_dependency,
           "atlas: subject " + std::to_string(r.id) + " has no cam_path; run `agemap cam` first");
  p.inputs = {c.layout.cam_manifest()};
  add_images(p.inputs, m);
  for (const auto& r : m.records) p.inputs.push_back(m.resolve(*r.cam_path));
  std::vector<std::string> frames = sex_bmi_keys();
  frames.push_back(kPopulationFrame);
  for (const auto& key : frames) {
    need(c.layout.transforms() / key / "frame.json", "atlas", "register", "registration frame " + key);
    add_frame_inputs(p.inputs, c.layout.transforms() / key);
  }
  p.config["atlas"] = c.config.section("atlas");
  p.config["aligned"] = c.config.section("analysis").at("aligned");
  p.config["accelerated"] = c.config.section("analysis").at("accelerated");
  for (const auto& key : sex_bmi_keys()) p.outputs.push_back(c.layout.atlases() / key / "group.json");
  for (const auto& key : age_band_keys()) p.outputs.push_back(c.layout.atlases() / key / "group.json");
  p.run = [&c, m] {
    AggregateOptions opt;
    opt.min_success = c.config.atlas_min_success();
    opt.jobs = c.options.jobs;
    const auto build = [&](const GroupMap& groups, const FrameRegistration* shared) {
      for (const auto& [key, members] : groups) {
        const FrameRegistration frame = shared ? *shared : read_frame(c.layout.transforms() / key);
        const ImportanceAtlas a = aggregate(m, members, key, frame, opt);
        write_atlas(a, c.layout.atlases() / key);
        for (const auto& [id, err] : a.failures) c.log("atlas: " + key + " subject " + std::to_string(id) + ": " + err);
        c.log("atlas: " + key + " from " + std::to_string(a.n_contributors()) + " subjects, target " +
              std::to_string(a.target_id));
      }
    };
    for (const auto& key : gap_band_keys()) fs::remove_all(c.layout.atlases() / key);
    build(stratify(m, Scheme::sex_bmi), nullptr);
    const FrameRegistration population = read_frame(c.layout.transforms() / kPopulationFrame);
    build(stratify(m, Scheme::age_band), &population);
    build(stratify(m, Scheme::gap_band, c.config.thresholds()), &population);
  };
  return p;
}

std::map<std::int64_t, double> read_baseline_predictions(const fs::path& path) {
  std::map<std::int64_t, double> out;
  std::istringstream in(detail::read_text(path));
  std::string line;
  std::getline(in, line);  // header: id,age,raw,corrected
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, age, raw, corrected;
    std::getline(row, id, ',');
    std::getline(row, age, ',');
    std::getline(row, raw, ',');
    std::getline(row, corrected, ',');
    try {
      out[std::stoll(id)] = std::stod(corrected);
    } catch (const std::exception&) {
      fail(Errc::decode, "bad row in " + path.string() + ": " + line);
    }
  }
  return out;
}

Plan plan_report(const Context& c) {
  Plan p;
  need(c.layout.manifest(), "report", "phantom", "cohort manifest");
  need(c.layout.cam_manifest(), "report", "cam", "CAM manifest");
  p.inputs = {c.layout.manifest(), c.layout.cam_manifest()};
  std::vector<std::string> keys = sex_bmi_keys();
  for (const auto& k : age_band_keys()) keys.push_back(k);
  for (const auto& k : keys) need(c.layout.atlases() / k / "group.json", "report", "atlas", "atlas " + k);
  std::vector<std::string> gap_keys;
  for (const auto& k : gap_band_keys())
    if (fs::exists(c.layout.atlases() / k / "group.json")) gap_keys.push_back(k);
  for (const auto& k : gap_keys) keys.push_back(k);
  for (const auto& k : keys)
    for (const char* f : {"group.json", "mean_image.vol", "mean_cam.vol"}) p.inputs.push_back(c.layout.atlases() / k / f);
  const fs::path baseline = c.layout.reports() / "baseline25d.csv";
  const bool with_baseline = fs::exists(baseline);
  if (with_baseline) p.inputs.push_back(baseline);
  p.config["seed"] = c.config.seed();
  p.config["phantom"] = c.config.section("phantom");
  p.config["analysis"] = c.config.section("analysis");
  const fs::path dir = c.layout.reports();
  p.outputs = {dir / "metrics.csv", dir / "metrics.txt", dir / "scatter.csv", dir / "localization.csv",
               dir / "summary.json"};
  p.run = [&c, keys, gap_keys, baseline, with_baseline, dir] {
    const Manifest all = read_manifest(c.layout.manifest());
    const Manifest test = read_manifest(c.layout.cam_manifest());
    const Manifest train_split = split_filter(all, Split::train);
    std::map<std::int64_t, double> extra;
    if (with_baseline) extra = read_baseline_predictions(baseline);
    const MetricsTable table = metrics(test.records, train_split.records, with_baseline ? &extra : nullptr);
    detail::write_text(dir / "metrics.csv", render_csv(table));
    const std::string text = render_text(table);
    detail::write_text(dir / "metrics.txt", text);
    c.log("report: wrote " + (dir / "metrics.txt").string());

    const auto gaps = gap_table(test.records, c.config.thresholds());
    detail::write_text(dir / "scatter.csv", scatter_csv(gaps));

    const PhantomParams params = c.config.phantom();
    std::map<std::int64_t, const SubjectRecord*> by_id;
    for (const auto& r : test.records) by_id[r.id] = &r;
    std::string loc = "atlas,target_id,n,localization,aging_fraction,spine,heart,muscle\n";
    ojson summary;
    double worst = std::numeric_limits<double>::infinity();
    ojson bands = ojson::object();
    std::vector<Raster> sheet;
    for (const auto& key : keys) {
      const ImportanceAtlas a = read_atlas(c.layout.atlases() / key);
      const auto it = by_id.find(a.target_id);
      if (it == by_id.end()) fail(Errc::decode, "atlas " + key + " names an unknown target subject");
      const SubjectRecord& t = *it->second;
      const GroundTruth gt = generate_subject(params, t.id, t.age, t.sex, t.bmi_group).truth;
      double aging = 0, body = 0;
      for (float v : gt.aging_mask.data()) aging += v > 0.5f;
      for (float v : gt.body_mask.data()) body += v > 0.5f;
      const double score = localization_score(a.mean_cam, gt);
      const double spine = masked_mean(a.mean_cam, gt.spine_mask);
      loc += key + "," + std::to_string(a.target_id) + "," + std::to_string(a.n_contributors()) + "," + num(score) +
             "," + num(aging / body) + "," + num(spine) + "," + num(masked_mean(a.mean_cam, gt.heart_mask)) + "," +
             num(masked_mean(a.mean_cam, gt.muscle_mask)) + "\n";
      const bool is_sex_bmi = key.find('-') != std::string::npos;
      if (is_sex_bmi) worst = std::min(worst, score);
      if (key.rfind("age_", 0) == 0) bands[key] = spine;
      const auto slices = default_slices(a.mean_image.dims());
      const Raster grid = render_atlas(a, slices);
      write_ppm(grid, dir / ("atlas_" + key + ".ppm"));
      if (is_sex_bmi) sheet.push_back(grid);
    }
    detail::write_text(dir / "localization.csv", loc);
    if (!sheet.empty()) write_ppm(tile(sheet, 3), dir / "atlas_sheet.ppm");

    std::vector<double> age, raw_gap, corr_gap;
    for (const auto& g : gaps) {
      age.push_back(g.age);
      raw_gap.push_back(g.raw - g.age);
      corr_gap.push_back(g.delta);
    }
    const MetricsRow& overall = table.rows.back();
    summary["test_mae"] = overall.model ? *overall.model : NAN;
    summary["mean_pred_mae"] = overall.baseline ? *overall.baseline : NAN;
    if (overall.extra) summary["mae_25d"] = *overall.extra;
    summary["raw_gap_slope"] = ols_slope(age, raw_gap);
    summary["corrected_gap_slope"] = ols_slope(age, corr_gap);
    summary["min_sex_bmi_localization"] = std::isinf(worst) ? 1e300 : worst;
    summary["age_band_spine"] = bands;
    summary["gap_atlases"] = gap_keys;
    detail::write_text(dir / "summary.json", summary.dump(2) + "\n");
  };
  return p;
}

Plan plan_baseline25d(const Context& c) {
  Plan p;
  const Manifest m = load_manifest(c.layout.manifest(), "baseline25d", "phantom", "cohort manifest");
  p.inputs = {c.layout.manifest()};
  add_images(p.inputs, m);
  p.config["seed"] = c.config.seed();
  p.config["net"] = c.config.section("net");
  p.config["train"] = c.config.section("train");
  p.config["baseline25d"] = c.config.section("baseline25d");
  p.config["bias_form"] = c.config.section("analysis").at("bias_form");
  const fs::path csv = c.layout.reports() / "baseline25d.csv";
  p.outputs = {c.layout.checkpoint25d(), csv};
  p.run = [&c, m, csv] {
    TrainConfig tc = c.config.train(c.options.jobs);
    tc.epochs = c.config.baseline25d_epochs();
    const Baseline25d b = train25d(split_filter(m, Split::train), split_filter(m, Split::val), c.config.net(), tc,
                                   [&](const EpochStats& e) {
                                     c.log("baseline25d: epoch " + std::to_string(e.epoch) + " loss " +
                                           num(e.train_loss, 4) + " val_mae " + num(e.val_mae, 4));
                                   });
    save_checkpoint(b.net, c.layout.checkpoint25d());
    std::vector<SubjectRecord> val = split_filter(m, Split::val).records;
    for (auto& r : val) r.predicted_age = predict25d(b.net, read_vol(m.resolve(r.image_path)));
    const BiasModel model = fit_bias(val);
    std::string out = "id,age,raw,corrected\n";
    for (const auto& r : split_filter(m, Split::test).records) {
      const double raw = predict25d(b.net, read_vol(m.resolve(r.image_path)));
      out += std::to_string(r.id) + "," + std::to_string(r.age) + "," + num(raw) + "," +
             num(apply_bias(model, raw, c.config.bias_form(), r.age)) + "\n";
    }
    detail::write_text(csv, out);
  };
  return p;
}

Plan make_plan(const Context& c, std::string_view stage) {
  if (stage == "phantom") return plan_phantom(c);
  if (stage == "train") return plan_train(c);
  if (stage == "predict") return plan_predict(c);
  if (stage == "bias") return plan_bias(c);
  if (stage == "cam") return plan_cam(c);
  if (stage == "register") return plan_register(c);
  if (stage == "atlas") return plan_atlas(c);
  if (stage == "report") return plan_report(c);
  if (stage == "baseline25d") return plan_baseline25d(c);
  fail(Errc::config, "unknown stage '" + std::string(stage) + "'");
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"phantom", "train", "predict", "bias",       "cam",
                                              "register", "atlas", "report", "baseline25d"};
  return names;
}

const std::vector<std::string>& run_all_stages() {
  static const std::vector<std::string> names{"phantom", "train", "predict", "bias", "cam", "register", "atlas", "report"};
  return names;
}

StageOutcome run_stage(const RunConfig& config, std::string_view stage, const StageOptions& options) {
  const Context c{config, options, Layout{config.root()}};
  const Plan plan = make_plan(c, stage);

  std::vector<std::pair<std::string, std::string>> digests;
  for (const auto& in : plan.inputs) {
    if (!fs::exists(in)) fail(Errc::missing_dependency, std::string(stage) + ": missing input " + in.string());
    digests.emplace_back(rel(c.layout, in), sha256_file(in));
  }
  std::sort(digests.begin(), digests.end());
  Sha256 h;
  for (const auto& [path, sha] : digests) h.field(path).field(sha);
  const std::string inputs_digest = h.hex();
  const std::string config_digest = sha256_hex(plan.config.dump());

  const fs::path receipt = c.layout.receipt(stage);
  StageOutcome outcome{std::string(stage), false, 0.0};
  if (!options.force && fs::exists(receipt) &&
      std::all_of(plan.outputs.begin(), plan.outputs.end(), [](const fs::path& p) { return fs::exists(p); })) {
    try {
      const auto j = nlohmann::json::parse(detail::read_text(receipt));
      if (j.at("inputs_digest") == inputs_digest && j.at("config_digest") == config_digest) {
        outcome.skipped = true;
        c.log(std::string(stage) + ": up to date, skipped");
        return outcome;
      }
    } catch (const nlohmann::json::exception&) {
      // unreadable receipt: rerun
    }
  }

  fs::remove(receipt);
  const std::string started = now_utc();
  const auto t0 = std::chrono::steady_clock::now();
  plan.run();
  outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ojson j;
  j["stage"] = stage;
  j["inputs_digest"] = inputs_digest;
  j["config_digest"] = config_digest;
  j["config"] = plan.config;
  j["inputs"] = ojson::array();
  for (const auto& [path, sha] : digests) j["inputs"].push_back({{"path", path}, {"sha256", sha}});
  j["outputs"] = ojson::array();
  for (const auto& out : plan.outputs) j["outputs"].push_back(rel(c.layout, out));
  j["jobs"] = options.jobs;
  j["started"] = started;
  j["finished"] = now_utc();
  j["seconds"] = outcome.seconds;
  detail::write_text(receipt, j.dump(2) + "\n");
  c.log(std::string(stage) + ": done in " + num(outcome.seconds, 1) + " s");
  return outcome;
}

std::vector<StageOutcome> run_all(const RunConfig& config, const StageOptions& options) {
  std::vector<StageOutcome> out;
  for (const auto& s : run_all_stages()) out.push_back(run_stage(config, s, options));
  return out;
}

}  // namespace agemap
