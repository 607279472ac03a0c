// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run. Prints one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [--report-only]
//
// Pipeline artifacts for seeds 1..3 are kept under DIR (default
// ./acceptance_work) so a rerun skips stages whose receipts are current.
// Exit status is 1 when any criterion fails, unless --report-only is given,
// in which case only a crash or an unfinished run is an error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "agemap/analysis.hpp"
#include "agemap/atlas.hpp"
#include "agemap/checkpoint.hpp"
#include "agemap/gradcam.hpp"
#include "agemap/pipeline.hpp"
#include "agemap/registration.hpp"
#include "agemap/run_config.hpp"
#include "../support/atlas_fixture.hpp"
#include "../support/gradient_suite.hpp"
#include "../support/metrics_fixture.hpp"
#include "../support/registration_cases.hpp"

namespace fs = std::filesystem;
using namespace agemap;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(int n, const std::string& name, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << (ok ? "PASS" : "FAIL") << " " << n << " " << name << ": " << detail << std::endl;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return nlohmann::json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct SeedRun {
  std::uint64_t seed = 0;
  Layout layout;
  nlohmann::json summary;
  double train_seconds = 0;  // phantom through bias, from the receipts
};

SeedRun run_seed(const fs::path& work, std::uint64_t seed) {
  RunConfig c;
  c.set("seed", std::to_string(seed));
  c.set("root", (work / ("seed" + std::to_string(seed))).string());
  StageOptions opt;
  opt.log = [seed](const std::string& line) { std::cerr << "[seed " << seed << "] " << line << std::endl; };
  SeedRun r;
  r.seed = seed;
  r.layout = Layout{c.root()};
  for (const auto& stage : run_all_stages()) run_stage(c, stage, opt);
  for (const char* stage : {"phantom", "train", "predict", "bias"})
    r.train_seconds += read_json(r.layout.receipt(stage)).at("seconds").get<double>();
  r.summary = read_json(r.layout.reports() / "summary.json");
  return r;
}

// 1
void gradients() {
  const auto t0 = Clock::now();
  const auto reports = testing::gradient_suite(20, 1);
  const double secs = seconds_since(t0);
  bool ok = secs < 120.0;
  double worst = 0;
  std::string worst_op;
  for (const auto& [op, rep] : reports) {
    ok = ok && rep.instances >= 20 && rep.max_rel_error < 1e-3;
    if (rep.max_rel_error >= worst) {
      worst = rep.max_rel_error;
      worst_op = op;
    }
  }
  verdict(1, "finite-difference gradients", ok,
          std::to_string(reports.size()) + " ops x 20, worst rel error " + fmt(worst) + " (" + worst_op + "), " +
              fmt(secs, 3) + " s");
}

// 2
void accuracy(const SeedRun& r) {
  const double mae = r.summary.at("test_mae").get<double>();
  const double base = r.summary.at("mean_pred_mae").get<double>();
  const bool ok = mae < 0.5 * base && r.train_seconds < 1800.0;
  verdict(2, "corrected test MAE", ok,
          "MAE " + fmt(mae) + " vs mean-prediction " + fmt(base) + " (limit " + fmt(0.5 * base) + "), " +
              fmt(r.train_seconds, 4) + " s");
}

// 3
void gap_slopes(const std::vector<SeedRun>& runs) {
  bool corrected_ok = true, raw_seen = false;
  std::string detail;
  for (const auto& r : runs) {
    const double raw = r.summary.at("raw_gap_slope").get<double>();
    const double corr = r.summary.at("corrected_gap_slope").get<double>();
    corrected_ok = corrected_ok && std::abs(corr) <= 0.1;
    raw_seen = raw_seen || raw < -0.1;
    detail += "seed " + std::to_string(r.seed) + " raw " + fmt(raw) + " corrected " + fmt(corr) + "; ";
  }
  verdict(3, "age-gap slopes", corrected_ok && raw_seen, detail);
}

// 4
void registration() {
  const Volume3 f = testing::registration_fixture();
  const RegConfig rc;
  const AffineResult self = affine_register(f, f, rc);
  const double zero[3] = {0, 0, 0};
  const double lin = testing::max_abs_linear_error(self.transform);
  const double tr = testing::max_abs_translation(self.transform, zero);

  const Volume3 moved = warp(f, AffineTransform::translation(-2, 0, 0));
  const AffineResult shift = affine_register(f, moved, rc);
  const double expect[3] = {2, 0, 0};
  const double shift_err = testing::max_abs_translation(shift.transform, expect);

  const Volume3 smooth = gaussian_smooth(f, 1.0);
  const DisplacementField planted = testing::sinusoidal_field(smooth.dims(), 1.5);
  const Volume3 bent = warp(smooth, AffineTransform::identity(), &planted);
  const DeformableResult def = deformable_register(smooth, bent, rc);
  const Volume3 back = warp(bent, AffineTransform::identity(), &def.field);
  const double before = similarity(smooth, bent, Similarity::ssd);
  const double after = similarity(smooth, back, Similarity::ssd);

  const bool mono = testing::monotone_best(self.trace) && testing::monotone_best(shift.trace) &&
                    testing::monotone_best(def.trace);
  const bool ok = lin < 0.01 && tr < 0.1 && shift_err < 0.25 && after < 0.5 * before && mono;
  verdict(4, "registration", ok,
          "self |L-I| " + fmt(lin) + " |t| " + fmt(tr) + ", shift error " + fmt(shift_err) + ", ssd " + fmt(before) +
              " -> " + fmt(after) + ", monotone " + (mono ? "yes" : "no"));
}

// 5
void cam_invariants(const SeedRun& r) {
  AgeNet net = load_checkpoint(r.layout.checkpoint());
  const Manifest test = split_filter(read_manifest(r.layout.manifest()), Split::test);
  bool nonneg = true, peak = true, bias = true, zero = true;
  double scale_err = 0;
  const std::size_t n = std::min<std::size_t>(6, test.records.size());
  for (std::size_t i = 0; i < n; ++i) {
    const Volume3 img = read_vol(test.base_dir / test.records[i].image_path);
    AgeNet probe = net;
    const Volume3 a = extract_cam(probe, img);
    const auto d = a.data();
    nonneg = nonneg && *std::min_element(d.begin(), d.end()) >= 0.0f;
    peak = peak && *std::max_element(d.begin(), d.end()) == 1.0f;

    probe.param("fc2.bias").value[0] += 12.5f;
    bias = bias && extract_cam(probe, img) == a;

    probe = net;
    for (float& w : probe.param("fc2.weight").value) w *= 2.75f;
    const Volume3 b = extract_cam(probe, img);
    for (std::size_t k = 0; k < a.size(); ++k) scale_err = std::max(scale_err, double(std::abs(a.data()[k] - b.data()[k])));

    probe = net;
    for (float& w : probe.param("fc2.weight").value) w = 0.0f;
    for (bool normalize : {true, false}) {
      const Volume3 z = extract_cam(probe, img, CamOptions{normalize});
      zero = zero && std::all_of(z.data().begin(), z.data().end(), [](float v) { return v == 0.0f; });
    }
  }
  const bool ok = nonneg && peak && bias && scale_err < 1e-5 && zero;
  verdict(5, "CAM invariants", ok,
          std::to_string(n) + " test subjects, nonneg " + (nonneg ? "yes" : "no") + ", max 1 " + (peak ? "yes" : "no") +
              ", bias-shift exact " + (bias ? "yes" : "no") + ", scale error " + fmt(scale_err) + ", constant head zero " +
              (zero ? "yes" : "no"));
}

// 6
void localization(const SeedRun& r) {
  std::ifstream in(r.layout.reports() / "localization.csv");
  std::string line;
  std::getline(in, line);
  int groups = 0;
  bool ok = true;
  double worst = INFINITY, worst_frac = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream s(line);
    for (std::string c; std::getline(s, c, ',');) cells.push_back(c);
    if (cells.size() < 5 || cells[0].find('-') == std::string::npos) continue;
    ++groups;
    const double score = std::stod(cells[3]), frac = std::stod(cells[4]);
    worst = std::min(worst, score);
    worst_frac = std::max(worst_frac, frac);
    ok = ok && score >= 3.0 && frac < 0.1;
  }
  ok = ok && groups == 6;
  verdict(6, "sex x BMI localization", ok,
          std::to_string(groups) + " atlases, min score " + fmt(worst) + ", max aging fraction " + fmt(worst_frac));
}

// 7
void spine_trend(const std::vector<SeedRun>& runs) {
  int inversions = 0;
  std::string detail;
  for (const auto& r : runs) {
    const auto& b = r.summary.at("age_band_spine");
    const double v[3] = {b.at("age_lt60").get<double>(), b.at("age_60to70").get<double>(),
                         b.at("age_ge70").get<double>()};
    inversions += (v[1] < v[0]) + (v[2] < v[1]);
    detail += "seed " + std::to_string(r.seed) + " " + fmt(v[0]) + "/" + fmt(v[1]) + "/" + fmt(v[2]) + "; ";
  }
  verdict(7, "spine importance by age band", inversions <= 1, detail + std::to_string(inversions) + " inversions");
}

// 8
void atlas_identity(const fs::path& work) {
  const fs::path dir = work / "identity";
  fs::remove_all(dir);
  PhantomParams p;
  p.nuisance = false;
  const Phantom s = generate_subject(p, 7, 63, Sex::M, BmiGroup::healthy);
  const Volume3 cam = gaussian_smooth(s.truth.aging_mask, 1.0);
  const Manifest same = testing::write_group(dir / "same", {s.image, s.image, s.image}, {cam, cam, cam});
  const ImportanceAtlas a = build_group(same, same.records, "same", RegConfig{}, dir / "same" / "transforms");
  double worst = 0;
  for (std::size_t i = 0; i < cam.size(); ++i) {
    worst = std::max(worst, double(std::abs(a.mean_image.data()[i] - s.image.data()[i])));
    worst = std::max(worst, double(std::abs(a.mean_cam.data()[i] - cam.data()[i])));
  }

  const Phantom o = generate_subject(p, 8, 71, Sex::M, BmiGroup::healthy);
  const Volume3 ocam = gaussian_smooth(o.truth.aging_mask, 1.0);
  const Manifest pair = testing::write_group(dir / "pair", {s.image, o.image}, {cam, ocam});
  FrameRegistration frame;
  frame.key = "pair";
  frame.target_id = pair.records.front().id;
  for (const auto& r : pair.records) frame.members.push_back({r.id, true, "", AffineTransform::identity(), {}});
  const ImportanceAtlas m = aggregate(pair, pair.records, "pair", frame);
  bool exact = true;
  for (std::size_t i = 0; i < cam.size(); ++i) {
    exact = exact && m.mean_image.data()[i] == float((double(s.image.data()[i]) + o.image.data()[i]) / 2);
    exact = exact && m.mean_cam.data()[i] == float((double(cam.data()[i]) + ocam.data()[i]) / 2);
  }
  verdict(8, "atlas identities", worst < 1e-3 && exact && a.n_contributors() == 3,
          "3 identical members max error " + fmt(worst) + ", identity pair exact mean " + (exact ? "yes" : "no"));
}

// 9
void table_render() {
  const std::string text = render_text(testing::reference_table());
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  bool ok = line.find("Mean Pred.") != std::string::npos && line.find("2.5D") != std::string::npos;
  int rows = 0;
  for (const auto& r : testing::reference_rows()) {
    if (!std::getline(in, line)) {
      ok = false;
      break;
    }
    std::istringstream cells(line);
    std::string cat, sex, n, mp, planar, ours;
    cells >> cat >> sex >> n >> mp >> planar >> ours;
    char buf[3][16];
    std::snprintf(buf[0], 16, "%.3f", r.mean_pred);
    std::snprintf(buf[1], 16, "%.3f", r.planar);
    std::snprintf(buf[2], 16, "%.3f", r.ours);
    ok = ok && cat == r.category && sex == r.sex && mp == buf[0] && planar == buf[1] && ours == buf[2];
    ++rows;
  }
  ok = ok && !std::getline(in, line);
  verdict(9, "metrics table renderer", ok, std::to_string(rows) + " rows checked");
}

// 10
std::map<std::string, std::string> determinism_outputs(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const char* f : {"metrics.csv", "metrics.txt"}) files[std::string("reports/") + f] = slurp(root / "reports" / f);
  for (const auto& e : fs::recursive_directory_iterator(root / "atlases"))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  return files;
}

void determinism(const fs::path& work) {
  const fs::path root = work / "determinism";
  const std::string cmd = std::string("\"") + AGEMAP_CLI_PATH +
                          "\" run-all --jobs 1 --quiet --root \"" + root.string() +
                          "\" --set cohort.n_train=12 --set cohort.n_val=6 --set cohort.n_test=12"
                          " --set phantom.dims=[24,48,18] --set train.epochs=2 --set reg.levels=2"
                          " --set reg.affine_iterations=30 --set reg.deformable_iterations=30 > \"" +
                          (work / "determinism.log").string() + "\" 2>&1";
  std::map<std::string, std::string> runs[2];
  int status[2] = {0, 0};
  for (int k = 0; k < 2; ++k) {
    fs::remove_all(root);
    status[k] = std::system(cmd.c_str());
    if (status[k] == 0) runs[k] = determinism_outputs(root);
  }
  std::size_t differing = 0;
  for (const auto& [path, bytes] : runs[0]) {
    const auto it = runs[1].find(path);
    differing += it == runs[1].end() || it->second != bytes;
  }
  const bool ok = status[0] == 0 && status[1] == 0 && !runs[0].empty() && runs[0].size() == runs[1].size() &&
                  differing == 0;
  verdict(10, "run-all determinism", ok,
          std::to_string(runs[0].size()) + " files compared, " + std::to_string(differing) + " differ, exit " +
              std::to_string(status[0]) + "/" + std::to_string(status[1]));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  bool report_only = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--report-only") {
      report_only = true;
    } else if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--work DIR] [--report-only]\n";
      return 2;
    }
  }
  fs::create_directories(work);
  work = fs::absolute(work);

  try {
    gradients();
    std::vector<SeedRun> runs;
    for (std::uint64_t seed : {1, 2, 3}) runs.push_back(run_seed(work, seed));
    accuracy(runs.front());
    gap_slopes(runs);
    registration();
    cam_invariants(runs.front());
    localization(runs.front());
    spine_trend(runs);
    atlas_identity(work);
    table_render();
    determinism(work);
  } catch (const std::exception& e) {
    std::cout << "ERROR: acceptance run aborted: " << e.what() << std::endl;
    return 2;
  }
  std::cout << (10 - failures) << "/10 criteria passed" << std::endl;
  return failures == 0 || report_only ? 0 : 1;
}
