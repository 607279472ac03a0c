// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/run_config.hpp"

#include "agemap/error.hpp"
#include "binary_io.hpp"

namespace agemap {

namespace {

using nlohmann::json;

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return !(a.is_number_integer() && b.is_number_float());
  return a.type() == b.type();
}

std::string kind_name(const json& j) {
  if (j.is_number_integer()) return "an integer";
  if (j.is_number()) return "a number";
  if (j.is_boolean()) return "a boolean";
  if (j.is_string()) return "a string";
  if (j.is_array()) return "an array";
  if (j.is_object()) return "an object";
  return "null";
}

// Overlays `src` onto `dst`, rejecting keys absent from `dst` and values whose
// JSON kind differs from the default.
void merge(json& dst, const json& src, const std::string& path) {
  if (!src.is_object()) fail(Errc::config, (path.empty() ? "config" : path) + ": expected an object");
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!dst.contains(it.key())) fail(Errc::config, "unknown config key '" + key + "'");
    json& slot = dst[it.key()];
    if (slot.is_object()) {
      merge(slot, it.value(), key);
    } else if (!same_kind(slot, it.value())) {
      fail(Errc::config, "config key '" + key + "' must be " + kind_name(slot) + ", got " + kind_name(it.value()));
    } else if (slot.is_array() && slot.size() != it.value().size()) {
      fail(Errc::config, "config key '" + key + "' must hold " + std::to_string(slot.size()) + " values");
    } else {
      slot = it.value();
    }
  }
}

template <class T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    fail(Errc::config, std::string("config key '") + section + "." + key + "': " + e.what());
  }
}

void check(bool ok, const std::string& what) {
  if (!ok) fail(Errc::config, what);
}

}  // namespace

json RunConfig::defaults() {
  const PhantomParams p;
  const NetConfig n;
  const TrainConfig t;
  const RegConfig r;
  const GapThresholds g;
  json j = json::object();
  j["seed"] = p.seed;
  j["root"] = "agemap_out";
  j["phantom"] = {{"dims", {p.dims.nx, p.dims.ny, p.dims.nz}},
                  {"spacing", {p.spacing.sx, p.spacing.sy, p.spacing.sz}},
                  {"noise_sigma", p.noise_sigma},
                  {"gain", {p.gain_lo, p.gain_hi}},
                  {"max_shift", p.max_shift},
                  {"axis_jitter", p.axis_jitter},
                  {"nuisance", p.nuisance}};
  j["cohort"] = {{"n_train", 240}, {"n_val", 60}, {"n_test", 120}};
  j["net"] = {{"channels", {n.channels[0], n.channels[1], n.channels[2]}}, {"hidden", n.hidden}};
  j["train"] = {{"epochs", t.epochs},     {"lr", t.lr},         {"accumulation", t.accumulation},
                {"batch_size", t.batch_size}, {"patience", t.patience}, {"factor", t.factor},
                {"beta1", t.beta1},       {"beta2", t.beta2},   {"eps", t.eps}};
  j["cam"] = {{"normalize", true}};
  j["reg"] = {{"similarity", std::string(to_string(r.similarity))},
              {"levels", r.levels},
              {"affine_iterations", r.affine_iterations},
              {"deformable_iterations", r.deformable_iterations},
              {"affine_lr", r.affine_lr},
              {"deformable_lr", r.deformable_lr},
              {"lambda", r.lambda},
              {"field_sigma", r.field_sigma},
              {"tolerance", r.tolerance},
              {"tolerance_window", r.tolerance_window},
              {"trace", false}};
  j["atlas"] = {{"min_success", 0.8}};
  j["analysis"] = {{"aligned", g.aligned}, {"accelerated", g.accelerated}, {"bias_form", "inverse"}};
  j["baseline25d"] = {{"epochs", t.epochs}};
  return j;
}

RunConfig::RunConfig() : json_(defaults()) {}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  merge(c.json_, j, "");
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::config, "config file not found: " + path.string());
  json j;
  try {
    j = json::parse(detail::read_text(path));
  } catch (const json::parse_error& e) {
    fail(Errc::config, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RunConfig::set(std::string_view key, std::string_view value) {
  if (key.empty()) fail(Errc::config, "--set needs key=value");
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = std::string(value);
  }
  json patch = parsed;
  std::string k(key);
  for (std::size_t dot = k.rfind('.'); dot != std::string::npos; dot = k.rfind('.')) {
    patch = json{{k.substr(dot + 1), patch}};
    k.resize(dot);
  }
  patch = json{{k, patch}};
  json next = json_;
  merge(next, patch, "");
  std::swap(json_, next);
  try {
    validate();
  } catch (...) {
    std::swap(json_, next);
    throw;
  }
}

const json& RunConfig::section(std::string_view name) const {
  const auto it = json_.find(std::string(name));
  if (it == json_.end()) fail(Errc::config, "no config section '" + std::string(name) + "'");
  return *it;
}

std::uint64_t RunConfig::seed() const { return json_.at("seed").get<std::uint64_t>(); }

std::filesystem::path RunConfig::root() const { return json_.at("root").get<std::string>(); }

PhantomParams RunConfig::phantom() const {
  PhantomParams p;
  const auto d = get<std::vector<std::size_t>>(json_, "phantom", "dims");
  p.dims = {d[0], d[1], d[2]};
  const auto s = get<std::vector<double>>(json_, "phantom", "spacing");
  p.spacing = {s[0], s[1], s[2]};
  p.noise_sigma = get<double>(json_, "phantom", "noise_sigma");
  const auto g = get<std::vector<double>>(json_, "phantom", "gain");
  p.gain_lo = g[0];
  p.gain_hi = g[1];
  p.max_shift = get<int>(json_, "phantom", "max_shift");
  p.axis_jitter = get<double>(json_, "phantom", "axis_jitter");
  p.nuisance = get<bool>(json_, "phantom", "nuisance");
  p.seed = seed();
  return p;
}

CohortSizes RunConfig::cohort() const {
  return {get<int>(json_, "cohort", "n_train"), get<int>(json_, "cohort", "n_val"), get<int>(json_, "cohort", "n_test")};
}

NetConfig RunConfig::net() const {
  NetConfig n;
  const auto ch = get<std::vector<std::size_t>>(json_, "net", "channels");
  n.channels = {ch[0], ch[1], ch[2]};
  n.hidden = get<std::size_t>(json_, "net", "hidden");
  n.input = phantom().dims;
  n.seed = seed() + 1;
  return n;
}

TrainConfig RunConfig::train(int jobs) const {
  TrainConfig t;
  t.epochs = get<int>(json_, "train", "epochs");
  t.lr = get<double>(json_, "train", "lr");
  t.accumulation = get<int>(json_, "train", "accumulation");
  t.batch_size = get<int>(json_, "train", "batch_size");
  t.patience = get<int>(json_, "train", "patience");
  t.factor = get<double>(json_, "train", "factor");
  t.beta1 = get<double>(json_, "train", "beta1");
  t.beta2 = get<double>(json_, "train", "beta2");
  t.eps = get<double>(json_, "train", "eps");
  t.seed = seed() + 2;
  t.jobs = jobs;
  return t;
}

CamOptions RunConfig::cam() const { return {get<bool>(json_, "cam", "normalize")}; }

RegConfig RunConfig::reg() const {
  RegConfig r;
  r.similarity = parse_similarity(get<std::string>(json_, "reg", "similarity"));
  r.levels = get<int>(json_, "reg", "levels");
  r.affine_iterations = get<int>(json_, "reg", "affine_iterations");
  r.deformable_iterations = get<int>(json_, "reg", "deformable_iterations");
  r.affine_lr = get<double>(json_, "reg", "affine_lr");
  r.deformable_lr = get<double>(json_, "reg", "deformable_lr");
  r.lambda = get<double>(json_, "reg", "lambda");
  r.field_sigma = get<double>(json_, "reg", "field_sigma");
  r.tolerance = get<double>(json_, "reg", "tolerance");
  r.tolerance_window = get<int>(json_, "reg", "tolerance_window");
  return r;
}

double RunConfig::atlas_min_success() const { return get<double>(json_, "atlas", "min_success"); }

GapThresholds RunConfig::thresholds() const {
  return {get<double>(json_, "analysis", "aligned"), get<double>(json_, "analysis", "accelerated")};
}

BiasForm RunConfig::bias_form() const { return parse_bias_form(get<std::string>(json_, "analysis", "bias_form")); }

int RunConfig::baseline25d_epochs() const { return get<int>(json_, "baseline25d", "epochs"); }

void RunConfig::validate() const {
  const auto wrap = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (e.code() == Errc::config) throw;
      fail(Errc::config, e.what());
    }
  };
  check(!root().empty(), "config key 'root' must not be empty");
  wrap([&] { phantom().validate(); });
  const CohortSizes c = cohort();
  for (int n : {c.n_train, c.n_val, c.n_test})
    check(n > 0 && n % 6 == 0, "cohort sizes must be positive multiples of 6 (one share per sex x BMI cell)");
  wrap([&] { net().validate(); });
  wrap([&] { train(1).validate(); });
  wrap([&] { reg().validate(); });
  const double ms = atlas_min_success();
  check(ms > 0.0 && ms <= 1.0, "config key 'atlas.min_success' must lie in (0, 1]");
  thresholds().validate();
  bias_form();
  check(baseline25d_epochs() >= 1, "config key 'baseline25d.epochs' must be >= 1");
}

}  // namespace agemap
