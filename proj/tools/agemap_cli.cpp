// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

// agemap command-line driver. Talks to the library through the C API only.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "agemap.h"

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string root;
  int jobs = 1;
  bool force = false;
  bool quiet = false;
};

const std::vector<std::pair<std::string, std::string>> kStages = {
    {"phantom", "Generate the synthetic cohort and its manifest"},
    {"train", "Train the 3D age regressor"},
    {"predict", "Predict ages for every subject"},
    {"bias", "Fit the age-bias correction on the validation split"},
    {"cam", "Extract Grad-CAM importance maps for the test split"},
    {"register", "Register test subjects to their group targets"},
    {"atlas", "Average warped images and maps into group atlases"},
    {"report", "Write metrics, scatter, localization and atlas renders"},
    {"baseline25d", "Train and evaluate the 2.5D projection baseline"},
};

const char* const kRunAll[] = {"phantom", "train", "predict", "bias", "cam", "register", "atlas", "report"};

int exit_code(agemap_status s) {
  switch (s) {
    case AGEMAP_OK: return 0;
    case AGEMAP_CONFIG:
    case AGEMAP_INVALID_ARGUMENT: return 2;
    case AGEMAP_MISSING_DEPENDENCY: return 3;
    case AGEMAP_NUMERICAL: return 4;
    default: return 1;
  }
}

int report_error(agemap_status s) {
  std::cerr << "agemap: error: " << agemap_last_error() << "\n";
  return exit_code(s);
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

using ConfigPtr = std::unique_ptr<agemap_config, decltype(&agemap_config_destroy)>;

int build_config(const Options& o, ConfigPtr& out) {
  agemap_config* raw = nullptr;
  agemap_status s = o.config.empty() ? agemap_config_create(&raw) : agemap_config_load(o.config.c_str(), &raw);
  if (s != AGEMAP_OK) return report_error(s);
  out.reset(raw);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "agemap: error: --set expects key=value, got '" << kv << "'\n";
      return 2;
    }
    s = agemap_config_set(raw, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (s != AGEMAP_OK) return report_error(s);
  }
  std::string root = o.root;
  if (root.empty())
    if (const char* env = std::getenv("AGEMAP_ROOT"); env && *env) root = env;
  if (!root.empty()) {
    s = agemap_config_set(raw, "root", json_string(root).c_str());
    if (s != AGEMAP_OK) return report_error(s);
  }
  return 0;
}

std::string output_root(const agemap_config* cfg) {
  char* text = nullptr;
  if (agemap_config_to_json(cfg, &text) != AGEMAP_OK) return {};
  const std::string s = text;
  agemap_string_free(text);
  // "root": "<path>" is a top-level string key of the dumped config.
  const auto key = s.find("\"root\"");
  if (key == std::string::npos) return {};
  const auto q0 = s.find('"', s.find(':', key) + 1);
  std::string out;
  for (auto i = q0 + 1; i < s.size() && s[i] != '"'; ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) ++i;
    out += s[i];
  }
  return out;
}

void print_metrics(const agemap_config* cfg) {
  std::ifstream in(output_root(cfg) + "/reports/metrics.txt");
  if (!in) return;
  std::cout << in.rdbuf();
  std::cout.flush();
}

int run_stages(const Options& o, const std::vector<std::string>& stages) {
  ConfigPtr cfg(nullptr, &agemap_config_destroy);
  if (int rc = build_config(o, cfg)) return rc;
  for (const auto& stage : stages) {
    int skipped = 0;
    const agemap_status s = agemap_run_stage(cfg.get(), stage.c_str(), o.jobs, o.force, !o.quiet, &skipped);
    if (s != AGEMAP_OK) return report_error(s);
    if (stage == "report") print_metrics(cfg.get());
  }
  return 0;
}

void add_common(CLI::App* app, Options& o) {
  app->add_option("-c,--config", o.config, "Run configuration (JSON); defaults are used when omitted")
      ->check(CLI::ExistingFile);
  app->add_option("--set", o.sets, "Override a config field, e.g. --set train.epochs=5 (repeatable)")
      ->type_name("KEY=VALUE");
  app->add_option("--root", o.root, "Output root; overrides AGEMAP_ROOT and the config");
  app->add_option("-j,--jobs", o.jobs, "Worker threads per stage; 1 is bit-exact deterministic")
      ->check(CLI::PositiveNumber);
  app->add_flag("-f,--force", o.force, "Rerun even when the stage receipt is current");
  app->add_flag("-q,--quiet", o.quiet, "Suppress progress output on stderr");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agemap: age regression, importance maps and group atlases on synthetic volumes"};
  app.set_version_flag("--version", agemap_version());
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 success, 2 config error, 3 missing upstream artifact, 4 numerical failure.\n"
      "AGEMAP_ROOT overrides the output root from the config.");

  Options o;
  std::vector<std::string> chosen;
  for (const auto& [name, help] : kStages) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, o);
    sub->callback([&chosen, n = name] { chosen = {n}; });
  }
  CLI::App* all = app.add_subcommand("run-all", "Run phantom, train, predict, bias, cam, register, atlas, report");
  add_common(all, o);
  all->callback([&chosen] { chosen.assign(std::begin(kRunAll), std::end(kRunAll)); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return run_stages(o, chosen);
}
