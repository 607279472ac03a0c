// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "agemap/agenet.hpp"
#include "agemap/analysis.hpp"
#include "agemap/atlas.hpp"
#include "agemap/gradcam.hpp"
#include "agemap/phantom.hpp"
#include "agemap/registration.hpp"
#include "agemap/trainer.hpp"

namespace agemap {

struct CohortSizes {
  int n_train = 240;
  int n_val = 60;
  int n_test = 120;
};

/// Declarative pipeline configuration. The JSON form is nested by module
/// ("phantom", "cohort", "net", "train", "cam", "reg", "atlas", "analysis",
/// "baseline25d"); every key must already exist in the defaults.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_json(const nlohmann::json& j);

  /// Dotted key, e.g. "train.epochs". The value is parsed as JSON when possible
  /// and otherwise taken as a string.
  void set(std::string_view key, std::string_view value);

  const nlohmann::json& as_json() const { return json_; }
  std::string dump() const { return json_.dump(2); }

  /// The sub-object (or value) at a top-level key.
  const nlohmann::json& section(std::string_view name) const;

  std::uint64_t seed() const;
  std::filesystem::path root() const;
  PhantomParams phantom() const;
  CohortSizes cohort() const;
  NetConfig net() const;
  TrainConfig train(int jobs) const;
  CamOptions cam() const;
  RegConfig reg() const;
  double atlas_min_success() const;
  GapThresholds thresholds() const;
  BiasForm bias_form() const;
  int baseline25d_epochs() const;

  static nlohmann::json defaults();

 private:
  void validate() const;
  nlohmann::json json_;
};

}  // namespace agemap
