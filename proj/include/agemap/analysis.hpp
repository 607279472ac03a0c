// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agemap/atlas.hpp"
#include "agemap/phantom.hpp"

namespace agemap {

/// raw ~ a * age + b, fitted by ordinary least squares.
struct BiasModel {
  double a = 1.0;
  double b = 0.0;
};

enum class BiasForm {
  inverse,   // (raw - b) / a
  residual,  // raw - (a * age + b) + age
};

std::string_view to_string(BiasForm f);
BiasForm parse_bias_form(std::string_view s);

/// Slope of the OLS line of y on x.
double ols_slope(std::span<const double> x, std::span<const double> y);

BiasModel fit_bias(std::span<const double> age, std::span<const double> raw);

/// Uses every record's age and predicted_age.
BiasModel fit_bias(std::span<const SubjectRecord> records);

/// `age` is only read by the residual form.
double apply_bias(const BiasModel& model, double raw, BiasForm form = BiasForm::inverse, double age = 0.0);

/// Sets corrected_age on every record that has a predicted_age.
void apply_bias(const BiasModel& model, std::vector<SubjectRecord>& records, BiasForm form = BiasForm::inverse);

struct MetricsRow {
  std::string category;  // Healthy, Overweight, Obese, Overall
  std::string sex;       // F, M, M+F
  std::size_t count = 0;
  std::optional<double> baseline;  // mean-prediction baseline MAE
  std::optional<double> extra;     // optional comparison model (2.5D)
  std::optional<double> model;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;  // Healthy F/M, Overweight F/M, Obese F/M, Overall
  bool has_extra = false;
};

/// Model MAE from corrected_age; the baseline predicts the mean training age of
/// each sex x BMI cell. `extra` maps subject id to a comparison prediction.
MetricsTable metrics(std::span<const SubjectRecord> test, std::span<const SubjectRecord> train,
                     const std::map<std::int64_t, double>* extra = nullptr);

std::string render_text(const MetricsTable& t);
std::string render_csv(const MetricsTable& t);

struct GapEntry {
  std::int64_t id = 0;
  int age = 0;
  double raw = 0;
  double corrected = 0;
  double delta = 0;
  std::optional<GapBand> band;
  Sex sex = Sex::F;
  BmiGroup bmi = BmiGroup::healthy;
};

/// Requires predicted_age and corrected_age on every record.
std::vector<GapEntry> gap_table(std::span<const SubjectRecord> records, const GapThresholds& t = {});

/// id,age,raw,corrected,delta,band,sex,bmi_group
std::string scatter_csv(std::span<const GapEntry> entries);

/// Mean value inside the aging mask over the mean inside body minus aging.
/// A denominator at or below 1e-9 yields +infinity.
double localization_score(const Volume3& map, const GroundTruth& truth);

/// Mean of `map` over voxels where mask > 0.5.
double masked_mean(const Volume3& map, const Volume3& mask);

}  // namespace agemap
