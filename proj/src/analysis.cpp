// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "agemap/error.hpp"

namespace agemap {

namespace {

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string cell(const std::optional<double>& v) { return v ? fixed3(*v) : std::string(); }

std::string_view category_name(BmiGroup b) {
  switch (b) {
    case BmiGroup::healthy: return "Healthy";
    case BmiGroup::overweight: return "Overweight";
    case BmiGroup::obese: return "Obese";
  }
  return "";
}

}  // namespace

std::string_view to_string(BiasForm f) { return f == BiasForm::inverse ? "inverse" : "residual"; }

BiasForm parse_bias_form(std::string_view s) {
  if (s == "inverse") return BiasForm::inverse;
  if (s == "residual") return BiasForm::residual;
  fail(Errc::config, "unknown bias form '" + std::string(s) + "' (expected inverse or residual)");
}

double ols_slope(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "ols_slope: need at least two paired values");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(x.size());
  my /= double(y.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx <= 0.0) fail(Errc::invalid_argument, "degenerate fit: zero variance in x");
  return sxy / sxx;
}

BiasModel fit_bias(std::span<const double> age, std::span<const double> raw) {
  require(age.size() == raw.size(), "fit_bias: length mismatch");
  if (age.size() < 3) fail(Errc::invalid_argument, "fit_bias needs at least 3 records");
  BiasModel m;
  m.a = ols_slope(age, raw);
  double ma = 0, mr = 0;
  for (std::size_t i = 0; i < age.size(); ++i) {
    ma += age[i];
    mr += raw[i];
  }
  ma /= double(age.size());
  mr /= double(raw.size());
  m.b = mr - m.a * ma;
  if (!std::isfinite(m.a) || std::abs(m.a) <= 1e-6)
    fail(Errc::numerical, "degenerate fit: bias slope " + std::to_string(m.a) + " is too close to zero");
  return m;
}

BiasModel fit_bias(std::span<const SubjectRecord> records) {
  std::vector<double> age, raw;
  for (const auto& r : records) {
    if (!r.predicted_age)
      fail(Errc::missing_dependency, "subject " + std::to_string(r.id) + " has no predicted_age; run predict first");
    age.push_back(r.age);
    raw.push_back(*r.predicted_age);
  }
  return fit_bias(age, raw);
}

double apply_bias(const BiasModel& model, double raw, BiasForm form, double age) {
  if (form == BiasForm::inverse) return (raw - model.b) / model.a;
  return raw - (model.a * age + model.b) + age;
}

void apply_bias(const BiasModel& model, std::vector<SubjectRecord>& records, BiasForm form) {
  for (auto& r : records)
    if (r.predicted_age) r.corrected_age = apply_bias(model, *r.predicted_age, form, r.age);
}

MetricsTable metrics(std::span<const SubjectRecord> test, std::span<const SubjectRecord> train,
                     const std::map<std::int64_t, double>* extra) {
  std::map<std::pair<Sex, BmiGroup>, std::pair<double, std::size_t>> train_mean;
  for (const auto& r : train) {
    auto& [sum, n] = train_mean[{r.sex, r.bmi_group}];
    sum += r.age;
    ++n;
  }
  struct Acc {
    std::size_t n = 0, n_extra = 0;
    double model = 0, base = 0, extra = 0;
    bool has_base = true;
  };
  const auto accumulate = [&](Acc& a, const SubjectRecord& r) {
    if (!r.corrected_age)
      fail(Errc::missing_dependency, "subject " + std::to_string(r.id) + " has no corrected_age; run bias first");
    ++a.n;
    a.model += std::abs(*r.corrected_age - r.age);
    const auto it = train_mean.find({r.sex, r.bmi_group});
    if (it == train_mean.end() || it->second.second == 0) {
      a.has_base = false;
    } else {
      a.base += std::abs(it->second.first / double(it->second.second) - r.age);
    }
    if (extra) {
      const auto e = extra->find(r.id);
      if (e != extra->end()) {
        ++a.n_extra;
        a.extra += std::abs(e->second - r.age);
      }
    }
  };

  MetricsTable t;
  t.has_extra = extra != nullptr;
  Acc overall;
  const auto row = [&](std::string category, std::string sex, const Acc& a) {
    MetricsRow r{std::move(category), std::move(sex), a.n, {}, {}, {}};
    if (a.n > 0) {
      r.model = a.model / double(a.n);
      if (a.has_base) r.baseline = a.base / double(a.n);
      if (extra && a.n_extra == a.n) r.extra = a.extra / double(a.n);
    }
    return r;
  };
  for (BmiGroup b : kBmiGroups)
    for (Sex s : kSexes) {
      Acc a;
      for (const auto& r : test)
        if (r.sex == s && r.bmi_group == b) {
          accumulate(a, r);
          accumulate(overall, r);
        }
      t.rows.push_back(row(std::string(category_name(b)), std::string(to_string(s)), a));
    }
  t.rows.push_back(row("Overall", "M+F", overall));
  return t;
}

std::string render_text(const MetricsTable& t) {
  std::ostringstream os;
  char line[160];
  if (t.has_extra) {
    std::snprintf(line, sizeof line, "%-11s %-4s %5s %10s %8s %8s\n", "Category", "Sex", "N", "Mean Pred.", "2.5D", "Ours");
  } else {
    std::snprintf(line, sizeof line, "%-11s %-4s %5s %10s %8s\n", "Category", "Sex", "N", "Mean Pred.", "Ours");
  }
  os << line;
  for (const auto& r : t.rows) {
    if (t.has_extra) {
      std::snprintf(line, sizeof line, "%-11s %-4s %5zu %10s %8s %8s\n", r.category.c_str(), r.sex.c_str(), r.count,
                    cell(r.baseline).c_str(), cell(r.extra).c_str(), cell(r.model).c_str());
    } else {
      std::snprintf(line, sizeof line, "%-11s %-4s %5zu %10s %8s\n", r.category.c_str(), r.sex.c_str(), r.count,
                    cell(r.baseline).c_str(), cell(r.model).c_str());
    }
    os << line;
  }
  return os.str();
}

std::string render_csv(const MetricsTable& t) {
  std::ostringstream os;
  os << "category,sex,n,mean_pred_mae" << (t.has_extra ? ",mae_25d" : "") << ",model_mae\n";
  for (const auto& r : t.rows) {
    os << r.category << ',' << r.sex << ',' << r.count << ',' << cell(r.baseline);
    if (t.has_extra) os << ',' << cell(r.extra);
    os << ',' << cell(r.model) << '\n';
  }
  return os.str();
}

std::vector<GapEntry> gap_table(std::span<const SubjectRecord> records, const GapThresholds& t) {
  std::vector<GapEntry> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.predicted_age || !r.corrected_age)
      fail(Errc::missing_dependency,
           "subject " + std::to_string(r.id) + " lacks raw or corrected predictions; run predict and bias first");
    GapEntry e;
    e.id = r.id;
    e.age = r.age;
    e.raw = *r.predicted_age;
    e.corrected = *r.corrected_age;
    e.delta = e.corrected - r.age;
    e.band = gap_band(e.delta, t);
    e.sex = r.sex;
    e.bmi = r.bmi_group;
    out.push_back(e);
  }
  return out;
}

std::string scatter_csv(std::span<const GapEntry> entries) {
  std::ostringstream os;
  os << "id,age,raw,corrected,delta,band,sex,bmi_group\n";
  char buf[64];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& e : entries)
    os << e.id << ',' << e.age << ',' << num(e.raw) << ',' << num(e.corrected) << ',' << num(e.delta) << ','
       << (e.band ? to_string(*e.band) : std::string_view("unassigned")) << ',' << to_string(e.sex) << ','
       << to_string(e.bmi) << '\n';
  return os.str();
}

double masked_mean(const Volume3& map, const Volume3& mask) {
  require(map.dims() == mask.dims(), "masked_mean: dims differ");
  const auto v = map.data();
  const auto m = mask.data();
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (m[i] > 0.5f) {
      s += v[i];
      ++n;
    }
  require(n > 0, "masked_mean: empty mask");
  return s / double(n);
}

double localization_score(const Volume3& map, const GroundTruth& truth) {
  require(map.dims() == truth.aging_mask.dims() && map.dims() == truth.body_mask.dims(),
          "localization_score: dims differ");
  const auto v = map.data();
  const auto aging = truth.aging_mask.data();
  const auto body = truth.body_mask.data();
  double in = 0.0, out = 0.0;
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (aging[i] > 0.5f) {
      in += v[i];
      ++n_in;
    } else if (body[i] > 0.5f) {
      out += v[i];
      ++n_out;
    }
  }
  require(n_in > 0 && n_out > 0, "localization_score: empty mask");
  const double num = in / double(n_in), den = out / double(n_out);
  if (den <= 1e-9) return std::numeric_limits<double>::infinity();
  return num / den;
}

}  // namespace agemap
