// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "agemap/error.hpp"
#include "binary_io.hpp"

namespace agemap {

namespace {

// Pyramid level l of L (0 = coarsest) subsamples by 2^(L-1-l).
Dims level_dims(Dims d, int factor) {
  const auto shrink = [&](std::size_t n) {
    const std::size_t m = (n + static_cast<std::size_t>(factor) - 1) / static_cast<std::size_t>(factor);
    return std::max(m, std::min<std::size_t>(n, 2));
  };
  return {shrink(d.nx), shrink(d.ny), shrink(d.nz)};
}

Volume3 level_image(const Volume3& v, int factor) {
  if (factor == 1) return v;
  return resample(gaussian_smooth(v, 0.5 * factor), level_dims(v.dims(), factor));
}

struct Sampled {
  std::vector<float> values;
  std::vector<std::array<float, 3>> grads;
  Volume3 volume(Dims d) const { return Volume3(d, Spacing{}, values); }
};

// Samples `v` at map(x) for every voxel x of a grid with dims `out`.
template <class Map>
Sampled sample_mapped(const Volume3& v, Dims out, Map&& map, bool with_gradient) {
  Sampled s;
  s.values.resize(out.count());
  if (with_gradient) s.grads.resize(out.count());
  std::size_t i = 0;
  for (std::size_t z = 0; z < out.nz; ++z)
    for (std::size_t y = 0; y < out.ny; ++y)
      for (std::size_t x = 0; x < out.nx; ++x, ++i) {
        const GridPoint p = map(x, y, z, i);
        if (with_gradient) {
          const SampleGradient g = trilinear_sample_gradient(v, p);
          s.values[i] = g.value;
          s.grads[i] = g.grad;
        } else {
          s.values[i] = trilinear_sample(v, p);
        }
      }
  return s;
}

Sampled sample_affine(const Volume3& v, const AffineTransform& a, Dims out, const DisplacementField* field,
                      bool with_gradient) {
  return sample_mapped(
      v, out,
      [&](std::size_t x, std::size_t y, std::size_t z, std::size_t i) {
        GridPoint p = a.apply({double(x), double(y), double(z)});
        if (field) {
          const auto u = field->at(i);
          p.x += u[0];
          p.y += u[1];
          p.z += u[2];
        }
        return p;
      },
      with_gradient);
}

void check_finite(double loss, const char* stage, int level, int iteration) {
  if (!std::isfinite(loss))
    fail(Errc::numerical, std::string(stage) + " registration: non-finite loss at level " + std::to_string(level) +
                              ", iteration " + std::to_string(iteration));
}

// Loss evaluation that reports degenerate inputs as numerical failures with context.
double guarded_gradient(const Volume3& f, const Volume3& m, Similarity kind, std::vector<double>& g, const char* stage,
                        int level, int iteration) {
  try {
    const double loss = similarity_gradient(f, m, kind, g);
    check_finite(loss, stage, level, iteration);
    return loss;
  } catch (const Error& e) {
    if (e.code() != Errc::invalid_argument) throw;
    fail(Errc::numerical, std::string(stage) + " registration at level " + std::to_string(level) + ", iteration " +
                              std::to_string(iteration) + ": " + e.what());
  }
}

bool converged(const std::vector<double>& history, const RegConfig& c) {
  const std::size_t w = static_cast<std::size_t>(c.tolerance_window);
  if (history.size() <= w) return false;
  const double now = history.back(), then = history[history.size() - 1 - w];
  return std::abs(then - now) <= c.tolerance * std::max(std::abs(then), 1e-12);
}

// Normalized affine parameters: target cell centers map to p in (-1, 1),
// source = L p + t in the same normalized frame.
AffineTransform to_voxel(const std::array<double, 12>& theta, Dims d) {
  const double s[3] = {d.nx / 2.0, d.ny / 2.0, d.nz / 2.0};
  const double c[3] = {s[0] - 0.5, s[1] - 0.5, s[2] - 0.5};
  AffineTransform a;
  for (int r = 0; r < 3; ++r) {
    double shift = s[r] * theta[4 * r + 3] + c[r];
    for (int k = 0; k < 3; ++k) {
      const double l = s[r] * theta[4 * r + k] / s[k];
      a.m[4 * r + k] = l;
      shift -= l * c[k];
    }
    a.m[4 * r + 3] = shift;
  }
  return a;
}

// Regularizer lambda * mean ||grad u||^2 and, when `grad` is non-null, N times its
// gradient added into grad (interleaved like the field).
double diffusion(const DisplacementField& u, double lambda, std::vector<double>* grad) {
  const Dims d = u.dims();
  const auto data = u.data();
  double acc = 0.0;
  std::size_t i = 0;
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x, ++i) {
        const bool has[3] = {x + 1 < d.nx, y + 1 < d.ny, z + 1 < d.nz};
        const std::size_t step[3] = {1, d.nx, d.nx * d.ny};
        for (int a = 0; a < 3; ++a) {
          if (!has[a]) continue;
          const std::size_t n = i + step[a];
          for (int c = 0; c < 3; ++c) {
            const double diff = double(data[3 * n + c]) - double(data[3 * i + c]);
            acc += diff * diff;
            if (grad) {
              (*grad)[3 * n + c] += 2.0 * lambda * diff;
              (*grad)[3 * i + c] -= 2.0 * lambda * diff;
            }
          }
        }
      }
  return lambda * acc / double(d.count());
}

DisplacementField upsample_field(const DisplacementField& u, Dims out) {
  if (u.dims() == out) return u;
  const Dims in = u.dims();
  const double ratio[3] = {double(out.nx) / double(in.nx), double(out.ny) / double(in.ny),
                           double(out.nz) / double(in.nz)};
  Volume3 comps[3];
  for (int a = 0; a < 3; ++a) {
    comps[a] = resample(u.component(a), out);
    for (float& v : comps[a].data()) v = static_cast<float>(v * ratio[a]);
  }
  return DisplacementField::from_components(comps[0], comps[1], comps[2]);
}

DisplacementField smooth_field(const DisplacementField& u, double sigma) {
  if (sigma <= 0.0) return u;
  return DisplacementField::from_components(gaussian_smooth(u.component(0), sigma),
                                            gaussian_smooth(u.component(1), sigma),
                                            gaussian_smooth(u.component(2), sigma));
}

double deformable_loss(const Volume3& fixed, const Volume3& moving, const DisplacementField& u, const RegConfig& c) {
  const Sampled s = sample_affine(moving, AffineTransform::identity(), fixed.dims(), &u, false);
  return similarity(fixed, s.volume(fixed.dims()), c.similarity) + diffusion(u, c.lambda, nullptr);
}

}  // namespace

AffineTransform AffineTransform::translation(double tx, double ty, double tz) {
  AffineTransform a;
  a.m[3] = tx;
  a.m[7] = ty;
  a.m[11] = tz;
  return a;
}

AffineTransform AffineTransform::scaling_about_center(double s, Dims dims) {
  AffineTransform a;
  for (int r = 0; r < 3; ++r) {
    const double c = (double(dims[r]) - 1.0) / 2.0;
    a.m[4 * r + r] = s;
    a.m[4 * r + 3] = c * (1.0 - s);
  }
  return a;
}

double AffineTransform::determinant() const {
  return L(0, 0) * (L(1, 1) * L(2, 2) - L(1, 2) * L(2, 1)) - L(0, 1) * (L(1, 0) * L(2, 2) - L(1, 2) * L(2, 0)) +
         L(0, 2) * (L(1, 0) * L(2, 1) - L(1, 1) * L(2, 0));
}

GridPoint AffineTransform::apply(GridPoint p) const {
  return {L(0, 0) * p.x + L(0, 1) * p.y + L(0, 2) * p.z + t(0), L(1, 0) * p.x + L(1, 1) * p.y + L(1, 2) * p.z + t(1),
          L(2, 0) * p.x + L(2, 1) * p.y + L(2, 2) * p.z + t(2)};
}

bool AffineTransform::finite() const {
  return std::all_of(m.begin(), m.end(), [](double v) { return std::isfinite(v); });
}

std::string_view to_string(Similarity s) { return s == Similarity::ncc ? "ncc" : "ssd"; }

Similarity parse_similarity(std::string_view s) {
  if (s == "ncc" || s == "NCC") return Similarity::ncc;
  if (s == "ssd" || s == "SSD") return Similarity::ssd;
  fail(Errc::config, "unknown similarity '" + std::string(s) + "' (expected ncc or ssd)");
}

void RegConfig::validate() const {
  const auto check = [](bool ok, const char* what) {
    if (!ok) fail(Errc::config, what);
  };
  check(levels >= 1 && levels <= 6, "reg.levels must lie in [1, 6]");
  check(affine_iterations >= 0, "reg.affine_iterations must be >= 0");
  check(deformable_iterations >= 0, "reg.deformable_iterations must be >= 0");
  check(affine_lr > 0 && std::isfinite(affine_lr), "reg.affine_lr must be positive");
  check(deformable_lr > 0 && std::isfinite(deformable_lr), "reg.deformable_lr must be positive");
  check(lambda >= 0 && std::isfinite(lambda), "reg.lambda must be >= 0");
  check(field_sigma >= 0 && std::isfinite(field_sigma), "reg.field_sigma must be >= 0");
  check(tolerance >= 0, "reg.tolerance must be >= 0");
  check(tolerance_window >= 1, "reg.tolerance_window must be >= 1");
}

double similarity(const Volume3& fixed, const Volume3& moving, Similarity kind) {
  std::vector<double> unused;
  return similarity_gradient(fixed, moving, kind, unused);
}

double similarity_gradient(const Volume3& fixed, const Volume3& moving, Similarity kind, std::vector<double>& grad) {
  require(fixed.dims() == moving.dims(), "similarity: dims differ");
  const auto f = fixed.data();
  const auto m = moving.data();
  const std::size_t n = f.size();
  grad.assign(n, 0.0);
  if (kind == Similarity::ssd) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = double(m[i]) - double(f[i]);
      acc += d * d;
      grad[i] = 2.0 * d / double(n);
    }
    return acc / double(n);
  }
  double fm = 0.0, mm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    fm += f[i];
    mm += m[i];
  }
  fm /= double(n);
  mm /= double(n);
  double sff = 0.0, smm = 0.0, sfm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = f[i] - fm, b = m[i] - mm;
    sff += a * a;
    smm += b * b;
    sfm += a * b;
  }
  if (sff <= 1e-12 || smm <= 1e-12) fail(Errc::invalid_argument, "NCC: degenerate input (constant volume)");
  const double denom = std::sqrt(sff * smm);
  const double rho = sfm / denom;
  for (std::size_t i = 0; i < n; ++i) grad[i] = -((f[i] - fm) / denom - rho * (m[i] - mm) / smm);
  return 1.0 - rho;
}

AffineResult affine_register(const Volume3& fixed, const Volume3& moving, const RegConfig& config) {
  config.validate();
  require(fixed.dims() == moving.dims(), "affine_register: fixed and moving dims differ");
  const Dims full = fixed.dims();
  std::array<double, 12> theta{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};

  AffineResult result;
  const auto full_loss = [&](const AffineTransform& a) {
    return similarity(fixed, sample_affine(moving, a, full, nullptr, false).volume(full), config.similarity);
  };
  result.transform = to_voxel(theta, full);
  result.initial_loss = full_loss(result.transform);
  check_finite(result.initial_loss, "affine", 0, 0);
  result.final_loss = result.initial_loss;

  std::vector<double> grad;
  for (int level = 0; level < config.levels; ++level) {
    const int factor = 1 << (config.levels - 1 - level);
    const Volume3 f = level_image(fixed, factor);
    const Volume3 m = level_image(moving, factor);
    const Dims d = f.dims();
    const double s[3] = {d.nx / 2.0, d.ny / 2.0, d.nz / 2.0};
    const double lr = config.affine_lr / double(1 << level);

    std::array<double, 12> mom{}, vel{};
    std::array<double, 12> level_best = theta;
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> losses;
    for (int it = 0; it <= config.affine_iterations; ++it) {
      const AffineTransform a = to_voxel(theta, d);
      const Sampled smp = sample_affine(m, a, d, nullptr, true);
      const double loss = guarded_gradient(f, smp.volume(d), config.similarity, grad, "affine", level, it);
      if (loss < best && a.determinant() > 0.0) {
        best = loss;
        level_best = theta;
      }
      result.trace.push_back({level, it, loss, best});
      losses.push_back(loss);
      if (it == config.affine_iterations || converged(losses, config)) break;

      std::array<double, 12> g{};
      std::size_t i = 0;
      for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
          for (std::size_t x = 0; x < d.nx; ++x, ++i) {
            if (grad[i] == 0.0) continue;
            const double p[3] = {2.0 * (x + 0.5) / double(d.nx) - 1.0, 2.0 * (y + 0.5) / double(d.ny) - 1.0,
                                 2.0 * (z + 0.5) / double(d.nz) - 1.0};
            for (int r = 0; r < 3; ++r) {
              const double w = grad[i] * smp.grads[i][r] * s[r];
              g[4 * r + 0] += w * p[0];
              g[4 * r + 1] += w * p[1];
              g[4 * r + 2] += w * p[2];
              g[4 * r + 3] += w;
            }
          }
      const double t = it + 1;
      for (int k = 0; k < 12; ++k) {
        mom[k] = 0.9 * mom[k] + 0.1 * g[k];
        vel[k] = 0.999 * vel[k] + 0.001 * g[k] * g[k];
        const double mh = mom[k] / (1.0 - std::pow(0.9, t)), vh = vel[k] / (1.0 - std::pow(0.999, t));
        theta[k] -= lr * mh / (std::sqrt(vh) + 1e-8);
      }
      for (double v : theta) check_finite(v, "affine", level, it);
    }
    theta = level_best;
    const AffineTransform candidate = to_voxel(theta, full);
    const double loss = factor == 1 ? best : full_loss(candidate);
    if (loss < result.final_loss && candidate.determinant() > 0.0) {
      result.final_loss = loss;
      result.transform = candidate;
    }
  }
  return result;
}

DeformableResult deformable_register(const Volume3& fixed, const Volume3& moving, const RegConfig& config) {
  config.validate();
  require(fixed.dims() == moving.dims(), "deformable_register: fixed and moving dims differ");
  const Dims full = fixed.dims();

  DeformableResult result;
  result.field = DisplacementField(full, fixed.spacing());
  result.initial_loss = deformable_loss(fixed, moving, result.field, config);
  check_finite(result.initial_loss, "deformable", 0, 0);
  result.final_loss = result.initial_loss;

  DisplacementField u;
  std::vector<double> grad;
  const double step = 1.0 / (1.0 / config.deformable_lr + 24.0 * config.lambda);
  for (int level = 0; level < config.levels; ++level) {
    const int factor = 1 << (config.levels - 1 - level);
    const Volume3 f = level_image(fixed, factor);
    const Volume3 m = level_image(moving, factor);
    const Dims d = f.dims();
    const double n = double(d.count());
    u = level == 0 ? DisplacementField(d) : upsample_field(u, d);

    DisplacementField level_best = u;
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> losses;
    for (int it = 0; it <= config.deformable_iterations; ++it) {
      const Sampled smp = sample_affine(m, AffineTransform::identity(), d, &u, true);
      std::vector<double> g(3 * d.count(), 0.0);
      const double loss = guarded_gradient(f, smp.volume(d), config.similarity, grad, "deformable", level, it) +
                          diffusion(u, config.lambda, &g);
      check_finite(loss, "deformable", level, it);
      if (loss < best) {
        best = loss;
        level_best = u;
      }
      result.trace.push_back({level, it, loss, best});
      losses.push_back(loss);
      if (it == config.deformable_iterations || converged(losses, config)) break;

      auto data = u.data();
      for (std::size_t i = 0; i < d.count(); ++i)
        for (int a = 0; a < 3; ++a) {
          const double gi = g[3 * i + a] + n * grad[i] * smp.grads[i][a];
          data[3 * i + a] = static_cast<float>(data[3 * i + a] - step * gi);
        }
      u = smooth_field(u, config.field_sigma);
    }
    u = level_best;
    const DisplacementField candidate = upsample_field(u, full);
    const double loss = factor == 1 ? best : deformable_loss(fixed, moving, candidate, config);
    if (loss < result.final_loss) {
      result.final_loss = loss;
      result.field = candidate;
    }
  }
  result.field = DisplacementField(full, fixed.spacing(), std::vector<float>(result.field.data().begin(),
                                                                             result.field.data().end()));
  return result;
}

Volume3 warp(const Volume3& v, const AffineTransform& affine, Dims out, const DisplacementField* field) {
  if (field && field->dims() != out) fail(Errc::invalid_argument, "warp: field dims differ from the output grid");
  return Volume3(out, v.spacing(), sample_affine(v, affine, out, field, false).values);
}

Volume3 warp(const Volume3& v, const AffineTransform& affine, const DisplacementField* field) {
  return warp(v, affine, v.dims(), field);
}

DisplacementField compose_linear(const AffineTransform& a, const DisplacementField& field) {
  DisplacementField out = field;
  const std::size_t n = field.dims().count();
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = field.at(i);
    std::array<float, 3> w{};
    for (int r = 0; r < 3; ++r) w[r] = static_cast<float>(a.L(r, 0) * u[0] + a.L(r, 1) * u[1] + a.L(r, 2) * u[2]);
    out.set(i, w);
  }
  return out;
}

void write_affine(const AffineTransform& a, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["convention"] = "target_to_source";
  j["matrix"] = a.m;
  detail::write_text(path, j.dump(2) + "\n");
}

AffineTransform read_affine(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::missing_dependency, "affine sidecar not found: " + path.string());
  AffineTransform a;
  try {
    const auto j = nlohmann::json::parse(detail::read_text(path));
    const auto m = j.at("matrix").get<std::vector<double>>();
    if (m.size() != 12) fail(Errc::decode, "affine sidecar must hold 12 numbers: " + path.string());
    std::copy(m.begin(), m.end(), a.m.begin());
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::decode, "bad affine sidecar " + path.string() + ": " + e.what());
  }
  if (!a.finite()) fail(Errc::decode, "non-finite affine in " + path.string());
  return a;
}

void write_trace_csv(const std::vector<TraceEntry>& trace, const std::filesystem::path& path) {
  std::ostringstream os;
  os.precision(17);
  os << "level,iteration,loss,best\n";
  for (const auto& e : trace) os << e.level << ',' << e.iteration << ',' << e.loss << ',' << e.best << '\n';
  detail::write_text(path, os.str());
}

}  // namespace agemap
