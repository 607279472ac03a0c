// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for registration checks.

#pragma once

#include <cmath>
#include <numbers>

#include "agemap/phantom.hpp"
#include "agemap/registration.hpp"

namespace agemap::testing {

/// A noise-free phantom on the default grid.
inline Volume3 registration_fixture(std::int64_t id = 1, int age = 60) {
  PhantomParams p;
  p.nuisance = false;
  return generate_subject(p, id, age, Sex::F, BmiGroup::overweight).image;
}

/// u(x) = amp * sin(2 pi x_k / n_k) pattern, different per component.
inline DisplacementField sinusoidal_field(Dims d, double amp) {
  DisplacementField f(d);
  std::size_t i = 0;
  const double tau = 2.0 * std::numbers::pi;
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x, ++i) {
        const double sx = std::sin(tau * double(y) / double(d.ny));
        const double sy = std::sin(tau * double(z) / double(d.nz));
        const double sz = std::sin(tau * double(x) / double(d.nx));
        f.set(i, {float(amp * sx), float(amp * sy), float(amp * sz)});
      }
  return f;
}

inline double max_abs_linear_error(const AffineTransform& a) {
  double worst = 0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(a.L(r, c) - (r == c ? 1.0 : 0.0)));
  return worst;
}

inline double max_abs_translation(const AffineTransform& a, const double expect[3]) {
  double worst = 0;
  for (int r = 0; r < 3; ++r) worst = std::max(worst, std::abs(a.t(r) - expect[r]));
  return worst;
}

/// Best-so-far loss never increases within a level.
inline bool monotone_best(const std::vector<TraceEntry>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i].level == trace[i - 1].level && trace[i].best > trace[i - 1].best) return false;
  return !trace.empty();
}

}  // namespace agemap::testing
