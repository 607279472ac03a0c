// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "agemap/error.hpp"
#include "agemap/parallel.hpp"

namespace agemap {

CamResult cam_from_activation(std::span<const float> activation, std::span<const float> gradient,
                              const ad::Shape& shape, Dims out, Spacing spacing, const CamOptions& options) {
  require(shape.size() == 4, "cam: activation must be [C, X, Y, Z]");
  require(activation.size() == ad::numel(shape) && gradient.size() == activation.size(),
          "cam: activation and gradient sizes differ");
  const std::size_t channels = shape[0];
  const Dims low{shape[1], shape[2], shape[3]};
  const std::size_t n = low.count();

  CamResult r;
  r.alpha.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += gradient[c * n + i];
    r.alpha[c] = static_cast<float>(s / double(n));
    if (!std::isfinite(r.alpha[c])) fail(Errc::numerical, "cam: non-finite gradient");
  }
  std::vector<float> raw(n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < channels; ++c) s += double(r.alpha[c]) * activation[c * n + i];
    raw[i] = static_cast<float>(std::max(0.0, s));
  }
  const Spacing low_spacing{spacing.sx * double(out.nx) / double(low.nx), spacing.sy * double(out.ny) / double(low.ny),
                            spacing.sz * double(out.nz) / double(low.nz)};
  r.raw = Volume3(low, low_spacing, std::move(raw));
  r.map = resample(r.raw, out, Alignment::origin);
  if (options.normalize) {
    const auto data = r.map.data();
    const float peak = data.empty() ? 0.0f : *std::max_element(data.begin(), data.end());
    if (peak > 0.0f) {
      for (float& v : data) v /= peak;
    } else {
      std::fill(data.begin(), data.end(), 0.0f);
    }
  }
  return r;
}

CamResult grad_cam(const AgeNet& net, std::span<const float> input, Spacing spacing, const CamOptions& options) {
  ad::Tape tape;
  const AgeNet::Pass pass = net.forward(tape, input);
  const ad::NodeId layer = pass.cam_layer.id();
  const ad::Gradients g = tape.backward(pass.prediction, std::span(&layer, 1));
  CamResult r = cam_from_activation(pass.cam_layer.value(), g.of(layer), pass.cam_layer.shape(),
                                    net.config().input, spacing, options);
  r.prediction = pass.prediction.item();
  return r;
}

Volume3 extract_cam(const AgeNet& net, const Volume3& image, const CamOptions& options) {
  if (net.config().in_channels != 1 || image.dims() != net.config().input)
    fail(Errc::invalid_argument, "cam: image dims do not match the net input");
  return grad_cam(net, image.data(), image.spacing(), options).map;
}

CohortCamResult extract_cohort(const AgeNet& net, const Manifest& subset, const std::filesystem::path& cam_dir,
                               const std::string& checkpoint_id, const CamOptions& options, int jobs) {
  CohortCamResult out{subset, {}};
  std::vector<std::string> errors(subset.records.size());
  std::filesystem::create_directories(cam_dir);
  parallel_for(subset.records.size(), jobs, [&](std::size_t i) {
    SubjectRecord& r = out.manifest.records[i];
    try {
      const Volume3 image = read_vol(subset.resolve(r.image_path));
      char name[32];
      std::snprintf(name, sizeof name, "%06lld.vol", static_cast<long long>(r.id));
      const std::filesystem::path path = cam_dir / name;
      write_vol(extract_cam(net, image, options), path);
      r.cam_path = path.lexically_relative(subset.base_dir).generic_string();
      nlohmann::ordered_json prov;
      prov["subject"] = r.id;
      prov["checkpoint"] = checkpoint_id;
      prov["layer"] = kCamLayer;
      prov["normalized"] = options.normalize;
      r.cam_provenance = prov.dump();
    } catch (const std::exception& e) {
      errors[i] = "subject " + std::to_string(r.id) + ": " + e.what();
    }
  });
  for (auto& e : errors)
    if (!e.empty()) out.failures.push_back(std::move(e));
  return out;
}

}  // namespace agemap
