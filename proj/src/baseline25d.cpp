// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/baseline25d.hpp"

#include <algorithm>

#include "agemap/error.hpp"
#include "agemap/parallel.hpp"

namespace agemap {

Dims projection_dims(Dims volume) { return {std::max(volume.nx, volume.nz), volume.ny, 2}; }

Volume3 project(const Volume3& v) {
  const Dims d = v.dims();
  const Dims p = projection_dims(d);
  Volume3 out(p, Spacing{v.spacing().sx, v.spacing().sy, 1.0});
  for (std::size_t y = 0; y < d.ny; ++y) {
    for (std::size_t x = 0; x < d.nx; ++x) {
      double s = 0.0;
      for (std::size_t z = 0; z < d.nz; ++z) s += v.at(x, y, z);
      out.at(x, y, 0) = static_cast<float>(s / double(d.nz));
    }
    for (std::size_t z = 0; z < d.nz; ++z) {
      double s = 0.0;
      for (std::size_t x = 0; x < d.nx; ++x) s += v.at(x, y, z);
      out.at(z, y, 1) = static_cast<float>(s / double(d.nx));
    }
  }
  return out;
}

NetConfig net25d_config(Dims volume, const NetConfig& base) {
  NetConfig c = base;
  const Dims p = projection_dims(volume);
  c.input = {p.nx, p.ny, 1};
  c.in_channels = 2;
  c.planar = true;
  return c;
}

Dataset load_projection_dataset(const Manifest& m, int jobs) {
  Dataset d;
  d.ids.resize(m.records.size());
  d.inputs.resize(m.records.size());
  d.targets.resize(m.records.size());
  parallel_for(m.records.size(), jobs, [&](std::size_t i) {
    const SubjectRecord& r = m.records[i];
    const Volume3 p = project(read_vol(m.resolve(r.image_path)));
    d.ids[i] = r.id;
    d.inputs[i].assign(p.data().begin(), p.data().end());
    d.targets[i] = static_cast<float>(r.age);
  });
  return d;
}

Baseline25d train25d(const Manifest& train_split, const Manifest& val_split, const NetConfig& base,
                     const TrainConfig& config, const EpochCallback& on_epoch) {
  if (train_split.records.empty() || val_split.records.empty())
    fail(Errc::invalid_argument, "2.5D training needs non-empty train and val splits");
  const Dims volume = read_vol(train_split.resolve(train_split.records.front().image_path)).dims();
  const Dataset train_set = load_projection_dataset(train_split, config.jobs);
  const Dataset val_set = load_projection_dataset(val_split, config.jobs);
  AgeNet net = AgeNet::initialized(net25d_config(volume, base), static_cast<float>(mean_target(train_set)));
  History h = train(net, train_set, val_set, config, on_epoch);
  return {std::move(net), std::move(h)};
}

double predict25d(const AgeNet& net, const Volume3& v) {
  const Volume3 p = project(v);
  require(net.config().planar && net.config().input == Dims{p.dims().nx, p.dims().ny, 1},
          "2.5D net input does not match the projection dims");
  return net.predict(p.data());
}

Volume3 cam25d(const AgeNet& net, const Volume3& v, const CamOptions& options) {
  const Volume3 p = project(v);
  require(net.config().planar && net.config().input == Dims{p.dims().nx, p.dims().ny, 1},
          "2.5D net input does not match the projection dims");
  return grad_cam(net, p.data(), Spacing{p.spacing().sx, p.spacing().sy, 1.0}, options).map;
}

}  // namespace agemap
