// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap.h"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <new>
#include <string>

#include <json.hpp>

#include "agemap/analysis.hpp"
#include "agemap/checkpoint.hpp"
#include "agemap/error.hpp"
#include "agemap/gradcam.hpp"
#include "agemap/pipeline.hpp"
#include "agemap/run_config.hpp"
#include "agemap/slice_export.hpp"
#include "agemap/volume.hpp"

struct agemap_config {
  agemap::RunConfig cfg;
};

struct agemap_volume {
  agemap::Volume3 v;
};

struct agemap_net {
  agemap::AgeNet net;
};

namespace {

thread_local std::string last_error;

agemap_status status_of(agemap::Errc c) {
  switch (c) {
    case agemap::Errc::invalid_argument: return AGEMAP_INVALID_ARGUMENT;
    case agemap::Errc::config: return AGEMAP_CONFIG;
    case agemap::Errc::missing_dependency: return AGEMAP_MISSING_DEPENDENCY;
    case agemap::Errc::numerical: return AGEMAP_NUMERICAL;
    case agemap::Errc::io: return AGEMAP_IO;
    case agemap::Errc::decode: return AGEMAP_DECODE;
  }
  return AGEMAP_INTERNAL;
}

template <class F>
agemap_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return AGEMAP_OK;
  } catch (const agemap::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = e.what();
    return AGEMAP_CONFIG;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return AGEMAP_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return AGEMAP_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return AGEMAP_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) agemap::fail(agemap::Errc::invalid_argument, std::string(what) + " is null");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

agemap::SliceSpec slice_of(const agemap::Volume3& v, int axis, size_t index) {
  agemap::require(axis >= 0 && axis <= 2, "axis must be 0, 1 or 2");
  agemap::require(index < v.dims()[axis], "slice index out of range");
  return {axis, index};
}

}  // namespace

extern "C" {

const char* agemap_version(void) { return "0.1.0"; }

const char* agemap_last_error(void) { return last_error.c_str(); }

void agemap_string_free(char* s) { std::free(s); }

agemap_status agemap_config_create(agemap_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new agemap_config{};
  });
}

agemap_status agemap_config_load(const char* path, agemap_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new agemap_config{agemap::RunConfig::from_file(path)};
  });
}

agemap_status agemap_config_set(agemap_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    cfg->cfg.set(key, value);
  });
}

agemap_status agemap_config_to_json(const agemap_config* cfg, char** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = copy_string(cfg->cfg.dump());
  });
}

void agemap_config_destroy(agemap_config* cfg) { delete cfg; }

agemap_status agemap_run_stage(const agemap_config* cfg, const char* stage, int jobs, int force, int verbose,
                               int* skipped) {
  return guarded([&] {
    need(cfg, "config");
    need(stage, "stage");
    agemap::require(jobs >= 1, "jobs must be at least 1");
    agemap::StageOptions opt;
    opt.jobs = jobs;
    opt.force = force != 0;
    if (verbose) opt.log = [](const std::string& line) { std::cerr << line << std::endl; };
    const agemap::StageOutcome r = agemap::run_stage(cfg->cfg, stage, opt);
    if (skipped) *skipped = r.skipped ? 1 : 0;
  });
}

agemap_status agemap_volume_create(size_t nx, size_t ny, size_t nz, const float* data, agemap_volume** out) {
  return guarded([&] {
    need(out, "out");
    agemap::require(nx > 0 && ny > 0 && nz > 0, "volume dims must be positive");
    const agemap::Dims d{nx, ny, nz};
    auto* v = new agemap_volume{agemap::Volume3(d)};
    if (data) std::memcpy(v->v.data().data(), data, d.count() * sizeof(float));
    *out = v;
  });
}

agemap_status agemap_volume_read(const char* path, agemap_volume** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new agemap_volume{agemap::read_vol(path)};
  });
}

agemap_status agemap_volume_write(const agemap_volume* v, const char* path) {
  return guarded([&] {
    need(v, "volume");
    need(path, "path");
    agemap::write_vol(v->v, path);
  });
}

void agemap_volume_dims(const agemap_volume* v, size_t* nx, size_t* ny, size_t* nz) {
  const agemap::Dims d = v ? v->v.dims() : agemap::Dims{};
  if (nx) *nx = d.nx;
  if (ny) *ny = d.ny;
  if (nz) *nz = d.nz;
}

const float* agemap_volume_data(const agemap_volume* v) { return v ? v->v.data().data() : nullptr; }

float agemap_volume_sample(const agemap_volume* v, double x, double y, double z) {
  return v ? agemap::trilinear_sample(v->v, {x, y, z}) : 0.0f;
}

agemap_status agemap_volume_export_slice(const agemap_volume* v, int axis, size_t index, const char* path) {
  return guarded([&] {
    need(v, "volume");
    need(path, "path");
    agemap::export_slice(v->v, slice_of(v->v, axis, index), path);
  });
}

agemap_status agemap_volume_overlay_slice(const agemap_volume* base, const agemap_volume* cam, int axis,
                                          size_t index, double alpha, const char* path) {
  return guarded([&] {
    need(base, "base");
    need(cam, "cam");
    need(path, "path");
    agemap::overlay_slice(base->v, cam->v, slice_of(base->v, axis, index), alpha, path);
  });
}

void agemap_volume_destroy(agemap_volume* v) { delete v; }

agemap_status agemap_net_load(const char* checkpoint, agemap_net** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    *out = new agemap_net{agemap::load_checkpoint(checkpoint)};
  });
}

agemap_status agemap_net_predict(const agemap_net* net, const agemap_volume* image, double* age) {
  return guarded([&] {
    need(net, "net");
    need(image, "image");
    need(age, "age");
    *age = net->net.predict(image->v);
  });
}

agemap_status agemap_net_cam(const agemap_net* net, const agemap_volume* image, int normalize, agemap_volume** out) {
  return guarded([&] {
    need(net, "net");
    need(image, "image");
    need(out, "out");
    agemap::CamOptions opt;
    opt.normalize = normalize != 0;
    *out = new agemap_volume{agemap::extract_cam(net->net, image->v, opt)};
  });
}

void agemap_net_destroy(agemap_net* net) { delete net; }

agemap_status agemap_localization_score(const agemap_volume* map, const agemap_volume* aging_mask,
                                        const agemap_volume* body_mask, double* score) {
  return guarded([&] {
    need(map, "map");
    need(aging_mask, "aging_mask");
    need(body_mask, "body_mask");
    need(score, "score");
    agemap::GroundTruth gt;
    gt.aging_mask = aging_mask->v;
    gt.body_mask = body_mask->v;
    *score = agemap::localization_score(map->v, gt);
  });
}

}  // extern "C"
