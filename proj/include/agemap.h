/* Copyright 2026 The agemap Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the agemap library. Objects are opaque handles created and
 * destroyed by the library. Every fallible call returns an agemap_status;
 * on failure agemap_last_error() describes the error for the calling thread.
 */

#ifndef AGEMAP_H
#define AGEMAP_H

#include <stddef.h>
#include <stdint.h>

#if defined(AGEMAP_BUILDING_LIBRARY)
#define AGEMAP_API __attribute__((visibility("default")))
#else
#define AGEMAP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum agemap_status {
  AGEMAP_OK = 0,
  AGEMAP_INVALID_ARGUMENT = 1,
  AGEMAP_CONFIG = 2,
  AGEMAP_MISSING_DEPENDENCY = 3,
  AGEMAP_NUMERICAL = 4,
  AGEMAP_IO = 5,
  AGEMAP_DECODE = 6,
  AGEMAP_INTERNAL = 7
} agemap_status;

typedef struct agemap_config agemap_config;
typedef struct agemap_volume agemap_volume;
typedef struct agemap_net agemap_net;

AGEMAP_API const char* agemap_version(void);

/* Message of the last failed call on this thread; "" if none. */
AGEMAP_API const char* agemap_last_error(void);

/* Strings returned by the library are released with this. */
AGEMAP_API void agemap_string_free(char* s);

/* ---- configuration ---- */

AGEMAP_API agemap_status agemap_config_create(agemap_config** out);
AGEMAP_API agemap_status agemap_config_load(const char* path, agemap_config** out);
/* Dotted key ("train.epochs"); value is JSON text or a bare string. */
AGEMAP_API agemap_status agemap_config_set(agemap_config* cfg, const char* key, const char* value);
AGEMAP_API agemap_status agemap_config_to_json(const agemap_config* cfg, char** out);
AGEMAP_API void agemap_config_destroy(agemap_config* cfg);

/* ---- pipeline ---- */

/* Stage names: phantom train predict bias cam register atlas report baseline25d.
 * With verbose set, progress goes to stderr. `skipped` may be NULL. */
AGEMAP_API agemap_status agemap_run_stage(const agemap_config* cfg, const char* stage, int jobs, int force,
                                          int verbose, int* skipped);

/* ---- volumes ---- */

AGEMAP_API agemap_status agemap_volume_create(size_t nx, size_t ny, size_t nz, const float* data,
                                              agemap_volume** out);
AGEMAP_API agemap_status agemap_volume_read(const char* path, agemap_volume** out);
AGEMAP_API agemap_status agemap_volume_write(const agemap_volume* v, const char* path);
AGEMAP_API void agemap_volume_dims(const agemap_volume* v, size_t* nx, size_t* ny, size_t* nz);
/* x-fastest samples, valid until the handle is destroyed. */
AGEMAP_API const float* agemap_volume_data(const agemap_volume* v);
/* Trilinear; 0 outside the grid. */
AGEMAP_API float agemap_volume_sample(const agemap_volume* v, double x, double y, double z);
/* axis 0, 1 or 2; writes PGM. */
AGEMAP_API agemap_status agemap_volume_export_slice(const agemap_volume* v, int axis, size_t index, const char* path);
/* cam expected in [0, 1]; writes PPM. */
AGEMAP_API agemap_status agemap_volume_overlay_slice(const agemap_volume* base, const agemap_volume* cam, int axis,
                                                     size_t index, double alpha, const char* path);
AGEMAP_API void agemap_volume_destroy(agemap_volume* v);

/* ---- network ---- */

AGEMAP_API agemap_status agemap_net_load(const char* checkpoint, agemap_net** out);
AGEMAP_API agemap_status agemap_net_predict(const agemap_net* net, const agemap_volume* image, double* age);
AGEMAP_API agemap_status agemap_net_cam(const agemap_net* net, const agemap_volume* image, int normalize,
                                        agemap_volume** out);
AGEMAP_API void agemap_net_destroy(agemap_net* net);

/* ---- analysis ---- */

/* Mean over the aging mask divided by the mean over the rest of the body. */
AGEMAP_API agemap_status agemap_localization_score(const agemap_volume* map, const agemap_volume* aging_mask,
                                                   const agemap_volume* body_mask, double* score);

#ifdef __cplusplus
}
#endif

#endif /* AGEMAP_H */
