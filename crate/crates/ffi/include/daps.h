#ifndef DAPS_H
#define DAPS_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum DapsStatus {
  DAPS_STATUS_OK = 0,
  DAPS_STATUS_NULL_POINTER = 1,
  DAPS_STATUS_INVALID_UTF8 = 2,
  // Configuration text or key rejected.
  DAPS_STATUS_CONFIG = 3,
  DAPS_STATUS_INVALID_ARGUMENT = 4,
  // Divergence, non-finite state or a non-SPD matrix.
  DAPS_STATUS_NUMERICAL = 5,
  DAPS_STATUS_IO = 6,
  // Index past the end, or a chain that failed.
  DAPS_STATUS_OUT_OF_RANGE = 7,
  // Caught a Rust panic; the handle involved should be freed.
  DAPS_STATUS_PANIC = 8,
} DapsStatus;

// Opaque experiment configuration.
typedef struct DapsConfig DapsConfig;

// Opaque result of a run.
typedef struct DapsRun DapsRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *daps_last_error(void);

// Library version, static storage.
const char *daps_version(void);

// Parses configuration text.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum DapsStatus daps_config_from_toml(const char *text, struct DapsConfig **out);

// Loads a bundled preset by name.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum DapsStatus daps_config_from_preset(const char *name, struct DapsConfig **out);

// Sets a numeric key (`section.key` or a unique bare key).
//
// # Safety
// `cfg` must come from this library; `key` must be NUL-terminated.
enum DapsStatus daps_config_set(struct DapsConfig *cfg, const char *key, double value);

// Sets the master seed.
//
// # Safety
// `cfg` must come from this library.
enum DapsStatus daps_config_set_seed(struct DapsConfig *cfg, uint64_t seed);

// Sets the number of chains (at least 1).
//
// # Safety
// `cfg` must come from this library.
enum DapsStatus daps_config_set_chains(struct DapsConfig *cfg, size_t chains);

// Writes the resolved configuration text into `buf` (NUL-terminated) and its
// length excluding the NUL into `len_out`. With `buf` null or too small only
// the length is reported and [`DapsStatus::OutOfRange`] is returned for a
// short buffer.
//
// # Safety
// `cfg` must come from this library; `buf` must hold `cap` bytes.
enum DapsStatus daps_config_snapshot(const struct DapsConfig *cfg,
                                     char *buf,
                                     size_t cap,
                                     size_t *len_out);

// Releases a configuration. Null is ignored.
//
// # Safety
// `cfg` must come from this library and not be used afterwards.
void daps_config_free(struct DapsConfig *cfg);

// Runs the experiment. `threads = 0` uses `DAPS_THREADS` or all cores.
//
// # Safety
// `cfg` must come from this library; `out` must be writable.
enum DapsStatus daps_run(const struct DapsConfig *cfg, size_t threads, struct DapsRun **out);

// Runs `k` chains and selects the best one (see [`daps_run_selected`]).
//
// # Safety
// `cfg` must come from this library; `out` must be writable.
enum DapsStatus daps_best_of(const struct DapsConfig *cfg,
                             size_t k,
                             size_t threads,
                             struct DapsRun **out);

// Data dimension of the samples.
//
// # Safety
// `run` must come from this library.
size_t daps_run_dim(const struct DapsRun *run);

// Number of chains, including failed ones.
//
// # Safety
// `run` must come from this library.
size_t daps_run_chain_count(const struct DapsRun *run);

// Copies the terminal sample of `chain` into `out[0..len]`; `len` must equal
// [`daps_run_dim`]. A failed chain yields [`DapsStatus::OutOfRange`] with
// its error message.
//
// # Safety
// `run` must come from this library; `out` must hold `len` doubles.
enum DapsStatus daps_run_sample(const struct DapsRun *run, size_t chain, double *out, size_t len);

// Run-level metric by name (e.g. `w2_oracle`, `residual_mean`).
//
// # Safety
// `run` must come from this library; `name` NUL-terminated; `out` writable.
enum DapsStatus daps_run_metric(const struct DapsRun *run, const char *name, double *out);

// Index of the chain chosen by [`daps_best_of`].
//
// # Safety
// `run` must come from this library; `out` writable.
enum DapsStatus daps_run_selected(const struct DapsRun *run, size_t *out);

// Releases a run. Null is ignored.
//
// # Safety
// `run` must come from this library and not be used afterwards.
void daps_run_free(struct DapsRun *run);

// Exact 2-Wasserstein distance between two uniform clouds of `n` points in
// `d` dimensions, stored row-major.
//
// # Safety
// `a` and `b` must each hold `n * d` doubles; `out` writable.
enum DapsStatus daps_w2_exact(const double *a, const double *b, size_t n, size_t d, double *out);

// Sliced 2-Wasserstein estimate with `n_projections` directions drawn from
// `seed`. Cloud sizes may differ.
//
// # Safety
// `a` must hold `na * d` doubles, `b` `nb * d`; `out` writable.
enum DapsStatus daps_w2_sliced(const double *a,
                               size_t na,
                               const double *b,
                               size_t nb,
                               size_t d,
                               size_t n_projections,
                               uint64_t seed,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DAPS_H */
