#ifndef DRN_FFI_H
#define DRN_FFI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum DrnStatus {
  DRN_STATUS_OK = 0,
  DRN_STATUS_NULL_POINTER = 1,
  DRN_STATUS_INVALID_ARGUMENT = 2,
  DRN_STATUS_DIMENSION = 3,
  DRN_STATUS_ISOLATED_NODE = 4,
  DRN_STATUS_NUMERIC = 5,
  DRN_STATUS_NOT_CONVERGED = 6,
  DRN_STATUS_FORMAT = 7,
  DRN_STATUS_IO = 8,
  DRN_STATUS_DATASET = 9,
  DRN_STATUS_PANIC = 10,
} DrnStatus;

typedef struct DrnNetwork DrnNetwork;

typedef struct DrnReluNet DrnReluNet;

typedef struct DrnTrainer DrnTrainer;

/**
 * Steady-state certificate returned by [`drn_solve`].
 */
typedef struct DrnCertificate {
  double kcl_residual_max;
  bool diode_feasible;
  double energy;
  size_t iterations;
  double last_delta;
} DrnCertificate;

/**
 * Training hyperparameters. `lr` points to one rate per layer.
 */
typedef struct DrnEpConfig {
  double beta;
  const double *lr;
  size_t lr_len;
  double momentum;
  double lr_decay;
  size_t batch_size;
  size_t t_inference;
  size_t t_nudge;
} DrnEpConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message (NUL-terminated,
 * truncated to `cap` bytes) into `buf` and returns the full message length
 * plus one. Pass `buf = NULL` to query the size.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t drn_last_error(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *drn_version(void);

/**
 * Random network with leaks off and unit gains.
 *
 * # Safety
 * `widths` must point to `len` values; `out` must be writable.
 */
enum DrnStatus drn_network_random(const size_t *widths,
                                  size_t len,
                                  uint64_t seed,
                                  struct DrnNetwork **out);

/**
 * Loads a binary checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DrnStatus drn_network_load(const char *path, struct DrnNetwork **out);

/**
 * # Safety
 * `net` must be a live handle; `path` a NUL-terminated string.
 */
enum DrnStatus drn_network_save(const struct DrnNetwork *net, const char *path);

/**
 * Loads a text netlist.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DrnStatus drn_network_load_netlist(const char *path, struct DrnNetwork **out);

/**
 * # Safety
 * `net` must be a live handle; `path` a NUL-terminated string.
 */
enum DrnStatus drn_network_save_netlist(const struct DrnNetwork *net, const char *path);

/**
 * Replaces the input and bias gains `A^(0) ..= A^(L-1)`.
 *
 * # Safety
 * `net` must be a live handle; `gains` must point to `len` values.
 */
enum DrnStatus drn_network_set_gains(struct DrnNetwork *net, const double *gains, size_t len);

/**
 * Number of conductive layers `L`, or 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t drn_network_num_layers(const struct DrnNetwork *net);

/**
 * Node count of `layer` (`0..=L`), or 0 when out of range.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t drn_network_width(const struct DrnNetwork *net, size_t layer);

/**
 * Raw input dimension (half the input nodes, minus the bias pair).
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t drn_network_input_dim(const struct DrnNetwork *net);

/**
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void drn_network_free(struct DrnNetwork *net);

/**
 * Relaxes the network on a row-major `batch × input_dim` input matrix and
 * writes the `batch × output_dim` output potentials to `out`.
 *
 * With `tol > 0` the solver runs until the largest potential change falls
 * below `tol` (at most `max_iterations` sweeps, otherwise
 * `DRN_STATUS_NOT_CONVERGED`); with `tol <= 0` it runs exactly
 * `max_iterations` sweeps. `cert` may be null.
 *
 * # Safety
 * `inputs` must hold `batch * input_dim` values, `out` must have room for
 * `out_len` values and `cert` must be null or writable.
 */
enum DrnStatus drn_solve(const struct DrnNetwork *net,
                         const double *inputs,
                         size_t batch,
                         size_t input_dim,
                         size_t max_iterations,
                         double tol,
                         double *out,
                         size_t out_len,
                         struct DrnCertificate *cert);

/**
 * Loads a ReLU network weight file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DrnStatus drn_relu_load(const char *path, struct DrnReluNet **out);

/**
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void drn_relu_free(struct DrnReluNet *net);

/**
 * Compiles a ReLU network into a resistive network at scale `gamma`.
 *
 * # Safety
 * `relu` must be a live handle; `out` must be writable.
 */
enum DrnStatus drn_compile(const struct DrnReluNet *relu,
                           double gamma,
                           bool include_output_leaks,
                           struct DrnNetwork **out);

/**
 * Starts training from a copy of `net`.
 *
 * # Safety
 * `net` and `cfg` must be live; `cfg.lr` must point to `cfg.lr_len`
 * values; `out` must be writable.
 */
enum DrnStatus drn_trainer_new(const struct DrnNetwork *net,
                               const struct DrnEpConfig *cfg,
                               struct DrnTrainer **out);

/**
 * One free phase, nudge phase and update on a minibatch. `errors` (may be
 * null) receives the number of misclassified rows of the free phase.
 *
 * # Safety
 * `inputs` must hold `batch * input_dim` values, `labels` `batch` values.
 */
enum DrnStatus drn_trainer_step(struct DrnTrainer *trainer,
                                const double *inputs,
                                const uint8_t *labels,
                                size_t batch,
                                size_t input_dim,
                                size_t *errors);

/**
 * Copies the trainer's current network into a new handle.
 *
 * # Safety
 * `trainer` must be live; `out` must be writable.
 */
enum DrnStatus drn_trainer_network(const struct DrnTrainer *trainer, struct DrnNetwork **out);

/**
 * # Safety
 * `trainer` must be null or a handle not yet freed.
 */
void drn_trainer_free(struct DrnTrainer *trainer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DRN_FFI_H */
