/* C interface to the qfm quantum Fourier model toolkit. */

#ifndef QFM_H
#define QFM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

#define QFM_STRATEGY_PAULI 0

#define QFM_STRATEGY_EXPONENTIAL 1

#define QFM_STRATEGY_GOLOMB 2

#define QFM_ANSATZ_STRONGLY_ENTANGLING 0

#define QFM_ANSATZ_TWO_DESIGN 1

#define QFM_ANSATZ_HAAR 2

/**
 * `|0…0⟩⟨0…0|`.
 */
#define QFM_OBSERVABLE_GLOBAL 0

/**
 * Average of single-qubit `|0⟩⟨0|`.
 */
#define QFM_OBSERVABLE_LOCAL 1

typedef enum QfmStatus {
  QFM_STATUS_OK = 0,
  QFM_STATUS_NULL_POINTER = 1,
  QFM_STATUS_INVALID_ARGUMENT = 2,
  QFM_STATUS_UNSUPPORTED = 3,
  QFM_STATUS_NOT_IN_SPECTRUM = 4,
  QFM_STATUS_IO = 5,
  QFM_STATUS_BUFFER_TOO_SMALL = 6,
  QFM_STATUS_PANIC = 7,
} QfmStatus;

/**
 * Encoding Hamiltonians with their spectrum.
 */
typedef struct QfmEncoding QfmEncoding;

/**
 * Model circuit, observable and current parameters.
 */
typedef struct QfmModel QfmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *qfm_version(void);

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *qfm_last_error(void);

/**
 * Builds a built-in encoding (`QFM_STRATEGY_*`) on `n` qubits with `layers` layers.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum QfmStatus qfm_encoding_new(int strategy,
                                uintptr_t n,
                                uintptr_t layers,
                                struct QfmEncoding **out);

/**
 * # Safety
 * `enc` must be null or a handle from `qfm_encoding_new` not yet freed.
 */
void qfm_encoding_free(struct QfmEncoding *enc);

/**
 * Frequencies (physical, ascending) and redundancies of the spectrum.
 *
 * # Safety
 * `enc` must be a live handle; `omega` and `redundancy` must hold
 * `capacity` elements when `capacity > 0`.
 */
enum QfmStatus qfm_encoding_spectrum(const struct QfmEncoding *enc,
                                     double *omega,
                                     uint64_t *redundancy,
                                     uintptr_t capacity,
                                     uintptr_t *len);

/**
 * Single-qubit-rotation model around `enc` with an ansatz (`QFM_ANSATZ_*`,
 * `reps` = repetitions or depth) and observable (`QFM_OBSERVABLE_*`).
 * Parameters start at zero angles and identity Haar blocks.
 *
 * # Safety
 * `enc` must be a live handle and `out` valid for writes.
 */
enum QfmStatus qfm_model_new(const struct QfmEncoding *enc,
                             int ansatz,
                             uintptr_t reps,
                             int observable,
                             struct QfmModel **out);

/**
 * # Safety
 * `model` must be null or a handle from `qfm_model_new` not yet freed.
 */
void qfm_model_free(struct QfmModel *model);

/**
 * Number of rotation angles.
 *
 * # Safety
 * `model` must be a live handle; `out` valid for writes.
 */
enum QfmStatus qfm_model_num_params(const struct QfmModel *model, uintptr_t *out);

/**
 * Draws uniform angles and Haar blocks from `seed`.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum QfmStatus qfm_model_randomize(struct QfmModel *model, uint64_t seed);

/**
 * Copies the current angles out.
 *
 * # Safety
 * `model` must be a live handle; `angles` must hold `capacity` elements
 * when `capacity > 0`.
 */
enum QfmStatus qfm_model_get_angles(const struct QfmModel *model,
                                    double *angles,
                                    uintptr_t capacity,
                                    uintptr_t *len);

/**
 * Replaces the angles; `len` must equal the parameter count.
 *
 * # Safety
 * `model` must be a live handle; `angles` must hold `len` elements.
 */
enum QfmStatus qfm_model_set_angles(struct QfmModel *model, const double *angles, uintptr_t len);

/**
 * `f(x)` at the current parameters.
 *
 * # Safety
 * `model` must be a live handle; `out` valid for writes.
 */
enum QfmStatus qfm_model_evaluate(const struct QfmModel *model, double x, double *out);

/**
 * Parameter-shift gradient of `f(x)` with respect to every angle.
 *
 * # Safety
 * `model` must be a live handle; `grad` must hold `capacity` elements when
 * `capacity > 0`.
 */
enum QfmStatus qfm_model_gradient(const struct QfmModel *model,
                                  double x,
                                  double *grad,
                                  uintptr_t capacity,
                                  uintptr_t *len);

/**
 * Fourier coefficients `c_ω` on the full sampling grid (physical ω ascending).
 *
 * # Safety
 * `model` must be a live handle; the three arrays must hold `capacity`
 * elements when `capacity > 0`.
 */
enum QfmStatus qfm_model_coefficients(const struct QfmModel *model,
                                      double *omega,
                                      double *re,
                                      double *im,
                                      uintptr_t capacity,
                                      uintptr_t *len);

/**
 * Runs an experiment described by a JSON config (the CLI's format, with
 * `subcommand` and `output` set) and writes its files. On success `*summary`
 * receives a string to release with `qfm_string_free`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `summary` null or valid
 * for writes.
 */
enum QfmStatus qfm_run_json(const char *config_json, char **summary);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string from `qfm_run_json` not yet freed.
 */
void qfm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QFM_H */
