#ifndef ISOTNS_H
#define ISOTNS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IsotnsStatus {
  ISOTNS_STATUS_OK = 0,
  ISOTNS_STATUS_NULL_POINTER = 1,
  ISOTNS_STATUS_INVALID_ARGUMENT = 2,
  ISOTNS_STATUS_INVALID_DIMENSION = 3,
  ISOTNS_STATUS_SHAPE = 4,
  ISOTNS_STATUS_UNSUPPORTED = 5,
  ISOTNS_STATUS_INDEX = 6,
  ISOTNS_STATUS_CONFIGURATION = 7,
  ISOTNS_STATUS_VALIDATION = 8,
  ISOTNS_STATUS_RESOURCE = 9,
  ISOTNS_STATUS_NUMERICAL = 10,
  ISOTNS_STATUS_FIT_DOMAIN = 11,
  ISOTNS_STATUS_INTEGRITY = 12,
  ISOTNS_STATUS_IO = 13,
  ISOTNS_STATUS_BUFFER_TOO_SMALL = 14,
  ISOTNS_STATUS_PANIC = 15,
} IsotnsStatus;

typedef enum IsotnsFamily {
  ISOTNS_FAMILY_MPS = 0,
  ISOTNS_FAMILY_TTNS = 1,
  ISOTNS_FAMILY_MERA = 2,
} IsotnsFamily;

typedef enum IsotnsTensorKind {
  /**
   * Sites for an MPS, disentanglers for a MERA, isometries for a TTNS.
   */
  ISOTNS_TENSOR_KIND_DEFAULT = 0,
  ISOTNS_TENSOR_KIND_ISOMETRY = 1,
  ISOTNS_TENSOR_KIND_DISENTANGLER = 2,
} IsotnsTensorKind;

/**
 * One Haar-random draw of a network.
 */
typedef struct IsotnsInstance IsotnsInstance;

/**
 * Network description.
 */
typedef struct IsotnsSpec IsotnsSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *isotns_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated, always
 * NUL-terminated when `len > 0`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t isotns_last_error(char *buf, size_t len);

/**
 * Validates and allocates a network description. `d` is used by MPS only;
 * hierarchical sites have dimension `chi`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum IsotnsStatus isotns_spec_new(enum IsotnsFamily family_,
                                  size_t branching,
                                  size_t chi,
                                  size_t d,
                                  size_t size,
                                  bool homogeneous,
                                  size_t trotter,
                                  struct IsotnsSpec **out);

/**
 * # Safety
 * `spec` must be null or come from [`isotns_spec_new`] and not be freed twice.
 */
void isotns_spec_free(struct IsotnsSpec *spec);

/**
 * Number of physical sites of the network.
 *
 * # Safety
 * `spec` must be a live handle and `out` valid for one write.
 */
enum IsotnsStatus isotns_spec_sites(const struct IsotnsSpec *spec, size_t *out);

/**
 * Samples every tensor from the Haar measure; equal seeds give equal draws.
 *
 * # Safety
 * `spec` must be a live handle and `out` valid for one write.
 */
enum IsotnsStatus isotns_instance_sample(const struct IsotnsSpec *spec,
                                         uint64_t seed,
                                         struct IsotnsInstance **out);

/**
 * # Safety
 * `inst` must be null or come from [`isotns_instance_sample`] and not be
 * freed twice.
 */
void isotns_instance_free(struct IsotnsInstance *inst);

/**
 * Energy of the translation-invariant Gell-Mann Hamiltonian with
 * `width`-site terms (`Tr h² = 1`).
 *
 * # Safety
 * `inst` must be a live handle and `out` valid for one write.
 */
enum IsotnsStatus isotns_instance_energy(const struct IsotnsInstance *inst,
                                         size_t width,
                                         double *out);

/**
 * `(1/N)Tr(g†g)` of this draw for the Gell-Mann Hamiltonian with
 * `width`-site terms: per site `j = 1..L` for an MPS, or per layer
 * `τ = 1..T` (mean over the layer's tensors of `kind`) otherwise.
 * `written` receives the number of values even when the buffer is short.
 *
 * # Safety
 * `inst` must be a live handle, `out` valid for `len` writes and `written`
 * null or valid for one write.
 */
enum IsotnsStatus isotns_gradient_values(const struct IsotnsInstance *inst,
                                         size_t width,
                                         enum IsotnsTensorKind kind,
                                         double *out,
                                         size_t len,
                                         size_t *written);

/**
 * Leading eigenvalues (by modulus) of the family's averaged doubled channel.
 *
 * # Safety
 * `spec` must be a live handle, `re` and `im` valid for `len` writes and
 * `written` null or valid for one write.
 */
enum IsotnsStatus isotns_channel_spectrum(const struct IsotnsSpec *spec,
                                          double *re,
                                          double *im,
                                          size_t len,
                                          size_t *written);

/**
 * Closed-form second eigenvalue `η` (leading order for ternary MERA).
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum IsotnsStatus isotns_analytic_eta(enum IsotnsFamily family_,
                                      size_t branching,
                                      size_t chi,
                                      size_t d,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISOTNS_H */
