#ifndef AIHS_H
#define AIHS_H

#include <stddef.h>
#include <stdint.h>

typedef enum AihsStatus {
  AIHS_STATUS_OK = 0,
  AIHS_STATUS_NULL_POINTER = 1,
  AIHS_STATUS_INVALID_ARGUMENT = 2,
  AIHS_STATUS_CONFIG = 3,
  AIHS_STATUS_NUMERICAL = 4,
  AIHS_STATUS_DEGENERATE_ANGLE = 5,
  AIHS_STATUS_CHAIN_TERMINATED = 6,
  AIHS_STATUS_AUDIT = 7,
  AIHS_STATUS_IO = 8,
  AIHS_STATUS_PANIC = 9,
} AihsStatus;

// Opaque certificate handle.
typedef struct AihsCertificate AihsCertificate;

// Opaque operator handle.
typedef struct AihsOperator AihsOperator;

// Outcome of a chain run.
typedef struct AihsChainResult {
  size_t reached_depth;
  // 1 when the chain stopped on an invariant subspace.
  int32_t invariant;
  // Largest property residual over all steps.
  double worst_residual;
  // Containment residual of the invariant witness, 0 otherwise.
  double witness_residual;
} AihsChainResult;

// One random perturbation round trip.
typedef struct AihsRoundTrip {
  size_t dim;
  size_t dim_y;
  size_t dim_f;
  size_t rank_k;
  double residual_fwd;
  double residual_bwd;
} AihsRoundTrip;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the next
// call into the library from the same thread.
const char *aihs_last_error(void);

// Library version as a static NUL-terminated string.
const char *aihs_version(void);

// # Safety
// `s` must come from this library and not have been freed.
void aihs_string_free(char *s);

// Builds an operator from its JSON description.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum AihsStatus aihs_operator_from_json(const char *json, struct AihsOperator **out);

// Dense operator from `dim * dim` row-major entries; `im` may be null.
//
// # Safety
// `re` (and `im` when given) must hold `dim * dim` values.
enum AihsStatus aihs_operator_dense(const double *re,
                                    const double *im,
                                    size_t dim,
                                    struct AihsOperator **out);

// # Safety
// `op` must come from this library and not have been freed.
void aihs_operator_free(struct AihsOperator *op);

// Dimension of the truncation, 0 for a null handle.
//
// # Safety
// `op` must be null or a live handle.
size_t aihs_operator_dim(const struct AihsOperator *op);

// Spectral norm of the truncation.
//
// # Safety
// `op` must be a live handle and `out` a valid pointer.
enum AihsStatus aihs_operator_norm(const struct AihsOperator *op, double *out);

// Resolvent vector `(1/lambda - T)^-1 e` by direct solve. `e_im` may be
// null; `out_re` and `out_im` receive `dim` values each.
//
// # Safety
// All arrays must hold `dim` values and `dim` must equal the operator's.
enum AihsStatus aihs_resolvent(const struct AihsOperator *op,
                               double lambda_re,
                               double lambda_im,
                               const double *e_re,
                               const double *e_im,
                               size_t dim,
                               double *out_re,
                               double *out_im);

// Builds a certificate from a JSON run configuration. A certificate whose
// checks fail is still returned; query it with [`aihs_certificate_status`].
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` a valid pointer.
enum AihsStatus aihs_certificate_build(const char *config_json, struct AihsCertificate **out);

// Parses a certificate previously written as JSON.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum AihsStatus aihs_certificate_from_json(const char *json, struct AihsCertificate **out);

// # Safety
// `cert` must come from this library and not have been freed.
void aihs_certificate_free(struct AihsCertificate *cert);

// 0 when every check passed, 2 when only the hypothesis is unverified,
// 1 otherwise (same codes as the command-line `build`).
//
// # Safety
// `cert` must be a live handle and `out` a valid pointer.
enum AihsStatus aihs_certificate_status(const struct AihsCertificate *cert, int32_t *out);

// Reads a stored metric by name, e.g. `"ai_residual"`.
//
// # Safety
// `cert` must be a live handle, `name` NUL-terminated, `out` valid.
enum AihsStatus aihs_certificate_metric(const struct AihsCertificate *cert,
                                        const char *name,
                                        double *out);

// Serializes the certificate; free the string with [`aihs_string_free`].
//
// # Safety
// `cert` must be a live handle and `out` a valid pointer.
enum AihsStatus aihs_certificate_to_json(const struct AihsCertificate *cert, char **out);

// Re-audits the certificate against its embedded operator. `passed`
// receives 1 when every recomputed metric agrees and passes.
//
// # Safety
// `cert` must be a live handle; the outputs must be valid pointers.
enum AihsStatus aihs_certificate_verify(const struct AihsCertificate *cert,
                                        double *max_difference,
                                        int32_t *passed);

// Runs the functional chain from the default start up to `depth`.
//
// # Safety
// `op` must be a live handle and `out` a valid pointer.
enum AihsStatus aihs_chain_run(const struct AihsOperator *op,
                               size_t depth,
                               struct AihsChainResult *out);

// One seeded perturbation round trip with `4 <= N <= max_dim`.
//
// # Safety
// `out` must be a valid pointer.
enum AihsStatus aihs_round_trip(uint64_t seed,
                                size_t max_dim,
                                double tol_rank,
                                struct AihsRoundTrip *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AIHS_H */
