#ifndef PKM_H
#define PKM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PkmMethod {
  PKM_METHOD_AGP = 0,
  PKM_METHOD_MSAGP = 1,
  PKM_METHOD_FMSAGP = 2,
} PkmMethod;

// Status code returned by every fallible call.
typedef enum PkmStatus {
  PKM_STATUS_OK = 0,
  PKM_STATUS_NULL_POINTER = 1,
  PKM_STATUS_INVALID_INPUT = 2,
  PKM_STATUS_PARSE_ERROR = 3,
  PKM_STATUS_IO_ERROR = 4,
  PKM_STATUS_EMPTY_DATASET = 5,
  PKM_STATUS_NON_FINITE_VALUE = 6,
  PKM_STATUS_DIMENSION_CAP = 7,
  PKM_STATUS_DEGENERATE_CLUSTER = 8,
  PKM_STATUS_RANK_DEFICIENT = 9,
  PKM_STATUS_DEGENERATE_DIRECTION = 10,
  PKM_STATUS_IDENTICAL_CENTERS = 11,
  PKM_STATUS_BUFFER_TOO_SMALL = 12,
  PKM_STATUS_PANIC = 13,
} PkmStatus;

typedef enum PkmTermination {
  PKM_TERMINATION_KKT = 0,
  PKM_TERMINATION_OBJECTIVE_STALL = 1,
  PKM_TERMINATION_CONVERGED = 2,
  PKM_TERMINATION_NOT_CONVERGED = 3,
} PkmTermination;

// Opaque dataset handle.
typedef struct PkmDataset PkmDataset;

// Opaque clustering result handle.
typedef struct PkmResult PkmResult;

// Solver settings. Start from [`pkm_options_default`].
typedef struct PkmOptions {
  enum PkmMethod method;
  // Fixed step length used by AGP.
  double step_length;
  size_t max_iterations;
  double direction_tolerance;
  double objective_tolerance;
  uint64_t seed;
  // Largest accepted point count times cluster count.
  size_t lk_cap;
} PkmOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next call into this library from the same thread.
const char *pkm_last_error_message(void);

struct PkmOptions pkm_options_default(void);

// Creates a dataset from `n_points * dim` row-major coordinates. `labels`
// may be null; otherwise it holds `n_points` ground-truth labels.
//
// # Safety
// `points` must be valid for `n_points * dim` reads, `labels` (if non-null)
// for `n_points` reads, and `out` for one write.
enum PkmStatus pkm_dataset_new(const double *points,
                               size_t n_points,
                               size_t dim,
                               const size_t *labels,
                               struct PkmDataset **out);

// Loads a comma-separated file (gzip accepted). `label_column < 0` means the
// file has no label column.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for one write.
enum PkmStatus pkm_dataset_load_csv(const char *path,
                                    bool has_header,
                                    int64_t label_column,
                                    struct PkmDataset **out);

// # Safety
// `ds` must be null or a handle from this library not yet freed.
void pkm_dataset_free(struct PkmDataset *ds);

// # Safety
// `ds` must be a live dataset handle.
size_t pkm_dataset_n_points(const struct PkmDataset *ds);

// # Safety
// `ds` must be a live dataset handle.
size_t pkm_dataset_dim(const struct PkmDataset *ds);

// Whether the dataset carries ground-truth labels.
//
// # Safety
// `ds` must be a live dataset handle.
bool pkm_dataset_has_labels(const struct PkmDataset *ds);

// Copies the `n_points` ground-truth labels into `out`.
//
// # Safety
// `ds` must be a live dataset handle and `out` valid for `len` writes.
enum PkmStatus pkm_dataset_labels(const struct PkmDataset *ds, size_t *out, size_t len);

// Fits the probabilistic K-means model. `opts` may be null for defaults.
//
// # Safety
// `ds` must be a live dataset handle, `opts` null or valid, and `out` valid
// for one write.
enum PkmStatus pkm_solve(const struct PkmDataset *ds,
                         size_t k,
                         const struct PkmOptions *opts,
                         struct PkmResult **out);

// Runs K-means++ seeding followed by Lloyd iterations.
//
// # Safety
// As for [`pkm_solve`].
enum PkmStatus pkm_kmeans_pp(const struct PkmDataset *ds,
                             size_t k,
                             uint64_t seed,
                             struct PkmResult **out);

// Runs fuzzy c-means with fuzzifier `m`.
//
// # Safety
// As for [`pkm_solve`].
enum PkmStatus pkm_fcm(const struct PkmDataset *ds,
                       size_t k,
                       double m,
                       uint64_t seed,
                       struct PkmResult **out);

// # Safety
// `r` must be null or a handle from this library not yet freed.
void pkm_result_free(struct PkmResult *r);

// # Safety
// `r` must be a live result handle.
size_t pkm_result_n_points(const struct PkmResult *r);

// # Safety
// `r` must be a live result handle.
size_t pkm_result_n_clusters(const struct PkmResult *r);

// # Safety
// `r` must be a live result handle.
size_t pkm_result_dim(const struct PkmResult *r);

// Objective of the method that produced the result, or NaN for null.
//
// # Safety
// `r` must be a live result handle.
double pkm_result_objective(const struct PkmResult *r);

// # Safety
// `r` must be a live result handle.
size_t pkm_result_iterations(const struct PkmResult *r);

// # Safety
// `r` must be a live result handle.
enum PkmTermination pkm_result_termination(const struct PkmResult *r);

// Seed of the run that produced the result.
//
// # Safety
// `r` must be a live result handle.
uint64_t pkm_result_seed(const struct PkmResult *r);

// Number of entries in the objective trace.
//
// # Safety
// `r` must be a live result handle.
size_t pkm_result_trace_len(const struct PkmResult *r);

// Copies the `n_points` hard labels.
//
// # Safety
// `r` must be a live result handle and `out` valid for `len` writes.
enum PkmStatus pkm_result_labels(const struct PkmResult *r, size_t *out, size_t len);

// Copies the `n_points * n_clusters` row-major membership matrix.
//
// # Safety
// `r` must be a live result handle and `out` valid for `len` writes.
enum PkmStatus pkm_result_probabilities(const struct PkmResult *r, double *out, size_t len);

// Copies the `n_clusters * dim` row-major centers.
//
// # Safety
// `r` must be a live result handle and `out` valid for `len` writes.
enum PkmStatus pkm_result_centers(const struct PkmResult *r, double *out, size_t len);

// Copies the objective value recorded at each iteration.
//
// # Safety
// `r` must be a live result handle and `out` valid for `len` writes.
enum PkmStatus pkm_result_trace_objective(const struct PkmResult *r, double *out, size_t len);

// Normalized mutual information (geometric-mean normalization).
//
// # Safety
// `a` and `b` must be valid for `n` reads and `out` for one write.
enum PkmStatus pkm_nmi(const size_t *a, const size_t *b, size_t n, double *out);

// Adjusted Rand index.
//
// # Safety
// As for [`pkm_nmi`].
enum PkmStatus pkm_ari(const size_t *a, const size_t *b, size_t n, double *out);

// V-measure with `truth` as the reference partition.
//
// # Safety
// As for [`pkm_nmi`].
enum PkmStatus pkm_v_measure(const size_t *truth, const size_t *pred, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PKM_H */
