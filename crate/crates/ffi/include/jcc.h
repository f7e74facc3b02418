#ifndef JCC_H
#define JCC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum {
  JCC_STATUS_OK = 0,
  JCC_STATUS_NULL_POINTER = 1,
  JCC_STATUS_INVALID_ARGUMENT = 2,
  JCC_STATUS_IO = 3,
  JCC_STATUS_PARSE = 4,
  JCC_STATUS_INVALID_MODEL = 5,
  JCC_STATUS_PANIC = 6,
} JccStatus;

// How the Boole baseline scores the safety of its policies.
typedef enum {
  JCC_BOOLE_EVAL_EXACT = 0,
  JCC_BOOLE_EVAL_BOUND = 1,
} JccBooleEval;

// Outcome of a solve.
typedef enum {
  JCC_SOLVE_STATUS_SOLVED = 0,
  JCC_SOLVE_STATUS_TRIVIAL = 1,
  JCC_SOLVE_STATUS_INFEASIBLE = 2,
  JCC_SOLVE_STATUS_MAX_ITERS = 3,
} JccSolveStatus;

// Member of a mixed policy.
typedef enum {
  JCC_POLICY_MEMBER_OVER = 0,
  JCC_POLICY_MEMBER_UNDER = 1,
} JccPolicyMember;

// Opaque gridded model.
typedef struct JccModel JccModel;

// Opaque solve report.
typedef struct JccReport JccReport;

// Scalar results of a solve.
typedef struct {
  JccSolveStatus status;
  double cost;
  double safety;
  // Suboptimality certificate.
  double delta;
  // Probability of following the over-safe member.
  double p_over;
  double lambda_lower;
  double lambda_upper;
  size_t iterations;
} JccSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *jcc_last_error_message(void);

// Reads a JSON model file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
JccStatus jcc_model_load(const char *path, JccModel **out);

// Parses a JSON model from `len` bytes.
//
// # Safety
// `json` must point to `len` readable bytes and `out` be a valid pointer.
JccStatus jcc_model_from_json(const uint8_t *json, size_t len, JccModel **out);

// Grids a built-in system: `"unicycle-a"`, `"unicycle-b"` or `"fishery"`.
// The model's initial state is the system's default starting cell.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
JccStatus jcc_model_builtin(const char *name, JccModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void jcc_model_free(JccModel *model);

// Number of states, actions and the horizon. Any output pointer may be null.
//
// # Safety
// `model` must be a live handle; non-null outputs must be valid.
JccStatus jcc_model_dims(const JccModel *model,
                         size_t *num_states,
                         size_t *num_actions,
                         size_t *horizon);

// Default initial cell: the system's starting point for built-ins, else 0.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
JccStatus jcc_model_initial_state(const JccModel *model, size_t *out);

// Solves the chance-constrained problem from cell `x0` at level `alpha`
// until the certificate is at most `delta` or `max_iters` bisection steps.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
JccStatus jcc_solve(const JccModel *model,
                    size_t x0,
                    double alpha,
                    double delta,
                    size_t max_iters,
                    JccReport **out);

// The Boole-inequality baseline with the given safety evaluation.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
JccStatus jcc_solve_boole(const JccModel *model,
                          size_t x0,
                          double alpha,
                          double delta,
                          size_t max_iters,
                          JccBooleEval eval,
                          JccReport **out);

// Releases a report. Null is ignored.
//
// # Safety
// `report` must come from this library and not be used afterwards.
void jcc_report_free(JccReport *report);

// # Safety
// `report` must be a live handle and `out` a valid pointer.
JccStatus jcc_report_summary(const JccReport *report, JccSummary *out);

// Action of one member of the solved policy at step `k`, cell `state` and
// flag `safe` (non-zero while the trajectory has stayed safe).
//
// # Safety
// `report` must be a live handle and `out` a valid pointer.
JccStatus jcc_report_action(const JccReport *report,
                            JccPolicyMember member,
                            size_t k,
                            size_t state,
                            int32_t safe,
                            size_t *out);

// The full report as a NUL-terminated JSON string, released with
// [`jcc_string_free`].
//
// # Safety
// `report` must be a live handle and `out` a valid pointer.
JccStatus jcc_report_to_json(const JccReport *report, char **out);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void jcc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JCC_H */
