#ifndef BIHAMIL_H
#define BIHAMIL_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum BhmStatus {
  BHM_STATUS_OK = 0,
  BHM_STATUS_NULL_POINTER = 1,
  BHM_STATUS_INVALID_UTF8 = 2,
  BHM_STATUS_INVALID_ARGUMENT = 3,
  BHM_STATUS_SCENARIO = 4,
  BHM_STATUS_IO = 5,
  // A point left the field domain or the stream tube.
  BHM_STATUS_DOMAIN = 6,
  // The field, frame or pair degenerated.
  BHM_STATUS_DEGENERATE = 7,
  BHM_STATUS_MESH = 8,
  BHM_STATUS_PANIC = 9,
} BhmStatus;

// A named field with its adapted frame.
typedef struct BhmField BhmField;

// The report of one run.
typedef struct BhmReport BhmReport;

// A loaded scenario.
typedef struct BhmScenario BhmScenario;

// Chern number of the normal bundle over a closed surface.
typedef struct BhmChern {
  int64_t number;
  // Total holonomy over 2π before rounding.
  double real;
  double defect;
} BhmChern;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *bhm_version(void);

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library on the same thread.
const char *bhm_last_error_message(void);

// Releases a string returned by the library.
//
// # Safety
// `s` must come from this library and not have been freed.
void bhm_string_free(char *s);

// Parses a scenario from a JSON document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum BhmStatus bhm_scenario_from_json(const char *json, struct BhmScenario **out);

// Loads a scenario file; relative surface paths resolve against its directory.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum BhmStatus bhm_scenario_load(const char *path, struct BhmScenario **out);

// Default scenario for a registered field name.
//
// # Safety
// `name` must be a NUL-terminated string and `out` writable.
enum BhmStatus bhm_scenario_for_field(const char *name, struct BhmScenario **out);

// Multiplies every upper-bound tolerance by `k > 0`.
//
// # Safety
// `sc` must be a live scenario handle.
enum BhmStatus bhm_scenario_set_tolerance_scale(struct BhmScenario *sc, double k);

// # Safety
// `sc` must be null or a handle not yet freed.
void bhm_scenario_free(struct BhmScenario *sc);

// Builds the pair and evaluates every identity. A run that fails its
// tolerances or hits a construction error still returns `BHM_STATUS_OK`
// with a report; see [`bhm_report_exit_code`].
//
// # Safety
// `sc` must be a live scenario handle and `out` writable.
enum BhmStatus bhm_run_construct(const struct BhmScenario *sc, struct BhmReport **out);

// Chern-number and torus-integral probes.
//
// # Safety
// `sc` must be a live scenario handle and `out` writable.
enum BhmStatus bhm_run_obstruct(const struct BhmScenario *sc, struct BhmReport **out);

// Refinement study over `levels ≥ 3` levels.
//
// # Safety
// `sc` must be a live scenario handle and `out` writable.
enum BhmStatus bhm_run_converge(const struct BhmScenario *sc,
                                uintptr_t levels,
                                struct BhmReport **out);

// True iff the run passed; false for a null handle.
//
// # Safety
// `r` must be null or a live report handle.
bool bhm_report_pass(const struct BhmReport *r);

// 0 on pass, 1 on a tolerance failure, 2 on an error, -1 for a null handle.
//
// # Safety
// `r` must be null or a live report handle.
int bhm_report_exit_code(const struct BhmReport *r);

// The report as JSON; release with [`bhm_string_free`]. Null on failure.
//
// # Safety
// `r` must be a live report handle.
char *bhm_report_json(const struct BhmReport *r);

// Largest value of a named residual and its tolerance.
//
// # Safety
// `r` must be a live report handle, `name` NUL-terminated, and the outputs
// writable or null.
enum BhmStatus bhm_report_residual(const struct BhmReport *r,
                                   const char *name,
                                   double *max,
                                   double *tolerance);

// # Safety
// `r` must be null or a handle not yet freed.
void bhm_report_free(struct BhmReport *r);

// A registered field with its default parameters. `axis` is the frame's
// reference axis, or null for the field's default.
//
// # Safety
// `name` must be NUL-terminated, `axis` null or three doubles, `out` writable.
enum BhmStatus bhm_field_new(const char *name, const double *axis, struct BhmField **out);

// Field value at `x` into `out[0..3]`.
//
// # Safety
// `f` must be a live field handle, `x` three doubles, `out` room for three.
enum BhmStatus bhm_field_value(const struct BhmField *f, const double *x, double *out);

// Adapted frame at `x` into `out[0..9]` as `e1, e2, e3`.
//
// # Safety
// `f` must be a live field handle, `x` three doubles, `out` room for nine.
enum BhmStatus bhm_field_frame(const struct BhmField *f, const double *x, double *out);

// Chern number over an icosphere of the given subdivision level.
//
// # Safety
// `f` must be a live field handle, `center` three doubles, `out` writable.
enum BhmStatus bhm_chern_icosphere(const struct BhmField *f,
                                   uintptr_t level,
                                   double radius,
                                   const double *center,
                                   struct BhmChern *out);

// # Safety
// `f` must be null or a handle not yet freed.
void bhm_field_free(struct BhmField *f);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIHAMIL_H */
