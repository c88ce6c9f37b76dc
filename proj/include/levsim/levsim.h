/*
 * C API for the double-well apex-stabilization toolkit.
 *
 * The library is consumed through opaque handles and integer status codes.
 * Every function that can fail returns a levsim_status; on failure a
 * thread-local message is available from levsim_last_error().  Returned
 * strings marked "caller frees" must be released with levsim_string_free;
 * handle types have their own _free function.  NULL handles are rejected
 * with LEVSIM_ERR_INVALID (never dereferenced).
 */
#ifndef LEVSIM_LEVSIM_H
#define LEVSIM_LEVSIM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define LEVSIM_API __declspec(dllexport)
#else
#define LEVSIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum levsim_status {
  LEVSIM_OK = 0,
  LEVSIM_ERR_INVALID = 2,       /* bad argument, scenario, or file content */
  LEVSIM_ERR_SYNTHESIS = 3,     /* controller design failed */
  LEVSIM_ERR_PARTICLE_LOST = 4, /* run ended early; record still produced */
  LEVSIM_ERR_IO = 5,            /* file could not be read or written */
  LEVSIM_ERR_INTERNAL = 6       /* unexpected failure */
} levsim_status;

/* Thread-local message for the most recent failure in this thread.
 * Never NULL; empty string when no failure has occurred. */
LEVSIM_API const char* levsim_last_error(void);

/* Library semantic version, e.g. "1.0.0". */
LEVSIM_API const char* levsim_version(void);

/* Releases a string returned through a char** out parameter. */
LEVSIM_API void levsim_string_free(char* text);

/* ------------------------------------------------------------ scenarios */

typedef struct levsim_scenario levsim_scenario;

/* Library defaults for every field. */
LEVSIM_API levsim_status levsim_scenario_default(levsim_scenario** out);

/* Bundled presets; see levsim_bundled_count/levsim_bundled_name. */
LEVSIM_API levsim_status levsim_scenario_bundled(const char* name,
                                                 levsim_scenario** out);

/* Parses a JSON document (missing fields default, unknown fields are
 * rejected naming their path, syntax errors report the line). */
LEVSIM_API levsim_status levsim_scenario_parse(const char* json_text,
                                               levsim_scenario** out);

/* Reads and parses a scenario file. */
LEVSIM_API levsim_status levsim_scenario_load(const char* path,
                                              levsim_scenario** out);

LEVSIM_API void levsim_scenario_free(levsim_scenario* s);

/* Canonical JSON serialization; caller frees. */
LEVSIM_API levsim_status levsim_scenario_serialize(const levsim_scenario* s,
                                                   char** out_text);

/* Borrowed pointers, valid while the handle lives. */
LEVSIM_API const char* levsim_scenario_name(const levsim_scenario* s);
LEVSIM_API const char* levsim_scenario_variant(const levsim_scenario* s);
LEVSIM_API double levsim_scenario_duration_s(const levsim_scenario* s);
LEVSIM_API uint64_t levsim_scenario_seed(const levsim_scenario* s);
LEVSIM_API levsim_status levsim_scenario_set_seed(levsim_scenario* s,
                                                  uint64_t seed);
LEVSIM_API levsim_status levsim_scenario_set_variant(levsim_scenario* s,
                                                     const char* variant);

/* 64-bit content hash of the canonical serialization. */
LEVSIM_API uint64_t levsim_scenario_hash(const levsim_scenario* s);

LEVSIM_API int levsim_bundled_count(void);
/* Borrowed static string; NULL when index is out of range. */
LEVSIM_API const char* levsim_bundled_name(int index);

/* --------------------------------------------------------------- design */

/* Synthesizes the controller for the scenario and renders a human-readable
 * report: model operating point, feedback gains, regulator and estimator
 * eigenvalues, and the apex-estimator time constant.  Caller frees.
 * Fails with LEVSIM_ERR_SYNTHESIS when the design is infeasible and with
 * LEVSIM_ERR_INVALID when the scenario has no controller (variant "none").
 */
LEVSIM_API levsim_status levsim_design_report(const levsim_scenario* s,
                                              char** out_report);

/* Deployable controller artifact (text format with the discrete
 * coefficients); caller frees. */
LEVSIM_API levsim_status levsim_design_artifact(const levsim_scenario* s,
                                                char** out_text);

/* ------------------------------------------------------------- records */

typedef struct levsim_record levsim_record;

/* Runs the closed loop described by the scenario (variant "none" runs
 * open-loop with zero command).  On LEVSIM_OK and on
 * LEVSIM_ERR_PARTICLE_LOST a record is produced (truncated at the loss in
 * the latter case); on any other status *out is NULL. */
LEVSIM_API levsim_status levsim_simulate(const levsim_scenario* s,
                                         levsim_record** out);

LEVSIM_API void levsim_record_free(levsim_record* r);

LEVSIM_API uint64_t levsim_record_rows(const levsim_record* r);
LEVSIM_API int levsim_record_column_count(const levsim_record* r);
/* Borrowed static string; NULL when index is out of range. */
LEVSIM_API const char* levsim_record_column_name(const levsim_record* r,
                                                 int index);
/* Borrowed pointer to the column samples (levsim_record_rows values);
 * NULL when the name is unknown. */
LEVSIM_API const double* levsim_record_column(const levsim_record* r,
                                              const char* name);

LEVSIM_API double levsim_record_sample_rate_hz(const levsim_record* r);
LEVSIM_API double levsim_record_record_rate_hz(const levsim_record* r);
LEVSIM_API int levsim_record_decimation(const levsim_record* r);
LEVSIM_API int levsim_record_averaged(const levsim_record* r);
/* 0 = completed, 1 = particle lost. */
LEVSIM_API int levsim_record_status(const levsim_record* r);
LEVSIM_API double levsim_record_lost_at_s(const levsim_record* r);
LEVSIM_API uint64_t levsim_record_seed(const levsim_record* r);
LEVSIM_API uint64_t levsim_record_scenario_hash(const levsim_record* r);

/* Trace persistence (CSV with metadata comment + header, or the versioned
 * little-endian binary format).  Both round-trip bit-exactly. */
LEVSIM_API levsim_status levsim_record_write_csv(const levsim_record* r,
                                                 const char* path);
LEVSIM_API levsim_status levsim_record_write_bin(const levsim_record* r,
                                                 const char* path);
LEVSIM_API levsim_status levsim_record_read_csv(const char* path,
                                                levsim_record** out);
LEVSIM_API levsim_status levsim_record_read_bin(const char* path,
                                                levsim_record** out);

/* ------------------------------------------------------------- analysis */

/* Stabilization criteria evaluated over non-overlapping averaging windows
 * of the detector and command signals. */
typedef struct levsim_criteria {
  uint64_t window_count;
  double unimodal_fraction;        /* single-mode position distribution */
  double zero_mean_force_fraction; /* |mean u| <= std u */
  double no_well_peak_fraction;    /* no spectral peak at the well band */
  double stabilized_fraction;      /* all three at once */
} levsim_criteria;

/* Evaluates the criteria with default settings.  Any of the outputs may be
 * NULL: out_fractions receives the per-criterion fractions, csv_path (when
 * non-NULL) receives the per-window table, out_summary (caller frees)
 * receives a text block. */
LEVSIM_API levsim_status levsim_analyze_criteria(const levsim_record* r,
                                                 levsim_criteria* out_fractions,
                                                 const char* csv_path,
                                                 char** out_summary);

typedef struct levsim_psd levsim_psd;

/* Averaged periodogram of one record column (Hann window, 50% overlap,
 * one-sided, units V^2/Hz for detector columns).  segment_length 0 picks a
 * default; restrict to samples with t_start_s <= t < t_stop_s, or pass
 * t_stop_s <= t_start_s for the whole record. */
LEVSIM_API levsim_status levsim_record_psd(const levsim_record* r,
                                           const char* column,
                                           int segment_length,
                                           double t_start_s, double t_stop_s,
                                           levsim_psd** out);
LEVSIM_API void levsim_psd_free(levsim_psd* p);
LEVSIM_API uint64_t levsim_psd_bins(const levsim_psd* p);
LEVSIM_API const double* levsim_psd_freq_hz(const levsim_psd* p);
LEVSIM_API const double* levsim_psd_power(const levsim_psd* p);
/* Integrated power over [f_lo, f_hi] (trapezoid). */
LEVSIM_API double levsim_psd_band_power(const levsim_psd* p, double f_lo,
                                        double f_hi);
/* Median bin density over [f_lo, f_hi] (robust band level). */
LEVSIM_API double levsim_psd_band_level(const levsim_psd* p, double f_lo,
                                        double f_hi);
LEVSIM_API levsim_status levsim_psd_write_csv(const levsim_psd* p,
                                              const char* path);

/* Windowed histogram evolution of one record column written as CSV
 * (row = window, columns = time + bin centers).  t_avg_s 0 and bins 0 pick
 * defaults. */
LEVSIM_API levsim_status levsim_analyze_pdf(const levsim_record* r,
                                            const char* column,
                                            double t_avg_s, int bins,
                                            const char* csv_path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* LEVSIM_LEVSIM_H */
