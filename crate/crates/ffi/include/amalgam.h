#ifndef AMALGAM_H
#define AMALGAM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AmalgamStatus {
  AMALGAM_STATUS_OK = 0,
  AMALGAM_STATUS_NULL_POINTER = 1,
  AMALGAM_STATUS_INVALID_UTF8 = 2,
  AMALGAM_STATUS_PARSE_ERROR = 3,
  AMALGAM_STATUS_SCHEMA_ERROR = 4,
  AMALGAM_STATUS_PANIC = 5,
} AmalgamStatus;

/**
 * Opaque parsed configuration.
 */
typedef struct AmalgamConfig AmalgamConfig;

/**
 * Opaque verification report.
 */
typedef struct AmalgamReport AmalgamReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *amalgam_version(void);

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *amalgam_last_error(void);

/**
 * Parse a JSON configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AmalgamStatus amalgam_config_parse(const char *text, struct AmalgamConfig **out);

/**
 * Override the truncation level of a parsed configuration.
 *
 * # Safety
 * `cfg` must come from [`amalgam_config_parse`] and not be freed.
 */
enum AmalgamStatus amalgam_config_set_truncation(struct AmalgamConfig *cfg, size_t truncation);

/**
 * # Safety
 * `cfg` must come from [`amalgam_config_parse`] or be null.
 */
void amalgam_config_free(struct AmalgamConfig *cfg);

/**
 * Run the enabled suites. Suite failures are part of the report; a
 * non-`Ok` status means no report was produced.
 *
 * # Safety
 * `cfg` must be a live configuration and `out` a valid pointer.
 */
enum AmalgamStatus amalgam_run(const struct AmalgamConfig *cfg, struct AmalgamReport **out);

/**
 * 1 when every suite passed, 0 otherwise or for a null report.
 *
 * # Safety
 * `report` must be a live report or null.
 */
int32_t amalgam_report_passed(const struct AmalgamReport *report);

/**
 * Process exit code of the report: 0 when all suites pass, 1 otherwise.
 *
 * # Safety
 * `report` must be a live report or null.
 */
int32_t amalgam_report_exit_code(const struct AmalgamReport *report);

/**
 * The report as JSON; release with [`amalgam_string_free`].
 *
 * # Safety
 * `report` must be a live report or null.
 */
char *amalgam_report_json(const struct AmalgamReport *report, bool include_timings);

/**
 * The report as text; release with [`amalgam_string_free`].
 *
 * # Safety
 * `report` must be a live report or null.
 */
char *amalgam_report_text(const struct AmalgamReport *report);

/**
 * # Safety
 * `report` must come from [`amalgam_run`] or be null.
 */
void amalgam_report_free(struct AmalgamReport *report);

/**
 * # Safety
 * `s` must be a string returned by this library or null.
 */
void amalgam_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMALGAM_H */
