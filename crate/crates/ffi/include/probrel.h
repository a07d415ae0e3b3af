#ifndef PROBREL_H
#define PROBREL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The first four match the exit codes of the command-line tool.
 */
typedef enum ProbrelStatus {
  PROBREL_STATUS_OK = 0,
  PROBREL_STATUS_NOT_ESTABLISHED = 1,
  PROBREL_STATUS_USER_ERROR = 2,
  PROBREL_STATUS_INTERNAL_ERROR = 3,
  PROBREL_STATUS_NULL_ARGUMENT = 4,
  PROBREL_STATUS_INVALID_UTF8 = 5,
} ProbrelStatus;

/**
 * A parsed system. Opaque to C.
 */
typedef struct ProbrelSystem ProbrelSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *probrel_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *probrel_version(void);

/**
 * Parse system text into a new handle stored in `*out`.
 *
 * # Safety
 * `text` must be NULL or a NUL-terminated string; `out` must be NULL or
 * point to writable storage for one pointer.
 */
enum ProbrelStatus probrel_system_parse(const char *text, struct ProbrelSystem **out);

/**
 * Release a handle. NULL is ignored.
 *
 * # Safety
 * `sys` must be NULL or a handle from [`probrel_system_parse`] that has
 * not been freed.
 */
void probrel_system_free(struct ProbrelSystem *sys);

/**
 * Release a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must be NULL or a string from this library that has not been freed.
 */
void probrel_string_free(char *s);

/**
 * Exact probability of `event`.
 *
 * # Safety
 * Pointers must be NULL or valid as documented on [`probrel_system_parse`].
 */
enum ProbrelStatus probrel_eval(const struct ProbrelSystem *sys,
                                const char *event,
                                char **out_json);

/**
 * Monte-Carlo estimate of `event` with `n` samples.
 *
 * # Safety
 * Pointers must be NULL or valid as documented on [`probrel_system_parse`].
 */
enum ProbrelStatus probrel_simulate(const struct ProbrelSystem *sys,
                                    const char *event,
                                    uint64_t n,
                                    uint64_t seed,
                                    double gamma,
                                    char **out_json);

/**
 * Rewrite the system body with a proof script; `event` may be NULL
 * (meaning `true`).
 *
 * # Safety
 * Pointers must be NULL or valid as documented on [`probrel_system_parse`].
 */
enum ProbrelStatus probrel_rewrite(const struct ProbrelSystem *sys,
                                   const char *script,
                                   const char *event,
                                   char **out_json);

/**
 * Try to establish `goal`; `script` may be NULL.
 *
 * # Safety
 * Pointers must be NULL or valid as documented on [`probrel_system_parse`].
 */
enum ProbrelStatus probrel_check(const struct ProbrelSystem *sys,
                                 const char *goal,
                                 const char *script,
                                 char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROBREL_H */
