#ifndef TREESYNC_H
#define TREESYNC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsStatus {
  TS_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or an out-of-range argument.
   */
  TS_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Input files or sets failed validation.
   */
  TS_STATUS_VALIDATION = 2,
  /**
   * Resolution stopped before every conflict was settled.
   */
  TS_STATUS_ABORTED = 3,
  /**
   * A command sequence broke a filesystem.
   */
  TS_STATUS_BROKEN = 4,
  /**
   * The named conflict is no longer live.
   */
  TS_STATUS_STALE = 5,
  /**
   * Conflicts remain; no plan yet.
   */
  TS_STATUS_NOT_FINISHED = 6,
  TS_STATUS_INTERNAL = 7,
} TsStatus;

typedef enum TsSide {
  TS_SIDE_A = 0,
  TS_SIDE_B = 1,
} TsSide;

typedef enum TsPolicy {
  TS_POLICY_FIRST_WINS = 0,
  TS_POLICY_SECOND_WINS = 1,
  /**
   * Content conflicts abort.
   */
  TS_POLICY_CONSTRUCTOR_WINS = 2,
  /**
   * Requires a target merger.
   */
  TS_POLICY_GUIDED = 3,
} TsPolicy;

/**
 * An interactive resolution session.
 */
typedef struct TsReconciler TsReconciler;

/**
 * A parsed snapshot.
 */
typedef struct TsSnapshot TsSnapshot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a snapshot file's text. Payloads must be inline.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_snapshot_parse(const char *text, struct TsSnapshot **out);

/**
 * # Safety
 * `snapshot` must come from [`ts_snapshot_parse`] or be null.
 */
void ts_snapshot_free(struct TsSnapshot *snapshot);

/**
 * The commands turning `original` into `replica`, one `path: before ->
 * after` line each, in execution order.
 *
 * # Safety
 * Handles must be valid; `out` must be a valid pointer.
 */
enum TsStatus ts_diff(const struct TsSnapshot *original,
                      const struct TsSnapshot *replica,
                      char **out);

/**
 * Starts interactive resolution for three snapshots.
 *
 * # Safety
 * Handles must be valid; `out` must be a valid pointer.
 */
enum TsStatus ts_reconciler_new(const struct TsSnapshot *original,
                                const struct TsSnapshot *replica1,
                                const struct TsSnapshot *replica2,
                                struct TsReconciler **out);

/**
 * Number of live conflicts; 0 for a null handle.
 *
 * # Safety
 * `r` must be a valid handle or null.
 */
size_t ts_reconciler_conflict_count(const struct TsReconciler *r);

/**
 * Live conflicts as a JSON array of `{id, kind, a, b}`, content conflicts
 * first.
 *
 * # Safety
 * `r` must be a valid handle; `out` a valid pointer.
 */
enum TsStatus ts_reconciler_conflicts_json(const struct TsReconciler *r, char **out);

/**
 * Settles conflict `conflict_id` in favour of `winner`.
 *
 * # Safety
 * `r` must be a valid handle.
 */
enum TsStatus ts_reconciler_resolve(struct TsReconciler *r, size_t conflict_id, enum TsSide winner);

/**
 * The plan file for the merger reached, once no conflicts remain.
 *
 * # Safety
 * `r` must be a valid handle; `out` a valid pointer.
 */
enum TsStatus ts_reconciler_finish_plan(const struct TsReconciler *r, char **out);

/**
 * # Safety
 * `r` must come from [`ts_reconciler_new`] or be null.
 */
void ts_reconciler_free(struct TsReconciler *r);

/**
 * One-shot reconciliation with a fixed policy; writes the plan file text.
 * `target` is a command-file text naming the merger for [`TsPolicy::Guided`]
 * and is ignored (may be null) otherwise.
 *
 * # Safety
 * Handles must be valid; `target` null or a valid string; `out` valid.
 */
enum TsStatus ts_reconcile(const struct TsSnapshot *original,
                           const struct TsSnapshot *replica1,
                           const struct TsSnapshot *replica2,
                           enum TsPolicy policy,
                           const char *target,
                           char **out);

/**
 * Message for the last failed call on this thread; empty after a success.
 * Owned by the library; valid until the next call.
 */
const char *ts_last_error_message(void);

/**
 * # Safety
 * `s` must be a string returned by this library, or null.
 */
void ts_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TREESYNC_H */
