//! C ABI over the reconciliation engine.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free`. Strings returned through `out` parameters are
//! NUL-terminated UTF-8 and released with [`ts_string_free`]. Every fallible
//! call returns a [`TsStatus`]; on failure [`ts_last_error_message`] describes
//! the problem until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::Serialize;
use treesync::canonical::CanonicalSet;
use treesync::cli::{self, CliError, Replicas};
use treesync::formats::{parse_command_set, render_plan, text_commands, Blobs, Snapshot};
use treesync::reconciler::{ConflictKind, ContentPolicy, Policy, ReconcileError, Resolver, Side};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an out-of-range argument.
    InvalidArgument = 1,
    /// Input files or sets failed validation.
    Validation = 2,
    /// Resolution stopped before every conflict was settled.
    Aborted = 3,
    /// A command sequence broke a filesystem.
    Broken = 4,
    /// The named conflict is no longer live.
    Stale = 5,
    /// Conflicts remain; no plan yet.
    NotFinished = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsSide {
    A = 0,
    B = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsPolicy {
    FirstWins = 0,
    SecondWins = 1,
    /// Content conflicts abort.
    ConstructorWins = 2,
    /// Requires a target merger.
    Guided = 3,
}

/// A parsed snapshot.
pub struct TsSnapshot(Snapshot);

/// An interactive resolution session.
pub struct TsReconciler {
    replicas: Replicas,
    common: CanonicalSet,
    resolver: Resolver,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("NULs removed"));
}

struct Failure(TsStatus, String);

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        let status = match e.exit_code() {
            cli::EXIT_VALIDATION => TsStatus::Validation,
            cli::EXIT_ABORTED => TsStatus::Aborted,
            cli::EXIT_BROKEN => TsStatus::Broken,
            _ => TsStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<ReconcileError> for Failure {
    fn from(e: ReconcileError) -> Self {
        match e {
            ReconcileError::StaleConflict(_) => Failure(TsStatus::Stale, e.to_string()),
            other => CliError::from(other).into(),
        }
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(TsStatus::InvalidArgument, msg.to_owned())
}

/// Runs `f`, converting failures and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside treesync");
            TsStatus::Internal
        }
    }
}

unsafe fn utf8<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid("null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid("string is not UTF-8"))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid("null handle"))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("null out pointer"));
    }
    let c = CString::new(s).map_err(|_| Failure(TsStatus::Internal, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Parses a snapshot file's text. Payloads must be inline.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_snapshot_parse(text: *const c_char, out: *mut *mut TsSnapshot) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("null out pointer"));
        }
        let s = Snapshot::parse(utf8(text)?, &Blobs::inline()).map_err(CliError::from)?;
        *out = Box::into_raw(Box::new(TsSnapshot(s)));
        Ok(())
    })
}

/// # Safety
/// `snapshot` must come from [`ts_snapshot_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ts_snapshot_free(snapshot: *mut TsSnapshot) {
    if !snapshot.is_null() {
        drop(Box::from_raw(snapshot));
    }
}

/// The commands turning `original` into `replica`, one `path: before ->
/// after` line each, in execution order.
///
/// # Safety
/// Handles must be valid; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_diff(
    original: *const TsSnapshot,
    replica: *const TsSnapshot,
    out: *mut *mut c_char,
) -> TsStatus {
    guard(|| {
        let set = cli::diff(&handle(original)?.0, &handle(replica)?.0)?;
        put_string(out, text_commands(&set.order()))
    })
}

/// Starts interactive resolution for three snapshots.
///
/// # Safety
/// Handles must be valid; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_reconciler_new(
    original: *const TsSnapshot,
    replica1: *const TsSnapshot,
    replica2: *const TsSnapshot,
    out: *mut *mut TsReconciler,
) -> TsStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("null out pointer"));
        }
        let replicas = Replicas::from_snapshots(&handle(original)?.0, &handle(replica1)?.0, &handle(replica2)?.0)?;
        let common = replicas.a.intersection(&replicas.b).map_err(ReconcileError::from)?;
        let a = replicas.a.minus(&common).map_err(ReconcileError::from)?;
        let b = replicas.b.minus(&common).map_err(ReconcileError::from)?;
        let resolver = Resolver::new(&a, &b)?;
        *out = Box::into_raw(Box::new(TsReconciler {
            replicas,
            common,
            resolver,
        }));
        Ok(())
    })
}

/// Number of live conflicts; 0 for a null handle.
///
/// # Safety
/// `r` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn ts_reconciler_conflict_count(r: *const TsReconciler) -> usize {
    r.as_ref().map_or(0, |r| r.resolver.live_count())
}

#[derive(Serialize)]
struct ConflictJson {
    id: usize,
    kind: ConflictKind,
    a: String,
    b: String,
}

/// Live conflicts as a JSON array of `{id, kind, a, b}`, content conflicts
/// first.
///
/// # Safety
/// `r` must be a valid handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_reconciler_conflicts_json(r: *const TsReconciler, out: *mut *mut c_char) -> TsStatus {
    guard(|| {
        let r = handle(r)?;
        let live: Vec<ConflictJson> = r
            .resolver
            .live_conflicts()
            .into_iter()
            .map(|(id, c)| ConflictJson {
                id,
                kind: c.kind,
                a: c.left.to_string(),
                b: c.right.to_string(),
            })
            .collect();
        put_string(out, serde_json::to_string(&live).expect("conflicts serialize"))
    })
}

/// Settles conflict `conflict_id` in favour of `winner`.
///
/// # Safety
/// `r` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn ts_reconciler_resolve(r: *mut TsReconciler, conflict_id: usize, winner: TsSide) -> TsStatus {
    guard(|| {
        let r = r.as_mut().ok_or_else(|| invalid("null handle"))?;
        let side = match winner {
            TsSide::A => Side::A,
            TsSide::B => Side::B,
        };
        r.resolver.resolve(conflict_id, side)?;
        Ok(())
    })
}

/// The plan file for the merger reached, once no conflicts remain.
///
/// # Safety
/// `r` must be a valid handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_reconciler_finish_plan(r: *const TsReconciler, out: *mut *mut c_char) -> TsStatus {
    guard(|| {
        let r = handle(r)?;
        if !r.resolver.is_finished() {
            return Err(Failure(
                TsStatus::NotFinished,
                format!("{} conflicts remain", r.resolver.live_count()),
            ));
        }
        let rest = r.resolver.merger()?;
        let merger = CanonicalSet::new(r.common.iter().chain(rest.iter()).cloned()).map_err(ReconcileError::from)?;
        let plan = r.replicas.plan(&merger)?;
        put_string(out, render_plan(&plan, &Blobs::inline()).map_err(CliError::from)?)
    })
}

/// # Safety
/// `r` must come from [`ts_reconciler_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ts_reconciler_free(r: *mut TsReconciler) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// One-shot reconciliation with a fixed policy; writes the plan file text.
/// `target` is a command-file text naming the merger for [`TsPolicy::Guided`]
/// and is ignored (may be null) otherwise.
///
/// # Safety
/// Handles must be valid; `target` null or a valid string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ts_reconcile(
    original: *const TsSnapshot,
    replica1: *const TsSnapshot,
    replica2: *const TsSnapshot,
    policy: TsPolicy,
    target: *const c_char,
    out: *mut *mut c_char,
) -> TsStatus {
    guard(|| {
        let replicas = Replicas::from_snapshots(&handle(original)?.0, &handle(replica1)?.0, &handle(replica2)?.0)?;
        let policy = match policy {
            TsPolicy::FirstWins => Policy::FirstWins,
            TsPolicy::SecondWins => Policy::SecondWins,
            TsPolicy::ConstructorWins => Policy::ConstructorWins {
                content: ContentPolicy::Fail,
            },
            TsPolicy::Guided => {
                let set = parse_command_set(utf8(target)?, &Blobs::inline()).map_err(CliError::from)?;
                Policy::Guided(set)
            }
        };
        let (_, plan) = cli::reconcile(&replicas, policy)?;
        put_string(out, render_plan(&plan, &Blobs::inline()).map_err(CliError::from)?)
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// Owned by the library; valid until the next call.
#[no_mangle]
pub extern "C" fn ts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be a string returned by this library, or null.
#[no_mangle]
pub unsafe extern "C" fn ts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
