//! C ABI for the kitchen simulator, the action parser and the scripted
//! trial runner.
//!
//! Conventions:
//! - every fallible call returns a [`CleaStatus`]; `CLEA_STATUS_OK` is 0
//! - on failure, [`clea_last_error`] describes the problem for the calling
//!   thread until its next call into this library
//! - strings returned through out-pointers are owned by the caller and must
//!   be released with [`clea_string_free`]
//! - worlds are opaque handles released with [`clea_world_free`]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use clea_core::agent::{AgentVariant, Budgets};
use clea_core::harness::{compute_metrics, run_suite, BackendMode, Suite};
use clea_core::skills::parse_action;
use clea_core::world::{load_world, state_digest, FeedbackKind, Simulator, WorldConfig, WorldState};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CleaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    ParseError = 4,
    UnknownEntity = 5,
    /// The action was well formed but its preconditions failed; the world
    /// is unchanged and the feedback JSON explains why.
    ActionFailed = 6,
    InvalidArgument = 7,
    Panic = 8,
}

/// Opaque simulator plus current state.
pub struct CleaWorld {
    sim: Simulator,
    state: WorldState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type FfiResult<T> = Result<T, CleaStatus>;

fn fail<T>(status: CleaStatus, msg: impl Into<String>) -> FfiResult<T> {
    set_error(msg);
    Err(status)
}

/// Runs `f`, converting panics into `CLEA_STATUS_PANIC`.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> CleaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CleaStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            CleaStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(CleaStatus::NullArgument, format!("{what} is null"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(s),
        Err(_) => fail(CleaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")),
    }
}

unsafe fn write_string(out: *mut *mut c_char, value: String) -> FfiResult<()> {
    if out.is_null() {
        return fail(CleaStatus::NullArgument, "output pointer is null");
    }
    let c = CString::new(value).map_err(|_| {
        set_error("output contains a NUL byte");
        CleaStatus::InvalidArgument
    })?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn world_ref<'a>(w: *const CleaWorld) -> FfiResult<&'a CleaWorld> {
    w.as_ref()
        .map_or_else(|| fail(CleaStatus::NullArgument, "world handle is null"), Ok)
}

unsafe fn new_world(cfg: WorldConfig, out: *mut *mut CleaWorld) -> FfiResult<()> {
    if out.is_null() {
        return fail(CleaStatus::NullArgument, "output pointer is null");
    }
    let (sim, state) = match load_world(cfg) {
        Ok(v) => v,
        Err(e) => return fail(CleaStatus::InvalidConfig, e.to_string()),
    };
    *out = Box::into_raw(Box::new(CleaWorld { sim, state }));
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn clea_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn clea_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn clea_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates the bundled default kitchen.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn clea_world_new_default(out: *mut *mut CleaWorld) -> CleaStatus {
    guard(|| new_world(WorldConfig::default_kitchen(), out))
}

/// Creates a world from a JSON world config.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn clea_world_new_json(config_json: *const c_char, out: *mut *mut CleaWorld) -> CleaStatus {
    guard(|| {
        let text = read_str(config_json, "config_json")?;
        let cfg = WorldConfig::from_json(text).or_else(|e| fail(CleaStatus::InvalidConfig, e.to_string()))?;
        new_world(cfg, out)
    })
}

/// Releases a world. Null is ignored.
///
/// # Safety
/// `world` must come from a `clea_world_new_*` call and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn clea_world_free(world: *mut CleaWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Applies one action in canonical text form. Writes the feedback as JSON to
/// `out_feedback` (may be null). Returns `CLEA_STATUS_ACTION_FAILED` when a
/// precondition failed, `CLEA_STATUS_UNKNOWN_ENTITY` for unknown tokens and
/// `CLEA_STATUS_PARSE_ERROR` for text that is not a skill call.
///
/// # Safety
/// `world` must be a live handle; `action` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn clea_world_step(
    world: *mut CleaWorld,
    action: *const c_char,
    out_feedback: *mut *mut c_char,
) -> CleaStatus {
    guard(|| {
        let Some(w) = world.as_mut() else {
            return fail(CleaStatus::NullArgument, "world handle is null");
        };
        let text = read_str(action, "action")?;
        let parsed = parse_action(text).or_else(|e| fail(CleaStatus::ParseError, e.to_string()))?;
        let (next, feedback) = w.sim.step(&w.state, &parsed);
        w.state = next;
        if !out_feedback.is_null() {
            write_string(
                out_feedback,
                serde_json::to_string(&feedback).expect("feedback serializes"),
            )?;
        }
        match feedback.kind {
            None => Ok(()),
            Some(FeedbackKind::UnknownEntity) => fail(CleaStatus::UnknownEntity, feedback.message),
            Some(_) => fail(CleaStatus::ActionFailed, feedback.message),
        }
    })
}

/// Writes one robot's scene-graph observation as JSON.
///
/// # Safety
/// `world` must be a live handle; `robot` a NUL-terminated string; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn clea_world_observe(
    world: *const CleaWorld,
    robot: *const c_char,
    out: *mut *mut c_char,
) -> CleaStatus {
    guard(|| {
        let w = world_ref(world)?;
        let robot = read_str(robot, "robot")?;
        let obs = w
            .sim
            .observe(&w.state, robot)
            .or_else(|e| fail(CleaStatus::UnknownEntity, e.to_string()))?;
        write_string(out, serde_json::to_string(&obs).expect("observation serializes"))
    })
}

/// Writes the hex SHA-256 digest of the current state.
///
/// # Safety
/// `world` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn clea_world_digest(world: *const CleaWorld, out: *mut *mut c_char) -> CleaStatus {
    guard(|| {
        let w = world_ref(world)?;
        write_string(out, state_digest(&w.state))
    })
}

/// Writes the full current state as JSON.
///
/// # Safety
/// `world` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn clea_world_state_json(world: *const CleaWorld, out: *mut *mut c_char) -> CleaStatus {
    guard(|| {
        let w = world_ref(world)?;
        write_string(out, serde_json::to_string(&w.state).expect("state serializes"))
    })
}

/// Parses one skill call and writes its canonical form.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn clea_parse_action(text: *const c_char, out: *mut *mut c_char) -> CleaStatus {
    guard(|| {
        let text = read_str(text, "text")?;
        let action = parse_action(text).or_else(|e| fail(CleaStatus::ParseError, e.to_string()))?;
        write_string(out, action.to_string())
    })
}

/// Runs the bundled suite offline with the scripted backend for one variant
/// (`clea`, `no-critic` or `baseline`) and writes
/// `{"results": [...], "metrics": {...}}` as JSON.
///
/// # Safety
/// `variant` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn clea_run_default_suite(
    variant: *const c_char,
    seed: u64,
    out: *mut *mut c_char,
) -> CleaStatus {
    guard(|| {
        let name = read_str(variant, "variant")?;
        let variant: AgentVariant = name.parse().or_else(|e: String| fail(CleaStatus::InvalidArgument, e))?;
        let suite = Suite::builtin_default();
        let run = run_suite(&suite, &[variant], &BackendMode::Scripted, seed, 1, Budgets::default());
        let metrics = compute_metrics(&run.results).expect("suite is non-empty");
        let json = serde_json::json!({ "results": run.results, "metrics": metrics });
        write_string(out, json.to_string())
    })
}
