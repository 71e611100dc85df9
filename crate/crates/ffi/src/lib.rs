//! C ABI over the sampling toolkit.
//!
//! Configurations and run results are opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns a
//! [`DapsStatus`]; on failure [`daps_last_error`] describes the cause. Strings
//! are NUL-terminated UTF-8. Handles are not synchronised: use one handle per
//! thread or lock externally.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use daps::harness::{self, ExperimentConfig, RunOptions, RunResult};
use daps::metrics::{wasserstein2_exact, wasserstein2_sliced, PointCloud};
use daps::rng::aux_rng;
use daps::DapsError;
use nalgebra::DMatrix;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DapsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Configuration text or key rejected.
    Config = 3,
    InvalidArgument = 4,
    /// Divergence, non-finite state or a non-SPD matrix.
    Numerical = 5,
    Io = 6,
    /// Index past the end, or a chain that failed.
    OutOfRange = 7,
    /// Caught a Rust panic; the handle involved should be freed.
    Panic = 8,
}

/// Opaque experiment configuration.
pub struct DapsConfig {
    inner: ExperimentConfig,
}

/// Opaque result of a run.
pub struct DapsRun {
    inner: RunResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn fail(status: DapsStatus, msg: impl Into<String>) -> DapsStatus {
    set_error(msg);
    status
}

fn status_of(e: &DapsError) -> DapsStatus {
    match e {
        DapsError::Config { .. } | DapsError::Parse(_) => DapsStatus::Config,
        DapsError::InvalidParameter { .. } | DapsError::DimensionMismatch { .. } => DapsStatus::InvalidArgument,
        DapsError::NotPositiveDefinite(_) | DapsError::Diverged { .. } | DapsError::NonFinite { .. } => {
            DapsStatus::Numerical
        }
        DapsError::Io(_) => DapsStatus::Io,
    }
}

fn from_err(e: DapsError) -> DapsStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

/// Runs `f`, converting panics into [`DapsStatus::Panic`].
fn guard(f: impl FnOnce() -> DapsStatus) -> DapsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == DapsStatus::Ok {
                set_error("");
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(DapsStatus::Panic, msg)
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, DapsStatus> {
    if p.is_null() {
        return Err(fail(DapsStatus::NullPointer, format!("`{what}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DapsStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

fn emit<T>(out: *mut *mut T, value: T) -> DapsStatus {
    // SAFETY: callers check `out` for null before building `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    DapsStatus::Ok
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(DapsStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn daps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn daps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses configuration text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn daps_config_from_toml(text: *const c_char, out: *mut *mut DapsConfig) -> DapsStatus {
    guard(|| {
        non_null!(out);
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ExperimentConfig::from_toml(text) {
            Ok(inner) => emit(out, DapsConfig { inner }),
            Err(e) => from_err(e),
        }
    })
}

/// Loads a bundled preset by name.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn daps_config_from_preset(name: *const c_char, out: *mut *mut DapsConfig) -> DapsStatus {
    guard(|| {
        non_null!(out);
        let name = match str_arg(name, "name") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match harness::preset(name) {
            Ok(inner) => emit(out, DapsConfig { inner }),
            Err(e) => from_err(e),
        }
    })
}

/// Sets a numeric key (`section.key` or a unique bare key).
///
/// # Safety
/// `cfg` must come from this library; `key` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn daps_config_set(cfg: *mut DapsConfig, key: *const c_char, value: f64) -> DapsStatus {
    guard(|| {
        non_null!(cfg);
        let key = match str_arg(key, "key") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let cfg = &mut *cfg;
        match harness::with_axis(&cfg.inner, key, value) {
            Ok(c) => {
                cfg.inner = c;
                DapsStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// Sets the master seed.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn daps_config_set_seed(cfg: *mut DapsConfig, seed: u64) -> DapsStatus {
    guard(|| {
        non_null!(cfg);
        (*cfg).inner.run.seed = seed;
        DapsStatus::Ok
    })
}

/// Sets the number of chains (at least 1).
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn daps_config_set_chains(cfg: *mut DapsConfig, chains: usize) -> DapsStatus {
    guard(|| {
        non_null!(cfg);
        if chains == 0 {
            return fail(DapsStatus::InvalidArgument, "chains must be at least 1");
        }
        (*cfg).inner.run.chains = chains;
        DapsStatus::Ok
    })
}

/// Writes the resolved configuration text into `buf` (NUL-terminated) and its
/// length excluding the NUL into `len_out`. With `buf` null or too small only
/// the length is reported and [`DapsStatus::OutOfRange`] is returned for a
/// short buffer.
///
/// # Safety
/// `cfg` must come from this library; `buf` must hold `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn daps_config_snapshot(
    cfg: *const DapsConfig,
    buf: *mut c_char,
    cap: usize,
    len_out: *mut usize,
) -> DapsStatus {
    guard(|| {
        non_null!(cfg, len_out);
        let text = (*cfg).inner.to_toml();
        *len_out = text.len();
        if buf.is_null() {
            return DapsStatus::Ok;
        }
        if cap < text.len() + 1 {
            return fail(DapsStatus::OutOfRange, format!("buffer needs {} bytes", text.len() + 1));
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
        DapsStatus::Ok
    })
}

/// Releases a configuration. Null is ignored.
///
/// # Safety
/// `cfg` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn daps_config_free(cfg: *mut DapsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn options(threads: usize) -> RunOptions {
    RunOptions {
        threads: (threads > 0).then_some(threads),
    }
}

/// Runs the experiment. `threads = 0` uses `DAPS_THREADS` or all cores.
///
/// # Safety
/// `cfg` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn daps_run(cfg: *const DapsConfig, threads: usize, out: *mut *mut DapsRun) -> DapsStatus {
    guard(|| {
        non_null!(cfg, out);
        match harness::run_experiment(&(*cfg).inner, &options(threads)) {
            Ok(inner) => emit(out, DapsRun { inner }),
            Err(e) => from_err(e),
        }
    })
}

/// Runs `k` chains and selects the best one (see [`daps_run_selected`]).
///
/// # Safety
/// `cfg` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn daps_best_of(
    cfg: *const DapsConfig,
    k: usize,
    threads: usize,
    out: *mut *mut DapsRun,
) -> DapsStatus {
    guard(|| {
        non_null!(cfg, out);
        match harness::best_of_k(&(*cfg).inner, k, &options(threads)) {
            Ok(inner) => emit(out, DapsRun { inner }),
            Err(e) => from_err(e),
        }
    })
}

/// Data dimension of the samples.
///
/// # Safety
/// `run` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn daps_run_dim(run: *const DapsRun) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).inner.config.dim()
}

/// Number of chains, including failed ones.
///
/// # Safety
/// `run` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn daps_run_chain_count(run: *const DapsRun) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).inner.chains.len()
}

/// Copies the terminal sample of `chain` into `out[0..len]`; `len` must equal
/// [`daps_run_dim`]. A failed chain yields [`DapsStatus::OutOfRange`] with
/// its error message.
///
/// # Safety
/// `run` must come from this library; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn daps_run_sample(run: *const DapsRun, chain: usize, out: *mut f64, len: usize) -> DapsStatus {
    guard(|| {
        non_null!(run, out);
        let r = &(*run).inner;
        let Some(c) = r.chains.get(chain) else {
            return fail(DapsStatus::OutOfRange, format!("chain {chain} of {}", r.chains.len()));
        };
        match &c.record {
            Ok(rec) => {
                if len != rec.sample.len() {
                    return fail(
                        DapsStatus::InvalidArgument,
                        format!("buffer length {len}, sample dimension {}", rec.sample.len()),
                    );
                }
                ptr::copy_nonoverlapping(rec.sample.as_ptr(), out, len);
                DapsStatus::Ok
            }
            Err(msg) => fail(DapsStatus::OutOfRange, format!("chain {chain} failed: {msg}")),
        }
    })
}

/// Run-level metric by name (e.g. `w2_oracle`, `residual_mean`).
///
/// # Safety
/// `run` must come from this library; `name` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn daps_run_metric(run: *const DapsRun, name: *const c_char, out: *mut f64) -> DapsStatus {
    guard(|| {
        non_null!(run, out);
        let name = match str_arg(name, "name") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match (*run).inner.metric(name) {
            Some(v) => {
                *out = v;
                DapsStatus::Ok
            }
            None => fail(DapsStatus::OutOfRange, format!("no metric `{name}` in this run")),
        }
    })
}

/// Index of the chain chosen by [`daps_best_of`].
///
/// # Safety
/// `run` must come from this library; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn daps_run_selected(run: *const DapsRun, out: *mut usize) -> DapsStatus {
    guard(|| {
        non_null!(run, out);
        match (*run).inner.selected {
            Some(i) => {
                *out = i;
                DapsStatus::Ok
            }
            None => fail(DapsStatus::OutOfRange, "run was not a best-of run"),
        }
    })
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn daps_run_free(run: *mut DapsRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

unsafe fn cloud(p: *const f64, n: usize, d: usize) -> Result<PointCloud, DapsStatus> {
    let data = std::slice::from_raw_parts(p, n * d);
    PointCloud::uniform(DMatrix::from_row_slice(n, d, data)).map_err(from_err)
}

/// Exact 2-Wasserstein distance between two uniform clouds of `n` points in
/// `d` dimensions, stored row-major.
///
/// # Safety
/// `a` and `b` must each hold `n * d` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn daps_w2_exact(a: *const f64, b: *const f64, n: usize, d: usize, out: *mut f64) -> DapsStatus {
    guard(|| {
        non_null!(a, b, out);
        let (ca, cb) = match (cloud(a, n, d), cloud(b, n, d)) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match wasserstein2_exact(&ca, &cb) {
            Ok(v) => {
                *out = v;
                DapsStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// Sliced 2-Wasserstein estimate with `n_projections` directions drawn from
/// `seed`. Cloud sizes may differ.
///
/// # Safety
/// `a` must hold `na * d` doubles, `b` `nb * d`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn daps_w2_sliced(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    d: usize,
    n_projections: usize,
    seed: u64,
    out: *mut f64,
) -> DapsStatus {
    guard(|| {
        non_null!(a, b, out);
        let (ca, cb) = match (cloud(a, na, d), cloud(b, nb, d)) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match wasserstein2_sliced(&ca, &cb, n_projections, &mut aux_rng(seed, 0)) {
            Ok(v) => {
                *out = v;
                DapsStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}
