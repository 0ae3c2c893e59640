//! C ABI over `otfs-core`.
//!
//! Configurations and sweep results are opaque heap handles released with
//! their `*_free` function. Every fallible call returns an [`OtfsStatus`];
//! on failure a description is available from [`otfs_last_error`] until the
//! next failing call on the same thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use otfs_core::equalizer::Equalizer;
use otfs_core::metrics::CsiMode;
use otfs_core::sim::{self, GridPoint, SweepConfig, SweepResult};
use otfs_core::{Error, Scheme};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtfsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidConfig = 4,
    Io = 5,
    Parse = 6,
    Simulation = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtfsScheme {
    Superimposed = 0,
    Embedded = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtfsEqualizer {
    Lmmse = 0,
    Mrc = 1,
}

/// Opaque sweep configuration.
pub struct OtfsConfig(SweepConfig);

/// Opaque sweep result.
pub struct OtfsSweepResult(SweepResult);

/// Metrics of one simulated frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OtfsTrialRecord {
    pub seed: u64,
    pub nmse: f64,
    pub ber: f64,
    pub papr_db: f64,
    pub se: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub iterations: u32,
    pub converged: bool,
}

/// Aggregates of one sweep grid point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtfsPointSummary {
    pub scheme: OtfsScheme,
    pub equalizer: OtfsEqualizer,
    pub passes: u32,
    pub ideal_csi: bool,
    pub alpha: f64,
    pub trials: u64,
    pub nmse: f64,
    pub nmse_ci: f64,
    pub ber: f64,
    pub ber_ci: f64,
    pub papr_mean_db: f64,
    pub papr_p99_db: f64,
    pub se: f64,
    pub se_ci: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> OtfsStatus {
    match err {
        Error::Config(_) => OtfsStatus::InvalidConfig,
        Error::Io { .. } => OtfsStatus::Io,
        Error::Json { .. } | Error::Csv(_) => OtfsStatus::Parse,
        Error::Parameter(_) | Error::Dimension { .. } => OtfsStatus::InvalidArgument,
        _ => OtfsStatus::Simulation,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (OtfsStatus, String)>) -> OtfsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OtfsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            OtfsStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (OtfsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null() -> (OtfsStatus, String) {
    (OtfsStatus::NullPointer, "null pointer argument".into())
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, (OtfsStatus, String)> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|e| {
        (
            OtfsStatus::InvalidUtf8,
            format!("argument is not UTF-8: {e}"),
        )
    })
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn otfs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default configuration. Never null.
#[no_mangle]
pub extern "C" fn otfs_config_default() -> *mut OtfsConfig {
    Box::into_raw(Box::new(OtfsConfig(SweepConfig::default())))
}

/// Parses a JSON configuration; missing fields take defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otfs_config_from_json(
    json: *const c_char,
    out: *mut *mut OtfsConfig,
) -> OtfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let text = str_arg(json)?;
        let cfg: SweepConfig = serde_json::from_str(text)
            .map_err(|e| (OtfsStatus::Parse, format!("config JSON: {e}")))?;
        *out = Box::into_raw(Box::new(OtfsConfig(cfg)));
        Ok(())
    })
}

/// Serializes the configuration to JSON. The returned string must be
/// released with [`otfs_string_free`].
///
/// # Safety
/// `cfg` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otfs_config_to_json(
    cfg: *const OtfsConfig,
    out: *mut *mut c_char,
) -> OtfsStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            return Err(null());
        }
        let text =
            serde_json::to_string(&(*cfg).0).map_err(|e| (OtfsStatus::Parse, e.to_string()))?;
        *out = CString::new(text)
            .map_err(|e| (OtfsStatus::Parse, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn otfs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `cfg` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn otfs_config_set_trials(cfg: *mut OtfsConfig, trials: u64) -> OtfsStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(null)?;
        cfg.0.trials = usize::try_from(trials).map_err(|_| {
            (
                OtfsStatus::InvalidArgument,
                format!("trials {trials} too large"),
            )
        })?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn otfs_config_set_seed(cfg: *mut OtfsConfig, seed: u64) -> OtfsStatus {
    guard(|| {
        cfg.as_mut().ok_or_else(null)?.0.base_seed = seed;
        Ok(())
    })
}

/// Replaces the energy-split grid.
///
/// # Safety
/// `cfg` must be a valid handle and `alphas` point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn otfs_config_set_alphas(
    cfg: *mut OtfsConfig,
    alphas: *const f64,
    len: usize,
) -> OtfsStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(null)?;
        if alphas.is_null() && len > 0 {
            return Err(null());
        }
        cfg.0.alphas = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(alphas, len).to_vec()
        };
        Ok(())
    })
}

/// `OTFS_STATUS_OK` when the configuration is usable; otherwise
/// `OTFS_STATUS_INVALID_CONFIG` with every violation in the error message.
///
/// # Safety
/// `cfg` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn otfs_config_validate(cfg: *const OtfsConfig) -> OtfsStatus {
    guard(|| {
        cfg.as_ref()
            .ok_or_else(null)?
            .0
            .validate()
            .map_err(core_err)
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn otfs_config_free(cfg: *mut OtfsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn scheme(s: OtfsScheme) -> Scheme {
    match s {
        OtfsScheme::Superimposed => Scheme::S1d,
        OtfsScheme::Embedded => Scheme::Ep,
    }
}

fn equalizer(e: OtfsEqualizer) -> Equalizer {
    match e {
        OtfsEqualizer::Lmmse => Equalizer::Lmmse,
        OtfsEqualizer::Mrc => Equalizer::Mrc,
    }
}

/// Simulates one frame with the given seed.
///
/// # Safety
/// `cfg` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otfs_run_trial(
    cfg: *const OtfsConfig,
    scheme_id: OtfsScheme,
    equalizer_id: OtfsEqualizer,
    alpha: f64,
    passes: u32,
    ideal_csi: bool,
    seed: u64,
    out: *mut OtfsTrialRecord,
) -> OtfsStatus {
    guard(|| {
        let cfg = &cfg.as_ref().ok_or_else(null)?.0;
        if out.is_null() {
            return Err(null());
        }
        if passes == 0 {
            return Err((
                OtfsStatus::InvalidArgument,
                "passes must be at least 1".into(),
            ));
        }
        let point = GridPoint {
            scheme: scheme(scheme_id),
            equalizer: equalizer(equalizer_id),
            passes: passes as usize,
            csi: if ideal_csi {
                CsiMode::Ideal
            } else {
                CsiMode::Estimated
            },
            alpha,
        };
        let r = sim::run_trial(cfg, point, seed).map_err(core_err)?;
        *out = OtfsTrialRecord {
            seed: r.seed,
            nmse: r.nmse,
            ber: r.ber,
            papr_db: r.papr_db,
            se: r.se,
            bit_errors: r.bit_errors as u64,
            bits: r.bits as u64,
            iterations: r.iterations as u32,
            converged: r.converged,
        };
        Ok(())
    })
}

/// Runs the full sweep on `threads` workers (0 uses every core).
///
/// # Safety
/// `cfg` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otfs_run_sweep(
    cfg: *const OtfsConfig,
    threads: u32,
    out: *mut *mut OtfsSweepResult,
) -> OtfsStatus {
    guard(|| {
        let cfg = &cfg.as_ref().ok_or_else(null)?.0;
        if out.is_null() {
            return Err(null());
        }
        let res = if threads == 0 {
            sim::run_sweep(cfg)
        } else {
            sim::run_sweep_with_threads(cfg, threads as usize)
        }
        .map_err(core_err)?;
        *out = Box::into_raw(Box::new(OtfsSweepResult(res)));
        Ok(())
    })
}

/// Number of grid points in a result (0 for null).
///
/// # Safety
/// `res` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn otfs_sweep_point_count(res: *const OtfsSweepResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.points.len())
}

/// # Safety
/// `res` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otfs_sweep_point(
    res: *const OtfsSweepResult,
    index: usize,
    out: *mut OtfsPointSummary,
) -> OtfsStatus {
    guard(|| {
        let res = &res.as_ref().ok_or_else(null)?.0;
        if out.is_null() {
            return Err(null());
        }
        let p = res.points.get(index).ok_or_else(|| {
            (
                OtfsStatus::InvalidArgument,
                format!("point {index} out of range 0..{}", res.points.len()),
            )
        })?;
        *out = OtfsPointSummary {
            scheme: match p.scheme {
                Scheme::S1d => OtfsScheme::Superimposed,
                Scheme::Ep => OtfsScheme::Embedded,
            },
            equalizer: match p.equalizer {
                Equalizer::Lmmse => OtfsEqualizer::Lmmse,
                Equalizer::Mrc => OtfsEqualizer::Mrc,
            },
            passes: p.passes as u32,
            ideal_csi: p.csi == CsiMode::Ideal,
            alpha: p.alpha,
            trials: p.trials as u64,
            nmse: p.nmse.mean,
            nmse_ci: p.nmse.ci,
            ber: p.ber.mean,
            ber_ci: p.ber.ci,
            papr_mean_db: p.papr_mean_db,
            papr_p99_db: p.papr_p99_db,
            se: p.se.mean,
            se_ci: p.se.ci,
        };
        Ok(())
    })
}

/// Writes `sweep.csv` and `summary.json` (and `records.csv` when records
/// were kept) into `dir`.
///
/// # Safety
/// `res` must be a valid handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn otfs_sweep_export(
    res: *const OtfsSweepResult,
    dir: *const c_char,
) -> OtfsStatus {
    guard(|| {
        let res = &res.as_ref().ok_or_else(null)?.0;
        let dir = str_arg(dir)?;
        sim::export(res, Path::new(dir)).map_err(core_err)?;
        Ok(())
    })
}

/// # Safety
/// `res` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn otfs_sweep_free(res: *mut OtfsSweepResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
