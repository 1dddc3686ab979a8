//! C ABI over `paraxial-tr`.
//!
//! Objects cross the boundary as opaque handles. Constructors write the new
//! handle through an out pointer; each handle type has a `ptr_*_free`.
//! Every fallible call returns a [`PtrStatus`]; the message of the last
//! failure on the calling thread is available from
//! [`ptr_last_error_message`]. Panics never unwind into C: they are caught
//! and reported as [`PtrStatus::Panic`].
//!
//! Field buffers are interleaved `(re, im)` doubles, row-major with the first
//! coordinate fastest, `2 n^2` values for an `n x n` grid.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use paraxial_tr::config::{ExperimentConfig, RunConfig};
use paraxial_tr::moments::{limit_mean_shifted, snr, MomentParams, SnrValue, StrongScattering};
use paraxial_tr::montecarlo::{run_ensemble, EnsembleStats};
use paraxial_tr::timereversal::{EmissionVariant, ExperimentRunner};
use paraxial_tr::{ComplexField, Error, Vec2};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtrStatus {
    Ok = 0,
    NullPointer = 1,
    /// A string argument is not valid UTF-8.
    InvalidArgument = 2,
    /// The config text could not be parsed.
    Config = 3,
    /// A value failed validation.
    Validation = 4,
    /// A quadrature did not converge.
    Numerical = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// A parsed experiment configuration.
pub struct PtrConfig {
    run: RunConfig,
}

/// A complex field on the configuration's grid.
pub struct PtrField {
    field: ComplexField,
}

/// Monte Carlo ensemble statistics.
pub struct PtrEnsemble {
    stats: EnsembleStats,
}

/// Derived parameters of a configuration. Infinite values mean "no
/// scattering".
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtrDerived {
    pub r_0: f64,
    pub l_sca: f64,
    pub depth: f64,
    pub r_tr: f64,
    pub alpha_l: f64,
    pub b_max: f64,
    pub r_max: f64,
    pub snr_closed_form: f64,
}

/// Peak / background intensities and their ratio. `snr` is +infinity
/// without scattering.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtrSnr {
    pub peak_intensity: f64,
    pub background_intensity: f64,
    pub snr: f64,
    pub snr_closed_form: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> PtrStatus {
    match e {
        Error::UnknownKey(_) | Error::MissingKey(_) | Error::ConfigSyntax { .. } => {
            PtrStatus::Config
        }
        Error::Quadrature { .. } => PtrStatus::Numerical,
        Error::Io { .. } | Error::BadDump { .. } => PtrStatus::Io,
        _ => PtrStatus::Validation,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PtrStatus, String)>) -> PtrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            PtrStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PtrStatus::Panic
        }
    }
}

fn lib(e: Error) -> (PtrStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PtrStatus, String) {
    (PtrStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PtrStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        (
            PtrStatus::InvalidArgument,
            format!("`{what}` is not valid UTF-8"),
        )
    })
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (PtrStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (PtrStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn copy_complex(
    values: impl ExactSizeIterator<Item = (f64, f64)>,
    buf: *mut f64,
    len: usize,
) -> Result<(), (PtrStatus, String)> {
    let need = 2 * values.len();
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len < need {
        return Err((
            PtrStatus::BufferTooSmall,
            format!("buffer holds {len} doubles, {need} needed"),
        ));
    }
    // SAFETY: the caller guarantees `buf` points to `len >= need` doubles.
    let out = unsafe { std::slice::from_raw_parts_mut(buf, need) };
    for (i, (re, im)) in values.enumerate() {
        out[2 * i] = re;
        out[2 * i + 1] = im;
    }
    Ok(())
}

fn experiment(cfg: &PtrConfig) -> &ExperimentConfig {
    &cfg.run.experiment
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ptr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns its full length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ptr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses config text (the `key = value` format) into a new handle.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptr_config_parse(
    text: *const c_char,
    out: *mut *mut PtrConfig,
) -> PtrStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let run = RunConfig::parse(text).map_err(lib)?;
        run.experiment.validate().map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(PtrConfig { run })), "out")
    })
}

/// Loads a config file into a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptr_config_load(
    path: *const c_char,
    out: *mut *mut PtrConfig,
) -> PtrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let run = RunConfig::load(std::path::Path::new(path)).map_err(lib)?;
        run.experiment.validate().map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(PtrConfig { run })), "out")
    })
}

/// # Safety
/// `cfg` must be null or a handle from `ptr_config_parse` / `ptr_config_load`
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn ptr_config_free(cfg: *mut PtrConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Grid points per axis of the configuration.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptr_config_grid_n(cfg: *const PtrConfig, out: *mut usize) -> PtrStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        write_out(out, experiment(cfg).grid.n(), "out")
    })
}

/// Derived parameters (mirror radius, mean free path, focal width, shift
/// limits, closed-form SNR).
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptr_config_derived(
    cfg: *const PtrConfig,
    out: *mut PtrDerived,
) -> PtrStatus {
    guard(|| {
        let e = experiment(handle(cfg, "cfg")?);
        let p = MomentParams::from_config(e).map_err(lib)?;
        let s = StrongScattering::new(&p);
        let l_sca = paraxial_tr::scattering_mean_free_path(&e.medium, e.k0)
            .map_err(lib)?
            .value();
        let derived = PtrDerived {
            r_0: e.mirror.r_0,
            l_sca,
            depth: e.scattering_depth(),
            r_tr: s.r_tr,
            alpha_l: s.alpha_l,
            b_max: s.b_max,
            r_max: s.r_max,
            snr_closed_form: if e.medium.is_homogeneous() {
                f64::INFINITY
            } else {
                s.snr
            },
        };
        write_out(out, derived, "out")
    })
}

/// Runs both legs of the experiment through medium realization `index`.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptr_simulate(
    cfg: *const PtrConfig,
    index: u64,
    out: *mut *mut PtrField,
) -> PtrStatus {
    guard(|| {
        let e = experiment(handle(cfg, "cfg")?);
        let mut runner = ExperimentRunner::new(e, vec![EmissionVariant::of(e)]).map_err(lib)?;
        let field = runner.run_index(index).map_err(lib)?.remove(0).u_tr;
        write_out(out, Box::into_raw(Box::new(PtrField { field })), "out")
    })
}

/// # Safety
/// `field` must be null or a live field handle.
#[no_mangle]
pub unsafe extern "C" fn ptr_field_free(field: *mut PtrField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Copies the field into `buf` (`2 n^2` doubles).
///
/// # Safety
/// `field` must be a live field handle; `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ptr_field_copy(
    field: *const PtrField,
    buf: *mut f64,
    len: usize,
) -> PtrStatus {
    guard(|| {
        let f = &handle(field, "field")?.field;
        copy_complex(f.values.iter().map(|v| (v.re, v.im)), buf, len)
    })
}

/// Runs `n >= 2` realizations with the default probe set.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptr_ensemble_run(
    cfg: *const PtrConfig,
    n: usize,
    out: *mut *mut PtrEnsemble,
) -> PtrStatus {
    guard(|| {
        let e = experiment(handle(cfg, "cfg")?);
        let stats = run_ensemble(e, n).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(PtrEnsemble { stats })), "out")
    })
}

/// # Safety
/// `ens` must be null or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn ptr_ensemble_free(ens: *mut PtrEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}

/// Ensemble mean field into `buf` (`2 n^2` doubles).
///
/// # Safety
/// `ens` must be a live ensemble handle; `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ptr_ensemble_mean(
    ens: *const PtrEnsemble,
    buf: *mut f64,
    len: usize,
) -> PtrStatus {
    guard(|| {
        let s = &handle(ens, "ens")?.stats;
        copy_complex(s.mean_field.values.iter().map(|v| (v.re, v.im)), buf, len)
    })
}

/// Ensemble variance `E|u - E u|^2` into `buf` as `(var, 0)` pairs.
///
/// # Safety
/// `ens` must be a live ensemble handle; `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ptr_ensemble_variance(
    ens: *const PtrEnsemble,
    buf: *mut f64,
    len: usize,
) -> PtrStatus {
    guard(|| {
        let s = &handle(ens, "ens")?.stats;
        copy_complex(s.variance_field.values.iter().map(|&v| (v, 0.0)), buf, len)
    })
}

/// Limit mean refocused field at offset `(x1, x2)` from the source, with the
/// configuration's linear phase.
///
/// # Safety
/// `cfg` must be a live config handle; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptr_moments_mean(
    cfg: *const PtrConfig,
    x1: f64,
    x2: f64,
    re: *mut f64,
    im: *mut f64,
) -> PtrStatus {
    guard(|| {
        let e = experiment(handle(cfg, "cfg")?);
        let p = MomentParams::from_config(e).map_err(lib)?;
        let v = limit_mean_shifted(Vec2::new(x1, x2), e.source_offset, e.shift, &p)
            .map_err(lib)?
            .value;
        write_out(re, v.re, "re")?;
        write_out(im, v.im, "im")
    })
}

/// Peak and background intensities and the SNR for a centered source.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptr_moments_snr(cfg: *const PtrConfig, out: *mut PtrSnr) -> PtrStatus {
    guard(|| {
        let e = experiment(handle(cfg, "cfg")?);
        let p = MomentParams::from_config(e).map_err(lib)?;
        let r = snr(&p).map_err(lib)?;
        let value = match r.quadrature {
            SnrValue::Finite(v) => v,
            SnrValue::Infinite => f64::INFINITY,
        };
        let closed = if e.medium.is_homogeneous() {
            f64::INFINITY
        } else {
            r.closed_form
        };
        write_out(
            out,
            PtrSnr {
                peak_intensity: r.peak.value,
                background_intensity: r.background.value,
                snr: value,
                snr_closed_form: closed,
            },
            "out",
        )
    })
}
