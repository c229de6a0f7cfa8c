//! C ABI over `sci-core`.
//!
//! Objects cross the boundary as opaque heap handles that the caller frees
//! with the matching `*_free` function. Every fallible call returns a
//! [`SciStatus`]; on failure the message is kept per thread and can be read
//! with [`sci_last_error`]. Panics are caught and reported as `SCI_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sci_core::eval::bench::{reconstruct_with, SolverSettings};
use sci_core::eval::metrics::{psnr, ssim};
use sci_core::io::{read_cube, write_cube, ScitDtype};
use sci_core::theory::{theorem_check, TheoremCheckConfig, TrialSignals, Verdict};
use sci_core::{
    make_masks, DataCube, MaskKind, MaskStack, Measurement, NoiseModel, SciError, SensingMode, SensingOperator,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SciStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Capacity = 4,
    SingularOperator = 5,
    Decomposition = 6,
    Format = 7,
    Unsupported = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SciMaskKind {
    Bernoulli = 0,
    CoveredBernoulli = 1,
    Gaussian = 2,
    ShiftedBase = 3,
    Conjugate = 4,
}

/// Summary of a Monte Carlo recovery check.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SciTheoryReport {
    pub trials: usize,
    pub successes: usize,
    pub success_frequency: f64,
    pub floor: f64,
    pub margin: f64,
    pub eta: f64,
    pub vacuous: bool,
    pub pass: bool,
}

pub struct SciCube {
    inner: DataCube,
}

pub struct SciMasks {
    inner: MaskStack,
}

pub struct SciOperator {
    inner: SensingOperator,
}

pub struct SciMeasurement {
    inner: Measurement,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &SciError) -> SciStatus {
    match err {
        SciError::InvalidArgument(_) => SciStatus::InvalidArgument,
        SciError::DimensionMismatch(_) => SciStatus::DimensionMismatch,
        SciError::Capacity { .. } => SciStatus::Capacity,
        SciError::SingularOperator { .. } => SciStatus::SingularOperator,
        SciError::Decomposition(_) => SciStatus::Decomposition,
        SciError::Format { .. } => SciStatus::Format,
        SciError::Unsupported(_) => SciStatus::Unsupported,
        SciError::Io { .. } => SciStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Sci(SciError),
    Arg(String),
}

impl From<SciError> for Failure {
    fn from(e: SciError) -> Self {
        Failure::Sci(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> SciStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SciStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            SciStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            SciStatus::InvalidArgument
        }
        Ok(Err(Failure::Sci(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            SciStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize) -> FfiResult<()> {
    if dst.is_null() {
        return Err(Failure::Null("output buffer"));
    }
    if len < src.len() {
        return Err(Failure::Arg(format!("output buffer holds {len} values, {} needed", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn sci_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Process exit code the command line would use for `status` (0 for `SCI_OK`).
#[no_mangle]
pub extern "C" fn sci_status_exit_code(status: SciStatus) -> i32 {
    match status {
        SciStatus::Ok => 0,
        SciStatus::Format | SciStatus::Io => 2,
        SciStatus::SingularOperator | SciStatus::Decomposition => 3,
        _ => 1,
    }
}

/// Copies `nx*ny*nt` values (frame-major, column-major within a frame) into a new cube.
///
/// # Safety
/// `data` must point to `nx*ny*nt` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sci_cube_new(
    nx: usize,
    ny: usize,
    nt: usize,
    data: *const f64,
    out: *mut *mut SciCube,
) -> SciStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let n = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nt))
            .ok_or_else(|| Failure::Arg("cube dims overflow".into()))?;
        let values = slice(data, n, "data")?.to_vec();
        *out = boxed(SciCube {
            inner: DataCube::from_vec(nx, ny, nt, values)?,
        });
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sci_cube_read(path: *const c_char, out: *mut *mut SciCube) -> SciStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = string(path, "path")?;
        *out = boxed(SciCube {
            inner: read_cube(Path::new(path))?,
        });
        Ok(())
    })
}

/// # Safety
/// `cube` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sci_cube_write(cube: *const SciCube, path: *const c_char) -> SciStatus {
    guard(|| {
        let cube = deref(cube, "cube")?;
        let path = string(path, "path")?;
        write_cube(Path::new(path), &cube.inner, ScitDtype::F64)?;
        Ok(())
    })
}

/// # Safety
/// `cube` must be a live handle; the dim pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sci_cube_dims(
    cube: *const SciCube,
    nx: *mut usize,
    ny: *mut usize,
    nt: *mut usize,
) -> SciStatus {
    guard(|| {
        let (a, b, c) = deref(cube, "cube")?.inner.dims();
        *out_ptr(nx, "nx")? = a;
        *out_ptr(ny, "ny")? = b;
        *out_ptr(nt, "nt")? = c;
        Ok(())
    })
}

/// # Safety
/// `cube` must be a live handle; `dst` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sci_cube_copy_data(cube: *const SciCube, dst: *mut f64, len: usize) -> SciStatus {
    guard(|| copy_out(deref(cube, "cube")?.inner.as_slice(), dst, len))
}

/// # Safety
/// `cube` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sci_cube_free(cube: *mut SciCube) {
    free(cube)
}

/// Draws a seeded mask stack. `param` is the open probability for the
/// binary kinds and the row shift for `SCI_MASK_KIND_SHIFTED_BASE`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sci_masks_generate(
    kind: SciMaskKind,
    param: f64,
    nx: usize,
    ny: usize,
    nt: usize,
    seed: u64,
    out: *mut *mut SciMasks,
) -> SciStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let kind = match kind {
            SciMaskKind::Bernoulli => MaskKind::Bernoulli { p: param },
            SciMaskKind::CoveredBernoulli => MaskKind::CoveredBernoulli { p: param },
            SciMaskKind::Gaussian => MaskKind::Gaussian,
            SciMaskKind::ShiftedBase => {
                if !(param >= 0.0 && param.fract() == 0.0) {
                    return Err(Failure::Arg(format!("shift must be a whole number, got {param}")));
                }
                MaskKind::ShiftedBase { step: param as usize }
            }
            SciMaskKind::Conjugate => MaskKind::Conjugate { p: param },
        };
        *out = boxed(SciMasks {
            inner: make_masks(kind, nx, ny, nt, seed)?,
        });
        Ok(())
    })
}

/// # Safety
/// `values` must point to `nx*ny*nt` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sci_masks_from_values(
    nx: usize,
    ny: usize,
    nt: usize,
    values: *const f64,
    out: *mut *mut SciMasks,
) -> SciStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let n = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nt))
            .ok_or_else(|| Failure::Arg("mask dims overflow".into()))?;
        let values = slice(values, n, "values")?.to_vec();
        *out = boxed(SciMasks {
            inner: MaskStack::from_values(nx, ny, nt, values)?,
        });
        Ok(())
    })
}

/// # Safety
/// `masks` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sci_masks_free(masks: *mut SciMasks) {
    free(masks)
}

/// CACTI operator, or CASSI with the given dispersion when `cassi` is true.
/// The masks are copied.
///
/// # Safety
/// `masks` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sci_operator_new(
    masks: *const SciMasks,
    cassi: bool,
    step: usize,
    reference_channel: usize,
    out: *mut *mut SciOperator,
) -> SciStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let masks = deref(masks, "masks")?.inner.clone();
        let mode = if cassi {
            SensingMode::Cassi {
                step,
                reference: reference_channel,
            }
        } else {
            SensingMode::Cacti
        };
        *out = boxed(SciOperator {
            inner: SensingOperator::new(masks, mode)?,
        });
        Ok(())
    })
}

/// # Safety
/// `op` must be a live handle; `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sci_operator_measurement_dims(
    op: *const SciOperator,
    rows: *mut usize,
    cols: *mut usize,
) -> SciStatus {
    guard(|| {
        let (r, c) = deref(op, "op")?.inner.measurement_dims();
        *out_ptr(rows, "rows")? = r;
        *out_ptr(cols, "cols")? = c;
        Ok(())
    })
}

/// # Safety
/// `op` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sci_operator_free(op: *mut SciOperator) {
    free(op)
}

/// Encodes `cube`; adds seeded Gaussian noise when `sigma > 0`.
///
/// # Safety
/// `op` and `cube` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sci_forward(
    op: *const SciOperator,
    cube: *const SciCube,
    sigma: f64,
    seed: u64,
    out: *mut *mut SciMeasurement,
) -> SciStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let op = &deref(op, "op")?.inner;
        let cube = &deref(cube, "cube")?.inner;
        let noise = if sigma > 0.0 {
            NoiseModel::gaussian(sigma, seed)?
        } else {
            NoiseModel::noiseless()
        };
        *out = boxed(SciMeasurement {
            inner: op.forward(cube, &noise)?,
        });
        Ok(())
    })
}

/// Wraps raw detector values for `op`. `sigma` is the noise level assumed by solvers.
///
/// # Safety
/// `data` must point to `len` readable doubles; `op` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sci_measurement_new(
    op: *const SciOperator,
    data: *const f64,
    len: usize,
    sigma: f64,
    out: *mut *mut SciMeasurement,
) -> SciStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let op = &deref(op, "op")?.inner;
        let (rows, cols) = op.measurement_dims();
        let mut m = Measurement::new(rows, cols, slice(data, len, "data")?.to_vec(), op.mode(), op.signal_dims().2)?;
        m.noise_sigma = sigma;
        *out = boxed(SciMeasurement { inner: m });
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle; `dst` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sci_measurement_copy_data(m: *const SciMeasurement, dst: *mut f64, len: usize) -> SciStatus {
    guard(|| copy_out(deref(m, "measurement")?.inner.as_slice(), dst, len))
}

/// # Safety
/// `m` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sci_measurement_free(m: *mut SciMeasurement) {
    free(m)
}

/// Runs a registered solver (`"lsq"`, `"gap-tv"`, `"admm-tv"`, `"gmm"`,
/// `"sparse"`, `"desci"`, `"oracle"`). `max_iters` of 0 keeps the default;
/// a negative `tv_weight` keeps the default. `reference` may be NULL except
/// for the oracle.
///
/// # Safety
/// Handles must be live, `solver` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sci_reconstruct(
    op: *const SciOperator,
    y: *const SciMeasurement,
    solver: *const c_char,
    max_iters: usize,
    tv_weight: f64,
    reference: *const SciCube,
    out: *mut *mut SciCube,
) -> SciStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let op = &deref(op, "op")?.inner;
        let y = &deref(y, "measurement")?.inner;
        let solver = string(solver, "solver")?;
        let reference = reference.as_ref().map(|c| &c.inner);
        let mut settings = SolverSettings::default();
        if max_iters > 0 {
            settings.iterative.max_iters = max_iters;
        }
        if tv_weight >= 0.0 {
            settings.iterative.tv_weight = tv_weight;
        }
        let rec = reconstruct_with(solver, op, y, &settings, reference, None)?;
        *out = boxed(SciCube { inner: rec.cube });
        Ok(())
    })
}

/// PSNR in dB with peak 1, capped at 100 for identical cubes.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sci_psnr(reference: *const SciCube, estimate: *const SciCube, out: *mut f64) -> SciStatus {
    guard(|| {
        let a = &deref(reference, "reference")?.inner;
        let b = &deref(estimate, "estimate")?.inner;
        *out_ptr(out, "out")? = psnr(a, b, 1.0)?;
        Ok(())
    })
}

/// Mean SSIM over frames.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sci_ssim(reference: *const SciCube, estimate: *const SciCube, out: *mut f64) -> SciStatus {
    guard(|| {
        let a = &deref(reference, "reference")?.inner;
        let b = &deref(estimate, "estimate")?.inner;
        *out_ptr(out, "out")? = ssim(a, b)?;
        Ok(())
    })
}

/// Monte Carlo recovery check over a uniform grid codebook with CACTI masks.
/// `codewords` selects exact codebook members instead of perturbed signals.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sci_theorem_check(
    nx: usize,
    ny: usize,
    nt: usize,
    levels: usize,
    trials: usize,
    epsilon: f64,
    seed: u64,
    codewords: bool,
    out: *mut SciTheoryReport,
) -> SciStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let mut cfg = TheoremCheckConfig::new((nx, ny, nt), levels, trials, epsilon, seed);
        if codewords {
            cfg.signals = TrialSignals::Codewords;
        }
        let r = theorem_check(&cfg)?;
        *out = SciTheoryReport {
            trials: r.trials,
            successes: r.successes,
            success_frequency: r.success_frequency,
            floor: r.floor,
            margin: r.margin,
            eta: r.eta,
            vacuous: r.vacuous,
            pass: r.verdict == Verdict::Pass,
        };
        Ok(())
    })
}
