//! C ABI over `qfm-core`.
//!
//! Objects cross the boundary as opaque heap handles created by `*_new` and
//! released by the matching `*_free`. Every fallible call returns a
//! [`QfmStatus`]; on failure `qfm_last_error` describes the cause until the
//! next failing call on the same thread. Array outputs follow one pattern:
//! the call always stores the required length in `*len`, and writes the
//! arrays only when `capacity` is large enough (so a first call with null
//! buffers and zero capacity queries the size).

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qfm_core::circuit::{build_model_circuit, AnsatzKind, Circuit};
use qfm_core::cli::{execute, write_outcome, ExperimentConfig};
use qfm_core::fourier::extract_coefficients;
use qfm_core::rng::task_rng;
use qfm_core::simulator::{evaluate, gradient, Observable, Params};
use qfm_core::spectrum::{build_encoding, full_redundancy, EncodingSpec, Strategy};
use qfm_core::QfmError;

pub const QFM_STRATEGY_PAULI: c_int = 0;
pub const QFM_STRATEGY_EXPONENTIAL: c_int = 1;
pub const QFM_STRATEGY_GOLOMB: c_int = 2;

pub const QFM_ANSATZ_STRONGLY_ENTANGLING: c_int = 0;
pub const QFM_ANSATZ_TWO_DESIGN: c_int = 1;
pub const QFM_ANSATZ_HAAR: c_int = 2;

/// `|0…0⟩⟨0…0|`.
pub const QFM_OBSERVABLE_GLOBAL: c_int = 0;
/// Average of single-qubit `|0⟩⟨0|`.
pub const QFM_OBSERVABLE_LOCAL: c_int = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QfmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Unsupported = 3,
    NotInSpectrum = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Encoding Hamiltonians with their spectrum.
pub struct QfmEncoding {
    spec: EncodingSpec,
}

/// Model circuit, observable and current parameters.
pub struct QfmModel {
    circuit: Circuit,
    obs: Observable,
    params: Params,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: QfmStatus, msg: impl Into<String>) -> QfmStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &QfmError) -> QfmStatus {
    match e {
        QfmError::Unsupported(_) => QfmStatus::Unsupported,
        QfmError::FrequencyNotInSpectrum { .. } => QfmStatus::NotInSpectrum,
        QfmError::Io(_) => QfmStatus::Io,
        _ => QfmStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), QfmStatus>) -> QfmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QfmStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(QfmStatus::Panic, "internal panic"),
    }
}

fn check(r: qfm_core::Result<()>) -> Result<(), QfmStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn lift<T>(r: qfm_core::Result<T>) -> Result<T, QfmStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, QfmStatus> {
    p.as_ref()
        .ok_or_else(|| fail(QfmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, QfmStatus> {
    p.as_mut()
        .ok_or_else(|| fail(QfmStatus::NullPointer, format!("{what} is null")))
}

/// Stores `needed` in `*len` and checks `capacity` and buffers.
unsafe fn reserve(len: *mut usize, needed: usize, capacity: usize, buffers: &[bool]) -> Result<bool, QfmStatus> {
    *deref_mut(len, "len")? = needed;
    if capacity < needed {
        if capacity == 0 {
            return Ok(false);
        }
        return Err(fail(
            QfmStatus::BufferTooSmall,
            format!("capacity {capacity} is below the required {needed}"),
        ));
    }
    if buffers.iter().any(|&null| null) {
        return Err(fail(QfmStatus::NullPointer, "output buffer is null"));
    }
    Ok(true)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qfm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn qfm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a built-in encoding (`QFM_STRATEGY_*`) on `n` qubits with `layers` layers.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfm_encoding_new(strategy: c_int, n: usize, layers: usize, out: *mut *mut QfmEncoding) -> QfmStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let strategy = match strategy {
            QFM_STRATEGY_PAULI => Strategy::Pauli,
            QFM_STRATEGY_EXPONENTIAL => Strategy::Exponential,
            QFM_STRATEGY_GOLOMB => Strategy::Golomb,
            s => return Err(fail(QfmStatus::InvalidArgument, format!("unknown strategy code {s}"))),
        };
        let spec = lift(build_encoding(strategy, n, layers, None))?;
        *out = Box::into_raw(Box::new(QfmEncoding { spec }));
        Ok(())
    })
}

/// # Safety
/// `enc` must be null or a handle from `qfm_encoding_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qfm_encoding_free(enc: *mut QfmEncoding) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}

/// Frequencies (physical, ascending) and redundancies of the spectrum.
///
/// # Safety
/// `enc` must be a live handle; `omega` and `redundancy` must hold
/// `capacity` elements when `capacity > 0`.
#[no_mangle]
pub unsafe extern "C" fn qfm_encoding_spectrum(
    enc: *const QfmEncoding,
    omega: *mut f64,
    redundancy: *mut u64,
    capacity: usize,
    len: *mut usize,
) -> QfmStatus {
    guard(|| {
        let enc = deref(enc, "encoding")?;
        let table = lift(full_redundancy(&enc.spec))?;
        if !reserve(len, table.len(), capacity, &[omega.is_null(), redundancy.is_null()])? {
            return Ok(());
        }
        for (i, (w, r)) in table.iter().enumerate() {
            let r = u64::try_from(r)
                .map_err(|_| fail(QfmStatus::Unsupported, format!("redundancy {r} exceeds 64 bits")))?;
            *omega.add(i) = table.physical(w);
            *redundancy.add(i) = r;
        }
        Ok(())
    })
}

/// Single-qubit-rotation model around `enc` with an ansatz (`QFM_ANSATZ_*`,
/// `reps` = repetitions or depth) and observable (`QFM_OBSERVABLE_*`).
/// Parameters start at zero angles and identity Haar blocks.
///
/// # Safety
/// `enc` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfm_model_new(
    enc: *const QfmEncoding,
    ansatz: c_int,
    reps: usize,
    observable: c_int,
    out: *mut *mut QfmModel,
) -> QfmStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let enc = deref(enc, "encoding")?;
        let kind = match ansatz {
            QFM_ANSATZ_STRONGLY_ENTANGLING => AnsatzKind::StronglyEntangling { reps },
            QFM_ANSATZ_TWO_DESIGN => AnsatzKind::SimplifiedTwoDesign { depth: reps },
            QFM_ANSATZ_HAAR => AnsatzKind::Haar,
            a => return Err(fail(QfmStatus::InvalidArgument, format!("unknown ansatz code {a}"))),
        };
        let n = enc.spec.n_qubits;
        let obs = match observable {
            QFM_OBSERVABLE_GLOBAL => Observable::global_zero(n),
            QFM_OBSERVABLE_LOCAL => Observable::local_zero_average(n),
            o => return Err(fail(QfmStatus::InvalidArgument, format!("unknown observable code {o}"))),
        };
        let circuit = lift(build_model_circuit(&enc.spec, kind))?;
        let params = Params::identity(&circuit);
        *out = Box::into_raw(Box::new(QfmModel { circuit, obs, params }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from `qfm_model_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qfm_model_free(model: *mut QfmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of rotation angles.
///
/// # Safety
/// `model` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfm_model_num_params(model: *const QfmModel, out: *mut usize) -> QfmStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(model, "model")?.circuit.n_params;
        Ok(())
    })
}

/// Draws uniform angles and Haar blocks from `seed`.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qfm_model_randomize(model: *mut QfmModel, seed: u64) -> QfmStatus {
    guard(|| {
        let m = deref_mut(model, "model")?;
        m.params = Params::sample(&m.circuit, &mut task_rng(seed, 0));
        Ok(())
    })
}

/// Copies the current angles out.
///
/// # Safety
/// `model` must be a live handle; `angles` must hold `capacity` elements
/// when `capacity > 0`.
#[no_mangle]
pub unsafe extern "C" fn qfm_model_get_angles(
    model: *const QfmModel,
    angles: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> QfmStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let a = &m.params.angles;
        if reserve(len, a.len(), capacity, &[angles.is_null()])? {
            ptr::copy_nonoverlapping(a.as_ptr(), angles, a.len());
        }
        Ok(())
    })
}

/// Replaces the angles; `len` must equal the parameter count.
///
/// # Safety
/// `model` must be a live handle; `angles` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn qfm_model_set_angles(model: *mut QfmModel, angles: *const f64, len: usize) -> QfmStatus {
    guard(|| {
        let m = deref_mut(model, "model")?;
        if len != m.circuit.n_params {
            return Err(fail(
                QfmStatus::InvalidArgument,
                format!("expected {} angles, got {len}", m.circuit.n_params),
            ));
        }
        let src = deref(angles, "angles")?;
        m.params.angles = std::slice::from_raw_parts(src, len).to_vec();
        Ok(())
    })
}

/// `f(x)` at the current parameters.
///
/// # Safety
/// `model` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfm_model_evaluate(model: *const QfmModel, x: f64, out: *mut f64) -> QfmStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let out = deref_mut(out, "out")?;
        *out = lift(evaluate(&m.circuit, &m.params, &m.obs, x))?;
        Ok(())
    })
}

/// Parameter-shift gradient of `f(x)` with respect to every angle.
///
/// # Safety
/// `model` must be a live handle; `grad` must hold `capacity` elements when
/// `capacity > 0`.
#[no_mangle]
pub unsafe extern "C" fn qfm_model_gradient(
    model: *const QfmModel,
    x: f64,
    grad: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> QfmStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if reserve(len, m.circuit.n_params, capacity, &[grad.is_null()])? {
            let g = lift(gradient(&m.circuit, &m.params, &m.obs, x))?;
            ptr::copy_nonoverlapping(g.as_ptr(), grad, g.len());
        }
        Ok(())
    })
}

/// Fourier coefficients `c_ω` on the full sampling grid (physical ω ascending).
///
/// # Safety
/// `model` must be a live handle; the three arrays must hold `capacity`
/// elements when `capacity > 0`.
#[no_mangle]
pub unsafe extern "C" fn qfm_model_coefficients(
    model: *const QfmModel,
    omega: *mut f64,
    re: *mut f64,
    im: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> QfmStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let cs = lift(extract_coefficients(&m.circuit, &m.params, &m.obs))?;
        if !reserve(len, cs.coeffs.len(), capacity, &[omega.is_null(), re.is_null(), im.is_null()])? {
            return Ok(());
        }
        for (i, (&w, c)) in cs.coeffs.iter().enumerate() {
            *omega.add(i) = cs.grid.physical(w);
            *re.add(i) = c.re;
            *im.add(i) = c.im;
        }
        Ok(())
    })
}

/// Runs an experiment described by a JSON config (the CLI's format, with
/// `subcommand` and `output` set) and writes its files. On success `*summary`
/// receives a string to release with `qfm_string_free`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `summary` null or valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn qfm_run_json(config_json: *const c_char, summary: *mut *mut c_char) -> QfmStatus {
    guard(|| {
        if !summary.is_null() {
            *summary = ptr::null_mut();
        }
        let text = CStr::from_ptr(deref(config_json, "config")?)
            .to_str()
            .map_err(|_| fail(QfmStatus::InvalidArgument, "config is not UTF-8"))?;
        let mut cfg = lift(ExperimentConfig::from_json(text))?;
        let Some(output) = cfg.output.clone() else {
            return Err(fail(QfmStatus::InvalidArgument, "config needs an output path"));
        };
        if cfg.seed.is_none() {
            cfg.seed = Some(0);
        }
        let outcome = lift(execute(&cfg))?;
        check(write_outcome(Some(&output), &outcome))?;
        if !summary.is_null() {
            *summary = CString::new(outcome.summary.replace('\0', " "))
                .expect("interior nuls removed")
                .into_raw();
        }
        Ok(())
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from `qfm_run_json` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qfm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
