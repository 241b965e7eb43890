//! C ABI over `mps-core`.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `*_free`. Every fallible call returns an [`MpsStatus`] and, on
//! failure, leaves a message retrievable with [`mps_last_error_message`] on
//! the same thread. Time indices are 1-based, model indices 0-based.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mps_core::config::grid_from_step;
use mps_core::engine::write_step_log;
use mps_core::mcs::{family_at, McsSettings};
use mps_core::{Engine, Error, LossMatrix, MpsConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Numeric = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque loss matrix.
pub struct MpsLossMatrix(LossMatrix);

/// Opaque online engine.
pub struct MpsEngine(Engine);

/// Engine parameters. `grid_step` generates the grid `0, step, ..., 1 - step`;
/// `block_len = 0` selects the automatic block length.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MpsConfigC {
    pub alpha_bar: f64,
    pub lambda_max: f64,
    pub c: f64,
    pub tau: usize,
    pub replicates: usize,
    pub grid_step: f64,
    pub train_n: usize,
    pub block_len: usize,
    pub seed: u64,
}

/// Summary of one online step. `previous_covered` is 1 or 0 for the record
/// resolved by this step and -1 when there was none.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MpsStep {
    pub t: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub beta_prev: f64,
    pub cardinality: usize,
    pub previous_covered: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> MpsStatus {
    match err {
        Error::EmptyFile { .. }
        | Error::Header { .. }
        | Error::RowLength { .. }
        | Error::NonNumeric { .. }
        | Error::NonFiniteField { .. }
        | Error::Csv(_) => MpsStatus::Parse,
        Error::Io(_) | Error::WouldOverwrite { .. } => MpsStatus::Io,
        Error::Singular(_) => MpsStatus::Numeric,
        _ => MpsStatus::InvalidArgument,
    }
}

struct Fail(MpsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail(MpsStatus::Io, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MpsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, recording any failure or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> MpsStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MpsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            MpsStatus::Panic
        }
    }
}

unsafe fn ref_of<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn mut_of<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_of<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn str_of<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MpsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn config_from_c(c: &MpsConfigC) -> Result<MpsConfig, Fail> {
    let grid = grid_from_step(c.grid_step).map_err(|m| Fail(MpsStatus::InvalidArgument, m))?;
    let config = MpsConfig {
        alpha_bar: c.alpha_bar,
        lambda_max: c.lambda_max,
        c: c.c,
        tau: c.tau,
        replicates: c.replicates,
        grid,
        train_n: c.train_n,
        block_len: (c.block_len > 0).then_some(c.block_len),
        seed: c.seed,
    };
    config.validate()?;
    Ok(config)
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fills `out` with the default parameters.
#[no_mangle]
pub unsafe extern "C" fn mps_config_default(out: *mut MpsConfigC) -> MpsStatus {
    guard(|| {
        let out = mut_of(out, "out")?;
        let d = MpsConfig::default();
        let step = d.grid.get(1).copied().unwrap_or(1.0);
        *out = MpsConfigC {
            alpha_bar: d.alpha_bar,
            lambda_max: d.lambda_max,
            c: d.c,
            tau: d.tau,
            replicates: d.replicates,
            grid_step: step,
            train_n: d.train_n,
            block_len: d.block_len.unwrap_or(0),
            seed: d.seed,
        };
        Ok(())
    })
}

/// Creates an empty matrix with `models` columns labelled `m1..mM`.
#[no_mangle]
pub unsafe extern "C" fn mps_loss_matrix_new(
    models: usize,
    out: *mut *mut MpsLossMatrix,
) -> MpsStatus {
    guard(|| {
        let out = mut_of(out, "out")?;
        if models == 0 {
            return Err(Fail(MpsStatus::InvalidArgument, "at least one model is required".into()));
        }
        let lm = LossMatrix::with_models(models)?;
        *out = Box::into_raw(Box::new(MpsLossMatrix(lm)));
        Ok(())
    })
}

/// Reads a loss CSV (header of labels, one row per period).
#[no_mangle]
pub unsafe extern "C" fn mps_loss_matrix_from_csv(
    path: *const c_char,
    out: *mut *mut MpsLossMatrix,
) -> MpsStatus {
    guard(|| {
        let out = mut_of(out, "out")?;
        let lm = LossMatrix::ingest_csv(str_of(path, "path")?)?;
        *out = Box::into_raw(Box::new(MpsLossMatrix(lm)));
        Ok(())
    })
}

/// Appends one row of `len` finite losses; `len` must equal the model count.
#[no_mangle]
pub unsafe extern "C" fn mps_loss_matrix_push_row(
    lm: *mut MpsLossMatrix,
    row: *const f64,
    len: usize,
) -> MpsStatus {
    guard(|| {
        let lm = mut_of(lm, "matrix")?;
        lm.0.push_row(slice_of(row, len, "row")?)?;
        Ok(())
    })
}

/// Number of rows; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn mps_loss_matrix_len(lm: *const MpsLossMatrix) -> usize {
    lm.as_ref().map_or(0, |lm| lm.0.len())
}

/// Number of models; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn mps_loss_matrix_models(lm: *const MpsLossMatrix) -> usize {
    lm.as_ref().map_or(0, |lm| lm.0.models())
}

/// Reads entry `(t, model)`.
#[no_mangle]
pub unsafe extern "C" fn mps_loss_matrix_get(
    lm: *const MpsLossMatrix,
    t: usize,
    model: usize,
    out: *mut f64,
) -> MpsStatus {
    guard(|| {
        let lm = ref_of(lm, "matrix")?;
        let out = mut_of(out, "out")?;
        let row = lm.0.row(t)?;
        *out = *row.get(model).ok_or_else(|| {
            Fail(
                MpsStatus::InvalidArgument,
                format!("model index {model} out of range 0..{}", row.len()),
            )
        })?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mps_loss_matrix_free(lm: *mut MpsLossMatrix) {
    if !lm.is_null() {
        drop(Box::from_raw(lm));
    }
}

/// Model confidence set p-values on rows `1..=t`. `out` must hold one value
/// per model. `block_len = 0` selects the automatic block length.
#[no_mangle]
pub unsafe extern "C" fn mps_mcs_pvalues(
    lm: *const MpsLossMatrix,
    t: usize,
    replicates: usize,
    block_len: usize,
    seed: u64,
    out: *mut f64,
    cap: usize,
) -> MpsStatus {
    guard(|| {
        let lm = ref_of(lm, "matrix")?;
        let m = lm.0.models();
        if out.is_null() {
            return Err(null("out"));
        }
        if cap < m {
            return Err(Fail(
                MpsStatus::BufferTooSmall,
                format!("output holds {cap} values, need {m}"),
            ));
        }
        let settings = McsSettings {
            replicates,
            block_len: (block_len > 0).then_some(block_len),
            seed,
        };
        let family = family_at(&lm.0, t, &settings)?;
        std::slice::from_raw_parts_mut(out, m).copy_from_slice(family.pvalues());
        Ok(())
    })
}

/// Initializes an engine on the first `train_n` rows of `train`. The matrix
/// is copied; the caller keeps ownership of it.
#[no_mangle]
pub unsafe extern "C" fn mps_engine_new(
    train: *const MpsLossMatrix,
    config: *const MpsConfigC,
    out: *mut *mut MpsEngine,
) -> MpsStatus {
    guard(|| {
        let train = ref_of(train, "train")?;
        let config = config_from_c(ref_of(config, "config")?)?;
        let out = mut_of(out, "out")?;
        let engine = Engine::offline_init(train.0.clone(), config)?;
        *out = Box::into_raw(Box::new(MpsEngine(engine)));
        Ok(())
    })
}

/// Observes one row and emits the next set. If `set_out` is non-null it must
/// hold at least one slot per model; the emitted model indices are written
/// in ascending order and `step_out->cardinality` gives their count. Nothing
/// changes if the call fails.
#[no_mangle]
pub unsafe extern "C" fn mps_engine_step(
    engine: *mut MpsEngine,
    row: *const f64,
    len: usize,
    step_out: *mut MpsStep,
    set_out: *mut usize,
    set_cap: usize,
) -> MpsStatus {
    guard(|| {
        let engine = mut_of(engine, "engine")?;
        let m = engine.0.losses().models();
        if !set_out.is_null() && set_cap < m {
            return Err(Fail(
                MpsStatus::BufferTooSmall,
                format!("set buffer holds {set_cap} indices, need {m}"),
            ));
        }
        let row = slice_of(row, len, "row")?;
        let record = engine.0.online_step(row)?;
        let log = engine.0.log();
        let previous_covered = if log.len() >= 2 {
            log[log.len() - 2].covered
        } else {
            engine.0.initial_covered()
        };
        if let Some(step) = step_out.as_mut() {
            *step = MpsStep {
                t: record.t,
                alpha: record.alpha,
                lambda: record.lambda,
                beta_prev: record.beta_prev,
                cardinality: record.cardinality(),
                previous_covered: previous_covered.map_or(-1, i32::from),
            };
        }
        if !set_out.is_null() {
            let dst = std::slice::from_raw_parts_mut(set_out, record.cardinality());
            dst.copy_from_slice(&record.emitted_set);
        }
        Ok(())
    })
}

/// Current penalty weight; NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn mps_engine_lambda(engine: *const MpsEngine) -> f64 {
    engine.as_ref().map_or(f64::NAN, |e| e.0.lambda())
}

/// Current nominal miscoverage rate; NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn mps_engine_alpha(engine: *const MpsEngine) -> f64 {
    engine.as_ref().map_or(f64::NAN, |e| e.0.calibrator().alpha)
}

/// Number of online steps taken; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn mps_engine_steps(engine: *const MpsEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.0.log().len())
}

/// Writes the step log CSV to `path`, replacing any existing file.
#[no_mangle]
pub unsafe extern "C" fn mps_engine_write_log(
    engine: *const MpsEngine,
    path: *const c_char,
) -> MpsStatus {
    guard(|| {
        let engine = ref_of(engine, "engine")?;
        let mut out = BufWriter::new(File::create(str_of(path, "path")?)?);
        write_step_log(engine.0.log(), &mut out)?;
        out.flush()?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mps_engine_free(engine: *mut MpsEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}
