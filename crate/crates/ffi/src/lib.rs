//! C interface to `drn-core`.
//!
//! Networks, ReLU nets and trainers are opaque heap handles created by a
//! `*_new`/`*_load`/`*_compile` call and released with the matching
//! `*_free`. Every fallible function returns a [`DrnStatus`]; on failure the
//! message is kept per thread and can be copied out with
//! [`drn_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use drn_core::compile::{self, CompileConfig};
use drn_core::ep::{EpConfig, Trainer};
use drn_core::model::{random_drn, DrnParams};
use drn_core::relu::ReluNet;
use drn_core::solver::{self, SolverConfig};
use drn_core::{netlist, DrnError};
use ndarray::ArrayView2;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    IsolatedNode = 4,
    Numeric = 5,
    NotConverged = 6,
    Format = 7,
    Io = 8,
    Dataset = 9,
    Panic = 10,
}

/// Steady-state certificate returned by [`drn_solve`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DrnCertificate {
    pub kcl_residual_max: f64,
    pub diode_feasible: bool,
    pub energy: f64,
    pub iterations: usize,
    pub last_delta: f64,
}

/// Training hyperparameters. `lr` points to one rate per layer.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DrnEpConfig {
    pub beta: f64,
    pub lr: *const f64,
    pub lr_len: usize,
    pub momentum: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub t_inference: usize,
    pub t_nudge: usize,
}

pub struct DrnNetwork(DrnParams);

pub struct DrnReluNet(ReluNet);

pub struct DrnTrainer(Trainer);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure {
    status: DrnStatus,
    message: String,
}

impl Failure {
    fn new(status: DrnStatus, message: impl Into<String>) -> Self {
        Failure { status, message: message.into() }
    }

    fn null(what: &str) -> Self {
        Failure::new(DrnStatus::NullPointer, format!("{what} is null"))
    }
}

fn status_of(e: &DrnError) -> DrnStatus {
    match e {
        DrnError::Dimension(_) => DrnStatus::Dimension,
        DrnError::InvalidParameter(_) | DrnError::DegenerateLayer { .. } => DrnStatus::InvalidArgument,
        DrnError::IsolatedNode { .. } => DrnStatus::IsolatedNode,
        DrnError::NonFinite(_) | DrnError::NumericFailure { .. } => DrnStatus::Numeric,
        DrnError::NotConverged { .. } => DrnStatus::NotConverged,
        DrnError::Format { .. } | DrnError::Netlist { .. } | DrnError::Csv(_) | DrnError::Json(_) => DrnStatus::Format,
        DrnError::Io(_) => DrnStatus::Io,
        DrnError::Dataset(_) => DrnStatus::Dataset,
        DrnError::Batch { source, .. } => status_of(source),
    }
}

impl From<DrnError> for Failure {
    fn from(e: DrnError) -> Self {
        Failure::new(status_of(&e), e.to_string())
    }
}

fn set_last_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

/// Runs `f`, records any failure or panic and converts it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DrnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            DrnStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(failure.message);
            failure.status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            DrnStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn c_path<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(DrnStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn matrix<'a>(data: *const f64, rows: usize, cols: usize) -> Result<ArrayView2<'a, f64>, Failure> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure::new(DrnStatus::Dimension, "matrix size overflows"))?;
    let values = slice(data, len, "matrix")?;
    ArrayView2::from_shape((rows, cols), values).map_err(|e| Failure::new(DrnStatus::Dimension, e.to_string()))
}

/// Copies the calling thread's last error message (NUL-terminated,
/// truncated to `cap` bytes) into `buf` and returns the full message length
/// plus one. Pass `buf = NULL` to query the size.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn drn_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let message = e.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn drn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Random network with leaks off and unit gains.
///
/// # Safety
/// `widths` must point to `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drn_network_random(
    widths: *const usize,
    len: usize,
    seed: u64,
    out: *mut *mut DrnNetwork,
) -> DrnStatus {
    guard(|| {
        let widths = slice(widths, len, "widths")?;
        emit(out, DrnNetwork(random_drn(widths, seed)?))
    })
}

/// Loads a binary checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drn_network_load(path: *const c_char, out: *mut *mut DrnNetwork) -> DrnStatus {
    guard(|| emit(out, DrnNetwork(DrnParams::load(c_path(path)?)?)))
}

/// # Safety
/// `net` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn drn_network_save(net: *const DrnNetwork, path: *const c_char) -> DrnStatus {
    guard(|| Ok(borrow(net, "network")?.0.save(c_path(path)?)?))
}

/// Loads a text netlist.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drn_network_load_netlist(path: *const c_char, out: *mut *mut DrnNetwork) -> DrnStatus {
    guard(|| emit(out, DrnNetwork(netlist::load_netlist(c_path(path)?)?)))
}

/// # Safety
/// `net` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn drn_network_save_netlist(net: *const DrnNetwork, path: *const c_char) -> DrnStatus {
    guard(|| Ok(netlist::save_netlist(&borrow(net, "network")?.0, c_path(path)?)?))
}

/// Replaces the input and bias gains `A^(0) ..= A^(L-1)`.
///
/// # Safety
/// `net` must be a live handle; `gains` must point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn drn_network_set_gains(net: *mut DrnNetwork, gains: *const f64, len: usize) -> DrnStatus {
    guard(|| {
        let net = borrow_mut(net, "network")?;
        let gains = slice(gains, len, "gains")?.to_vec();
        net.0 = net.0.clone().with_gains(gains)?;
        Ok(())
    })
}

/// Number of conductive layers `L`, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn drn_network_num_layers(net: *const DrnNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.num_layers())
}

/// Node count of `layer` (`0..=L`), or 0 when out of range.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn drn_network_width(net: *const DrnNetwork, layer: usize) -> usize {
    net.as_ref().and_then(|n| n.0.widths().get(layer).copied()).unwrap_or(0)
}

/// Raw input dimension (half the input nodes, minus the bias pair).
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn drn_network_input_dim(net: *const DrnNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.input_dim())
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn drn_network_free(net: *mut DrnNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Relaxes the network on a row-major `batch × input_dim` input matrix and
/// writes the `batch × output_dim` output potentials to `out`.
///
/// With `tol > 0` the solver runs until the largest potential change falls
/// below `tol` (at most `max_iterations` sweeps, otherwise
/// `DRN_STATUS_NOT_CONVERGED`); with `tol <= 0` it runs exactly
/// `max_iterations` sweeps. `cert` may be null.
///
/// # Safety
/// `inputs` must hold `batch * input_dim` values, `out` must have room for
/// `out_len` values and `cert` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn drn_solve(
    net: *const DrnNetwork,
    inputs: *const f64,
    batch: usize,
    input_dim: usize,
    max_iterations: usize,
    tol: f64,
    out: *mut f64,
    out_len: usize,
    cert: *mut DrnCertificate,
) -> DrnStatus {
    guard(|| {
        let params = &borrow(net, "network")?.0;
        let xs = matrix(inputs, batch, input_dim)?;
        let needed = batch * params.output_dim();
        if out_len < needed {
            return Err(Failure::new(
                DrnStatus::Dimension,
                format!("output buffer holds {out_len} values, {needed} needed"),
            ));
        }
        if out.is_null() && needed > 0 {
            return Err(Failure::null("output buffer"));
        }
        let cfg = if tol > 0.0 {
            SolverConfig::converged(tol, max_iterations)
        } else {
            SolverConfig::fixed(max_iterations)
        };
        let (state, c) = solver::solve_steady_state(params, xs, &cfg)?;
        for (i, v) in state.output().iter().enumerate() {
            *out.add(i) = *v;
        }
        if let Some(cert) = cert.as_mut() {
            *cert = DrnCertificate {
                kcl_residual_max: c.kcl_residual_max,
                diode_feasible: c.diode_feasibility,
                energy: c.energy_value,
                iterations: c.iterations,
                last_delta: c.last_delta,
            };
        }
        Ok(())
    })
}

/// Loads a ReLU network weight file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drn_relu_load(path: *const c_char, out: *mut *mut DrnReluNet) -> DrnStatus {
    guard(|| emit(out, DrnReluNet(ReluNet::load(c_path(path)?)?)))
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn drn_relu_free(net: *mut DrnReluNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Compiles a ReLU network into a resistive network at scale `gamma`.
///
/// # Safety
/// `relu` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drn_compile(
    relu: *const DrnReluNet,
    gamma: f64,
    include_output_leaks: bool,
    out: *mut *mut DrnNetwork,
) -> DrnStatus {
    guard(|| {
        let relu = &borrow(relu, "relu net")?.0;
        let cfg = CompileConfig { gamma, include_output_leaks };
        emit(out, DrnNetwork(compile::compile(relu, &cfg)?))
    })
}

/// Starts training from a copy of `net`.
///
/// # Safety
/// `net` and `cfg` must be live; `cfg.lr` must point to `cfg.lr_len`
/// values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drn_trainer_new(
    net: *const DrnNetwork,
    cfg: *const DrnEpConfig,
    out: *mut *mut DrnTrainer,
) -> DrnStatus {
    guard(|| {
        let params = borrow(net, "network")?.0.clone();
        let c = borrow(cfg, "config")?;
        let ep = EpConfig {
            beta: c.beta,
            lr: slice(c.lr, c.lr_len, "learning rates")?.to_vec(),
            momentum: c.momentum,
            lr_decay: c.lr_decay,
            batch_size: c.batch_size,
            epochs: 1,
            t_inference: c.t_inference,
            t_nudge: c.t_nudge,
        };
        emit(out, DrnTrainer(Trainer::new(params, ep)?))
    })
}

/// One free phase, nudge phase and update on a minibatch. `errors` (may be
/// null) receives the number of misclassified rows of the free phase.
///
/// # Safety
/// `inputs` must hold `batch * input_dim` values, `labels` `batch` values.
#[no_mangle]
pub unsafe extern "C" fn drn_trainer_step(
    trainer: *mut DrnTrainer,
    inputs: *const f64,
    labels: *const u8,
    batch: usize,
    input_dim: usize,
    errors: *mut usize,
) -> DrnStatus {
    guard(|| {
        let trainer = &mut borrow_mut(trainer, "trainer")?.0;
        let xs = matrix(inputs, batch, input_dim)?;
        let labels = slice(labels, batch, "labels")?;
        let outcome = trainer.step(xs, labels)?;
        if let Some(e) = errors.as_mut() {
            *e = outcome.errors;
        }
        Ok(())
    })
}

/// Copies the trainer's current network into a new handle.
///
/// # Safety
/// `trainer` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drn_trainer_network(trainer: *const DrnTrainer, out: *mut *mut DrnNetwork) -> DrnStatus {
    guard(|| emit(out, DrnNetwork(borrow(trainer, "trainer")?.0.params().clone())))
}

/// # Safety
/// `trainer` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn drn_trainer_free(trainer: *mut DrnTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}
