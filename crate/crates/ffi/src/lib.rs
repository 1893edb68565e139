//! C ABI over `lsqopt`.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `*_free`. Every fallible call returns an [`LsqoptStatus`] and,
//! on failure, stores a message retrievable with [`lsqopt_last_error`] on the
//! same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use lsqopt::bounds::bound_report;
use lsqopt::linalg::{normal_solve, DenseMatrix};
use lsqopt::optim::{run_optimizer, Algorithm, BoundsChoice, EpsilonChoice, RunConfig, RunRecord, StepSizeRule};
use lsqopt::problem::{generate_instance, Decay, LlspInstance, ProblemSpec};
use lsqopt::rng::rng_from_seed;
use lsqopt::sampling::squared_norm_probs;
use lsqopt::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsqoptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    Numerical = 5,
    RankDeficient = 6,
    Divergence = 7,
    Parse = 8,
    Format = 9,
    Experiment = 10,
    Io = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsqoptDecay {
    Exponential = 0,
    Algebraic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsqoptAlgorithm {
    SgaRmsprop = 0,
    Rmsprop = 1,
    Sgd = 2,
    #[allow(clippy::upper_case_acronyms)]
    RMSP2SGD = 3,
}

/// Synthetic instance parameters. `noise_radius > 0` makes the instance inconsistent.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LsqoptProblemSpec {
    pub decay: LsqoptDecay,
    pub kappa: f64,
    pub q: f64,
    pub lambda_d: f64,
    pub n: usize,
    pub d: usize,
    pub noise_radius: f64,
    pub seed: u64,
}

/// Options of a single run. Zero or negative values select the defaults noted per field.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LsqoptRunOptions {
    pub algorithm: LsqoptAlgorithm,
    pub batch_size: usize,
    /// 1, 2 or 3; 0 uses `epsilon` instead.
    pub epsilon_preset: u8,
    pub epsilon: f64,
    /// ≤ 0: derived from the first gradient with `u_upper_decade`.
    pub u_upper: f64,
    /// ≤ 0: `u_upper / u_ratio`.
    pub u_lower: f64,
    pub u_ratio: f64,
    pub u_upper_decade: i32,
    /// ≤ 0: rule chosen by algorithm and batch regime.
    pub eta: f64,
    pub max_iters: usize,
    /// ≤ 0: run all `max_iters` steps.
    pub tol: f64,
    pub seed: u64,
}

/// Closed-form bounds for one configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LsqoptBounds {
    pub sigma: f64,
    pub weighted_max: f64,
    pub eps_max_theorem: f64,
    pub eps_max_corollary: f64,
    pub batch_min: u64,
    pub rate_bound: f64,
    pub h_bound: f64,
    pub confusion_radius: f64,
}

/// Scalar results of a run; `-1` marks an absent count.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LsqoptRunSummary {
    pub iterations: usize,
    pub iters_to_converge: i64,
    pub switch_iter: i64,
    pub final_rel_error: f64,
    pub trace_len: usize,
    pub u_lower: f64,
    pub u_upper: f64,
    pub eta: f64,
    pub wall_ms: f64,
}

/// Opaque instance handle.
pub struct LsqoptInstance(LlspInstance);

/// Opaque run handle.
pub struct LsqoptRun(RunRecord);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> LsqoptStatus {
    match e {
        Error::Config(_) => LsqoptStatus::Config,
        Error::Domain(_) => LsqoptStatus::Domain,
        Error::Numerical(_) => LsqoptStatus::Numerical,
        Error::RankDeficient { .. } => LsqoptStatus::RankDeficient,
        Error::Divergence { .. } => LsqoptStatus::Divergence,
        Error::Parse { .. } => LsqoptStatus::Parse,
        Error::Format(_) => LsqoptStatus::Format,
        Error::Experiment(_) => LsqoptStatus::Experiment,
        Error::Io { .. } => LsqoptStatus::Io,
    }
}

struct Failure(LsqoptStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

/// Runs `f`, converting errors and panics into a status plus a stored message.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> LsqoptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            LsqoptStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LsqoptStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(LsqoptStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> FfiResult<PathBuf> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(LsqoptStatus::InvalidUtf8, "path is not UTF-8".into()))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> FfiResult<()> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < src.len() {
        return Err(Failure(
            LsqoptStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

fn boxed_out<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lsqopt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated, truncated
/// to `len`). Returns the full message length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_last_error(buf: *mut c_char, len: usize) -> usize {
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

/// Generates a synthetic instance.
///
/// # Safety
/// `spec` must point to a valid spec and `out` to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_instance_generate(
    spec: *const LsqoptProblemSpec,
    out: *mut *mut LsqoptInstance,
) -> LsqoptStatus {
    guard(|| {
        let s = handle(spec, "spec")?;
        let decay = match s.decay {
            LsqoptDecay::Exponential => Decay::Exponential,
            LsqoptDecay::Algebraic => Decay::Algebraic,
        };
        let mut p = ProblemSpec::new(decay, s.kappa, s.q, s.n, s.d, s.seed);
        p.lambda_d = s.lambda_d;
        if s.noise_radius > 0.0 {
            p = p.inconsistent(s.noise_radius);
        }
        boxed_out(out, LsqoptInstance(generate_instance(&p)?))
    })
}

/// Builds an instance from a row-major `n × d` matrix and right-hand side; `x*` is
/// the least-squares solution.
///
/// # Safety
/// `a` must hold `n·d` values, `b` must hold `n`, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_instance_from_data(
    n: usize,
    d: usize,
    a: *const f64,
    b: *const f64,
    out: *mut *mut LsqoptInstance,
) -> LsqoptStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(null("data"));
        }
        let len = n
            .checked_mul(d)
            .ok_or_else(|| Failure(LsqoptStatus::Config, "dimensions overflow".into()))?;
        let a = DenseMatrix::new(n, d, std::slice::from_raw_parts(a, len).to_vec())?;
        let b = std::slice::from_raw_parts(b, n).to_vec();
        let x_star = normal_solve(&a, &b)?;
        boxed_out(out, LsqoptInstance(LlspInstance::new(a, b, x_star, "data")?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_instance_load(path: *const c_char, out: *mut *mut LsqoptInstance) -> LsqoptStatus {
    guard(|| {
        let path = path_arg(path)?;
        boxed_out(out, LsqoptInstance(lsqopt::io::load_instance(path)?))
    })
}

/// # Safety
/// `inst` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_instance_save(inst: *const LsqoptInstance, path: *const c_char) -> LsqoptStatus {
    guard(|| {
        let inst = handle(inst, "instance")?;
        lsqopt::io::save_instance(&inst.0, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `inst` must be a live handle; `n` and `d` may be null.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_instance_dims(
    inst: *const LsqoptInstance,
    n: *mut usize,
    d: *mut usize,
) -> LsqoptStatus {
    guard(|| {
        let inst = handle(inst, "instance")?;
        if !n.is_null() {
            *n = inst.0.n();
        }
        if !d.is_null() {
            *d = inst.0.d();
        }
        Ok(())
    })
}

/// Copies `x*` into `out`, which must hold at least `d` values.
///
/// # Safety
/// `inst` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_instance_x_star(
    inst: *const LsqoptInstance,
    out: *mut f64,
    len: usize,
) -> LsqoptStatus {
    guard(|| copy_out(&handle(inst, "instance")?.0.x_star, out, len))
}

/// # Safety
/// `inst` must be null or a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_instance_free(inst: *mut LsqoptInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Evaluates the bounds at squared-norm sampling.
///
/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_bounds(
    inst: *const LsqoptInstance,
    batch_size: usize,
    u_lower: f64,
    u_upper: f64,
    out: *mut LsqoptBounds,
) -> LsqoptStatus {
    guard(|| {
        let inst = &handle(inst, "instance")?.0;
        if out.is_null() {
            return Err(null("output"));
        }
        let dist = squared_norm_probs(&inst.spectral)?;
        let r = bound_report(inst, &dist, batch_size, u_lower, u_upper)?;
        *out = LsqoptBounds {
            sigma: r.sigma,
            weighted_max: r.weighted_max,
            eps_max_theorem: r.eps_max_theorem,
            eps_max_corollary: r.eps_max_corollary,
            batch_min: r.batch_min,
            rate_bound: r.rate_bound,
            h_bound: r.h_bound,
            confusion_radius: r.confusion_radius,
        };
        Ok(())
    })
}

/// Defaults: SGA-RMSProp, B = 50, first ε preset, automatic bounds (decade 2, ratio 5),
/// 10⁴ iterations, tolerance 10⁻⁴, seed 0.
#[no_mangle]
pub extern "C" fn lsqopt_run_options_default() -> LsqoptRunOptions {
    LsqoptRunOptions {
        algorithm: LsqoptAlgorithm::SgaRmsprop,
        batch_size: 50,
        epsilon_preset: 1,
        epsilon: 0.0,
        u_upper: 0.0,
        u_lower: 0.0,
        u_ratio: 5.0,
        u_upper_decade: 2,
        eta: 0.0,
        max_iters: 10_000,
        tol: lsqopt::optim::DEFAULT_TOL,
        seed: 0,
    }
}

fn run_config(o: &LsqoptRunOptions) -> RunConfig {
    let algo = match o.algorithm {
        LsqoptAlgorithm::SgaRmsprop => Algorithm::SgaRmsprop,
        LsqoptAlgorithm::Rmsprop => Algorithm::Rmsprop,
        LsqoptAlgorithm::Sgd => Algorithm::Sgd,
        LsqoptAlgorithm::RMSP2SGD => Algorithm::Rmsp2Sgd,
    };
    let mut cfg = RunConfig::new(algo, o.batch_size);
    cfg.epsilon = match o.epsilon_preset {
        0 => EpsilonChoice::Value(o.epsilon),
        p => EpsilonChoice::Preset(p),
    };
    cfg.bounds = if o.u_upper > 0.0 {
        BoundsChoice::Fixed {
            u_lower: if o.u_lower > 0.0 {
                o.u_lower
            } else {
                o.u_upper / o.u_ratio
            },
            u_upper: o.u_upper,
        }
    } else {
        BoundsChoice::Auto {
            decade: o.u_upper_decade,
            ratio: o.u_ratio,
        }
    };
    if o.eta > 0.0 {
        cfg.eta_rule = Some(StepSizeRule::Fixed(o.eta));
    }
    cfg.stop.max_iters = o.max_iters;
    cfg.stop.tol = (o.tol > 0.0).then_some(o.tol);
    cfg
}

/// Runs one optimization with mini-batches drawn at squared-norm probabilities.
///
/// # Safety
/// `inst` must be a live handle, `options` valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_run(
    inst: *const LsqoptInstance,
    options: *const LsqoptRunOptions,
    out: *mut *mut LsqoptRun,
) -> LsqoptStatus {
    guard(|| {
        let inst = &handle(inst, "instance")?.0;
        let o = handle(options, "options")?;
        if o.u_ratio <= 1.0 && o.u_upper <= 0.0 {
            return Err(Failure(
                LsqoptStatus::Config,
                format!("u_ratio must exceed 1, got {}", o.u_ratio),
            ));
        }
        let dist = squared_norm_probs(&inst.spectral)?;
        let rec = run_optimizer(inst, &dist, &run_config(o), &mut rng_from_seed(o.seed), None)?;
        boxed_out(out, LsqoptRun(rec))
    })
}

/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_run_summary(run: *const LsqoptRun, out: *mut LsqoptRunSummary) -> LsqoptStatus {
    guard(|| {
        let r = &handle(run, "run")?.0;
        if out.is_null() {
            return Err(null("output"));
        }
        let count = |v: Option<usize>| v.map(|k| k as i64).unwrap_or(-1);
        *out = LsqoptRunSummary {
            iterations: r.iterations,
            iters_to_converge: count(r.iters_to_converge),
            switch_iter: count(r.switch_iter),
            final_rel_error: r.final_rel_error(),
            trace_len: r.trace.len(),
            u_lower: r.hyper.u_lower,
            u_upper: r.hyper.u_upper,
            eta: r.eta,
            wall_ms: r.wall_ms,
        };
        Ok(())
    })
}

/// Copies the relative-error trace; `len` must be at least `trace_len`.
///
/// # Safety
/// `run` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_run_trace(run: *const LsqoptRun, out: *mut f64, len: usize) -> LsqoptStatus {
    guard(|| copy_out(&handle(run, "run")?.0.trace, out, len))
}

/// Copies the final iterate; `len` must be at least `d`.
///
/// # Safety
/// `run` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_run_final_x(run: *const LsqoptRun, out: *mut f64, len: usize) -> LsqoptStatus {
    guard(|| copy_out(&handle(run, "run")?.0.final_x, out, len))
}

/// # Safety
/// `run` must be null or a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lsqopt_run_free(run: *mut LsqoptRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
