//! C ABI over the portfolio toolkit: CVaR teacher solves, constraint
//! execution, track metrics, and checkpoint inference behind an opaque
//! handle. Every function returns a `DfStatus`; on any failure the
//! thread-local message from `df_last_error_message` describes it.
//! Buffers are caller-allocated; matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use distfolio::allocators::{project_simplex, solve_cvar_teacher, ScenarioSet, WeightVector};
use distfolio::error::Error;
use distfolio::exec::{clip_renormalize, execute_rebalance, ConstraintLevel, ConstraintSpec};
use distfolio::linalg::Mat;
use distfolio::train::TrainedStudent;

/// Result of every FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Invalid configuration or parameter value.
    InvalidArgument = 2,
    /// Data, shape, or domain violation (including I/O and checkpoints).
    DataError = 3,
    /// Optimization or numerical failure.
    NumericalError = 4,
    /// A string argument was not valid UTF-8.
    Utf8Error = 5,
    /// An internal panic was caught at the boundary.
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).expect("NULs removed"));
}

fn status_of(err: &Error) -> DfStatus {
    // The CLI exit-code classes map one-to-one onto FFI statuses.
    match err.exit_code() {
        2 => DfStatus::InvalidArgument,
        3 => DfStatus::DataError,
        _ => DfStatus::NumericalError,
    }
}

fn fail(err: &Error) -> DfStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn fail_null(what: &str) -> DfStatus {
    set_error(&format!("{what} must not be null"));
    DfStatus::NullArgument
}

/// Run a fallible body, translating panics into `DfStatus::Panic`.
fn guarded(body: impl FnOnce() -> DfStatus) -> DfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            DfStatus::Panic
        }
    }
}

/// Borrow `len` doubles from a raw pointer; null is only legal when
/// `len` is zero.
unsafe fn slice_arg<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], DfStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(fail_null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out_arg<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, DfStatus> {
    if ptr.is_null() {
        return Err(fail_null(what));
    }
    Ok(&mut *ptr)
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn df_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn df_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------------------
// Teacher solve
// ---------------------------------------------------------------------------

/// Solve the long-only CVaR allocation over `n_scenarios` x `n_assets`
/// row-major scenario returns at tail level `alpha`. Writes `n_assets`
/// weights plus the objective (CVaR of loss), the VaR level, and a 0/1
/// convergence-certificate flag.
///
/// # Safety
/// `scenarios` must hold `n_scenarios * n_assets` doubles;
/// `out_weights` must hold `n_assets` doubles; scalar out-pointers must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn df_cvar_teacher_solve(
    scenarios: *const f64,
    n_scenarios: usize,
    n_assets: usize,
    alpha: f64,
    out_weights: *mut f64,
    out_objective: *mut f64,
    out_var_level: *mut f64,
    out_converged: *mut i32,
) -> DfStatus {
    guarded(|| {
        let Some(total) = n_scenarios.checked_mul(n_assets) else {
            set_error("scenario matrix dimensions overflow");
            return DfStatus::InvalidArgument;
        };
        let data = match slice_arg(scenarios, total, "scenarios") {
            Ok(s) => s,
            Err(st) => return st,
        };
        if out_weights.is_null() {
            return fail_null("out_weights");
        }
        let (objective, var_level, converged) = match (
            out_arg(out_objective, "out_objective"),
            out_arg(out_var_level, "out_var_level"),
            out_arg(out_converged, "out_converged"),
        ) {
            (Ok(a), Ok(b), Ok(c)) => (a, b, c),
            (Err(st), _, _) | (_, Err(st), _) | (_, _, Err(st)) => return st,
        };
        let mat = Mat::from_vec(n_scenarios, n_assets, data.to_vec());
        let set = match ScenarioSet::new(mat, alpha) {
            Ok(s) => s,
            Err(e) => return fail(&e),
        };
        let sol = match solve_cvar_teacher(&set) {
            Ok(s) => s,
            Err(e) => return fail(&e),
        };
        std::ptr::copy_nonoverlapping(sol.weights.as_slice().as_ptr(), out_weights, n_assets);
        *objective = sol.objective;
        *var_level = sol.var_level;
        *converged = i32::from(sol.converged);
        DfStatus::Ok
    })
}

/// Empirical CVaR of `losses` at tail level `alpha`: the mean of the
/// worst ceil((1-alpha)*len) losses.
///
/// # Safety
/// `losses` must hold `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn df_empirical_cvar(
    losses: *const f64,
    len: usize,
    alpha: f64,
    out: *mut f64,
) -> DfStatus {
    guarded(|| {
        let l = match slice_arg(losses, len, "losses") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let out = match out_arg(out, "out") {
            Ok(o) => o,
            Err(st) => return st,
        };
        match distfolio::allocators::empirical_cvar(l, alpha) {
            Ok(v) => {
                *out = v;
                DfStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

// ---------------------------------------------------------------------------
// Constraint operations
// ---------------------------------------------------------------------------

/// Euclidean projection of `len` values onto the probability simplex.
///
/// # Safety
/// `v` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn df_project_simplex(v: *const f64, len: usize, out: *mut f64) -> DfStatus {
    guarded(|| {
        let input = match slice_arg(v, len, "v") {
            Ok(s) => s,
            Err(st) => return st,
        };
        if len == 0 {
            set_error("cannot project an empty vector");
            return DfStatus::InvalidArgument;
        }
        if out.is_null() {
            return fail_null("out");
        }
        let w = project_simplex(input);
        std::ptr::copy_nonoverlapping(w.as_ptr(), out, len);
        DfStatus::Ok
    })
}

/// Cap every weight at `w_max` and renormalize to the simplex.
///
/// # Safety
/// `weights` and `out` must each hold `len` doubles; `weights` must
/// already lie on the simplex.
#[no_mangle]
pub unsafe extern "C" fn df_clip_renormalize(
    weights: *const f64,
    len: usize,
    w_max: f64,
    out: *mut f64,
) -> DfStatus {
    guarded(|| {
        let input = match slice_arg(weights, len, "weights") {
            Ok(s) => s,
            Err(st) => return st,
        };
        if out.is_null() {
            return fail_null("out");
        }
        let w = match WeightVector::new(input.to_vec()) {
            Ok(w) => w,
            Err(e) => return fail(&e),
        };
        match clip_renormalize(&w, w_max) {
            Ok(c) => {
                std::ptr::copy_nonoverlapping(c.as_slice().as_ptr(), out, len);
                DfStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Execute a rebalance from `prev` toward `target` under a position cap,
/// a one-way turnover cap, and a proportional cost rate. Writes the
/// executed weights, realized one-way turnover, and cost.
///
/// # Safety
/// `prev`, `target`, and `out_weights` must each hold `len` doubles;
/// scalar out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn df_execute_rebalance(
    prev: *const f64,
    target: *const f64,
    len: usize,
    w_max: f64,
    to_max: f64,
    cost_rate: f64,
    out_weights: *mut f64,
    out_turnover: *mut f64,
    out_cost: *mut f64,
) -> DfStatus {
    guarded(|| {
        let (p, t) = match (slice_arg(prev, len, "prev"), slice_arg(target, len, "target")) {
            (Ok(p), Ok(t)) => (p, t),
            (Err(st), _) | (_, Err(st)) => return st,
        };
        if out_weights.is_null() {
            return fail_null("out_weights");
        }
        let (turnover, cost) =
            match (out_arg(out_turnover, "out_turnover"), out_arg(out_cost, "out_cost")) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(st), _) | (_, Err(st)) => return st,
            };
        let (pw, tw) = match (WeightVector::new(p.to_vec()), WeightVector::new(t.to_vec())) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return fail(&e),
        };
        // L3 carries arbitrary caps; L1 is reserved for transparent specs.
        let spec = ConstraintSpec { level: ConstraintLevel::L3, w_max, to_max, cost_rate };
        match execute_rebalance(&pw, &tw, &spec) {
            Ok(o) => {
                std::ptr::copy_nonoverlapping(o.executed.as_slice().as_ptr(), out_weights, len);
                *turnover = o.turnover;
                *cost = o.cost;
                DfStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

// ---------------------------------------------------------------------------
// Track metrics
// ---------------------------------------------------------------------------

unsafe fn metric1(
    returns: *const f64,
    len: usize,
    out: *mut f64,
    f: impl FnOnce(&[f64]) -> Result<f64, Error>,
) -> DfStatus {
    let r = match slice_arg(returns, len, "returns") {
        Ok(s) => s,
        Err(st) => return st,
    };
    let out = match out_arg(out, "out") {
        Ok(o) => o,
        Err(st) => return st,
    };
    match f(r) {
        Ok(v) => {
            *out = v;
            DfStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Annualized Sharpe ratio (weekly mean over sample std, scaled by
/// sqrt(52)). `*out_defined` is 0 when the std is zero; `*out` is then
/// left untouched.
///
/// # Safety
/// `returns` must hold `len` doubles; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn df_sharpe_annualized(
    returns: *const f64,
    len: usize,
    out: *mut f64,
    out_defined: *mut i32,
) -> DfStatus {
    guarded(|| {
        let r = match slice_arg(returns, len, "returns") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let (out, defined) = match (out_arg(out, "out"), out_arg(out_defined, "out_defined")) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(st), _) | (_, Err(st)) => return st,
        };
        match distfolio::eval::sharpe_annualized(r) {
            Ok(Some(v)) => {
                *out = v;
                *defined = 1;
                DfStatus::Ok
            }
            Ok(None) => {
                *defined = 0;
                DfStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Maximum drawdown of compounded wealth, as a positive fraction.
///
/// # Safety
/// `returns` must hold `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn df_max_drawdown(returns: *const f64, len: usize, out: *mut f64) -> DfStatus {
    guarded(|| metric1(returns, len, out, distfolio::eval::max_drawdown))
}

/// CVaR of weekly returns at `alpha`, reported in return units
/// (negative = tail losses).
///
/// # Safety
/// `returns` must hold `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn df_cvar_report(
    returns: *const f64,
    len: usize,
    alpha: f64,
    out: *mut f64,
) -> DfStatus {
    guarded(|| metric1(returns, len, out, |r| distfolio::eval::cvar_report(r, alpha)))
}

/// Mean weekly return scaled to a 52-week year.
///
/// # Safety
/// `returns` must hold `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn df_annualized_return(
    returns: *const f64,
    len: usize,
    out: *mut f64,
) -> DfStatus {
    guarded(|| metric1(returns, len, out, |r| Ok(distfolio::eval::annualized_return(r))))
}

/// Sample std of weekly returns scaled by sqrt(52).
///
/// # Safety
/// `returns` must hold `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn df_annualized_vol(
    returns: *const f64,
    len: usize,
    out: *mut f64,
) -> DfStatus {
    guarded(|| metric1(returns, len, out, |r| Ok(distfolio::eval::annualized_vol(r))))
}

// ---------------------------------------------------------------------------
// Student checkpoints
// ---------------------------------------------------------------------------

/// Opaque handle to a loaded student checkpoint.
pub struct DfStudent {
    inner: TrainedStudent,
}

/// Load a student checkpoint from a JSON file written by the trainer.
/// On success `*out` owns the handle; release it with `df_student_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn df_student_load(path: *const c_char, out: *mut *mut DfStudent) -> DfStatus {
    guarded(|| {
        if path.is_null() {
            return fail_null("path");
        }
        if out.is_null() {
            return fail_null("out");
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("path is not valid UTF-8");
                return DfStatus::Utf8Error;
            }
        };
        match TrainedStudent::load(std::path::Path::new(path)) {
            Ok(student) => {
                *out = Box::into_raw(Box::new(DfStudent { inner: student }));
                DfStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a handle returned by `df_student_load`. Null is a no-op.
///
/// # Safety
/// `student` must be a handle from `df_student_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn df_student_free(student: *mut DfStudent) {
    if !student.is_null() {
        drop(Box::from_raw(student));
    }
}

/// Flattened feature dimension the student expects; 0 on a null handle.
///
/// # Safety
/// `student` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn df_student_input_dim(student: *const DfStudent) -> usize {
    if student.is_null() {
        return 0;
    }
    (*student).inner.net.spec.input_dim()
}

/// Number of assets the student allocates over; 0 on a null handle.
///
/// # Safety
/// `student` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn df_student_n_assets(student: *const DfStudent) -> usize {
    if student.is_null() {
        return 0;
    }
    (*student).inner.net.spec.output_dim()
}

/// Student variant name ("dnn_sup", "bnn_sandwich", ...); a static
/// string, or null on a null handle.
///
/// # Safety
/// `student` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn df_student_kind(student: *const DfStudent) -> *const c_char {
    if student.is_null() {
        return std::ptr::null();
    }
    match (*student).inner.kind {
        distfolio::train::StudentKind::DnnSup => c"dnn_sup".as_ptr(),
        distfolio::train::StudentKind::BnnSup => c"bnn_sup".as_ptr(),
        distfolio::train::StudentKind::DnnSandwich => c"dnn_sandwich".as_ptr(),
        distfolio::train::StudentKind::BnnSandwich => c"bnn_sandwich".as_ptr(),
    }
}

/// 1 when the student carries variational layers, else 0.
///
/// # Safety
/// `student` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn df_student_is_bayesian(student: *const DfStudent) -> i32 {
    if student.is_null() {
        return 0;
    }
    i32::from((*student).inner.kind.is_bayesian())
}

unsafe fn predict_common(
    student: *const DfStudent,
    x: *const f64,
    x_len: usize,
    out_weights: *mut f64,
    out_len: usize,
    mc: Option<(usize, u64)>,
) -> DfStatus {
    if student.is_null() {
        return fail_null("student");
    }
    let student = &(*student).inner;
    let features = match slice_arg(x, x_len, "x") {
        Ok(s) => s,
        Err(st) => return st,
    };
    if x_len != student.net.spec.input_dim() {
        set_error(&format!(
            "feature length {x_len} does not match the student's input dim {}",
            student.net.spec.input_dim()
        ));
        return DfStatus::DataError;
    }
    let n = student.net.spec.output_dim();
    if out_len != n {
        set_error(&format!("out_len {out_len} does not match {n} assets"));
        return DfStatus::DataError;
    }
    if out_weights.is_null() {
        return fail_null("out_weights");
    }
    let result = match mc {
        None => student.predict(features),
        Some((draws, seed)) => student.predict_mc(features, draws, seed).map(|(w, _)| w),
    };
    match result {
        Ok(w) => {
            std::ptr::copy_nonoverlapping(w.as_slice().as_ptr(), out_weights, n);
            DfStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Deterministic forward pass: raw (unstandardized) features in, simplex
/// weights out. Bayesian students use their mean parameters.
///
/// # Safety
/// `x` must hold `x_len` doubles and `out_weights` must hold `out_len`
/// doubles; `student` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_student_predict(
    student: *const DfStudent,
    x: *const f64,
    x_len: usize,
    out_weights: *mut f64,
    out_len: usize,
) -> DfStatus {
    guarded(|| predict_common(student, x, x_len, out_weights, out_len, None))
}

/// Monte Carlo forward pass averaging `draws` stochastic passes under
/// `seed`; deterministic students return the plain forward pass.
///
/// # Safety
/// Same as `df_student_predict`.
#[no_mangle]
pub unsafe extern "C" fn df_student_predict_mc(
    student: *const DfStudent,
    x: *const f64,
    x_len: usize,
    draws: usize,
    seed: u64,
    out_weights: *mut f64,
    out_len: usize,
) -> DfStatus {
    guarded(|| predict_common(student, x, x_len, out_weights, out_len, Some((draws, seed))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use distfolio::features::N_FEATURES;
    use distfolio::nn::NetworkSpec;
    use distfolio::train::{
        train_supervised, Dataset, LabeledPair, StudentKind, TrainConfig, UnlabeledPair,
    };

    fn last_error() -> String {
        unsafe { CStr::from_ptr(df_last_error_message()).to_str().unwrap().to_string() }
    }

    fn tiny_student(bayesian: bool) -> TrainedStudent {
        let n = 2;
        let d = n * N_FEATURES;
        let mut rng = distfolio::rng::stream(5, "ffi-test");
        use rand::Rng;
        let labeled: Vec<LabeledPair> = (0..8)
            .map(|i| LabeledPair {
                x: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                w_teacher: if i % 2 == 0 { vec![0.7, 0.3] } else { vec![0.4, 0.6] },
                real: false,
            })
            .collect();
        let dataset = Dataset { labeled, unlabeled: Vec::<UnlabeledPair>::new() };
        let kind = if bayesian { StudentKind::BnnSup } else { StudentKind::DnnSup };
        let spec = NetworkSpec::policy(n, &[4], bayesian);
        let config = TrainConfig { model_seed: 3, hidden: vec![4], ..TrainConfig::default() };
        train_supervised(&dataset, spec, &config, 3, kind).unwrap()
    }

    #[test]
    fn teacher_solve_matches_library_call() {
        let mut rng = distfolio::rng::stream(7, "ffi-teacher");
        use rand::Rng;
        let (s, n) = (60, 3);
        let data: Vec<f64> = (0..s * n).map(|_| rng.random_range(-0.05..0.05)).collect();
        let mut w = vec![0.0; n];
        let (mut obj, mut var, mut conv) = (0.0, 0.0, -1);
        let st = unsafe {
            df_cvar_teacher_solve(
                data.as_ptr(),
                s,
                n,
                0.95,
                w.as_mut_ptr(),
                &mut obj,
                &mut var,
                &mut conv,
            )
        };
        assert_eq!(st, DfStatus::Ok);
        let set = ScenarioSet::new(Mat::from_vec(s, n, data), 0.95).unwrap();
        let sol = solve_cvar_teacher(&set).unwrap();
        assert_eq!(w, sol.weights.as_slice());
        assert_eq!(obj, sol.objective);
        assert_eq!(var, sol.var_level);
        assert_eq!(conv, i32::from(sol.converged));
    }

    #[test]
    fn teacher_solve_rejects_bad_alpha_and_null() {
        let data = [0.01, 0.02, -0.01, 0.03];
        let mut w = [0.0; 2];
        let (mut obj, mut var, mut conv) = (0.0, 0.0, 0);
        let st = unsafe {
            df_cvar_teacher_solve(data.as_ptr(), 2, 2, 1.5, w.as_mut_ptr(), &mut obj, &mut var, &mut conv)
        };
        assert_eq!(st, DfStatus::InvalidArgument);
        assert!(last_error().contains("alpha"), "{}", last_error());
        let st = unsafe {
            df_cvar_teacher_solve(
                std::ptr::null(),
                2,
                2,
                0.95,
                w.as_mut_ptr(),
                &mut obj,
                &mut var,
                &mut conv,
            )
        };
        assert_eq!(st, DfStatus::NullArgument);
    }

    #[test]
    fn constraint_ops_roundtrip() {
        let v = [2.0, 0.1, -0.4];
        let mut out = [0.0; 3];
        assert_eq!(unsafe { df_project_simplex(v.as_ptr(), 3, out.as_mut_ptr()) }, DfStatus::Ok);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out.iter().all(|&x| x >= 0.0));

        let w = [0.8, 0.2];
        let mut capped = [0.0; 2];
        assert_eq!(
            unsafe { df_clip_renormalize(w.as_ptr(), 2, 0.6, capped.as_mut_ptr()) },
            DfStatus::Ok
        );
        assert!(capped[0] <= 0.6 + 1e-12);
        assert!((capped.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let prev = [0.5, 0.5];
        let target = [1.0, 0.0];
        let mut exec = [0.0; 2];
        let (mut to, mut cost) = (0.0, 0.0);
        let st = unsafe {
            df_execute_rebalance(
                prev.as_ptr(),
                target.as_ptr(),
                2,
                1.0,
                0.2,
                0.001,
                exec.as_mut_ptr(),
                &mut to,
                &mut cost,
            )
        };
        assert_eq!(st, DfStatus::Ok);
        // The turnover cap binds: only 0.2 of the requested 0.5 moves.
        assert!((to - 0.2).abs() < 1e-9, "turnover {to}");
        assert!((exec[0] - 0.7).abs() < 1e-9, "{exec:?}");
        assert!((cost - 0.2 * 0.001).abs() < 1e-15);

        // A non-simplex previous vector is rejected as data.
        let bad = [0.9, 0.9];
        let st = unsafe {
            df_execute_rebalance(
                bad.as_ptr(),
                target.as_ptr(),
                2,
                1.0,
                1.0,
                0.0,
                exec.as_mut_ptr(),
                &mut to,
                &mut cost,
            )
        };
        assert_eq!(st, DfStatus::DataError);
    }

    #[test]
    fn metric_functions_match_library() {
        let r = [0.01, -0.02, 0.015, 0.0, -0.005, 0.03];
        let mut v = 0.0;
        let mut defined = 0;
        assert_eq!(
            unsafe { df_sharpe_annualized(r.as_ptr(), r.len(), &mut v, &mut defined) },
            DfStatus::Ok
        );
        assert_eq!(defined, 1);
        assert_eq!(v, distfolio::eval::sharpe_annualized(&r).unwrap().unwrap());

        let flat = [0.01; 5];
        assert_eq!(
            unsafe { df_sharpe_annualized(flat.as_ptr(), 5, &mut v, &mut defined) },
            DfStatus::Ok
        );
        assert_eq!(defined, 0, "zero variance leaves Sharpe undefined");

        assert_eq!(unsafe { df_max_drawdown(r.as_ptr(), r.len(), &mut v) }, DfStatus::Ok);
        assert_eq!(v, distfolio::eval::max_drawdown(&r).unwrap());

        assert_eq!(unsafe { df_cvar_report(r.as_ptr(), r.len(), 0.95, &mut v) }, DfStatus::Ok);
        assert_eq!(v, distfolio::eval::cvar_report(&r, 0.95).unwrap());

        assert_eq!(unsafe { df_annualized_return(r.as_ptr(), r.len(), &mut v) }, DfStatus::Ok);
        assert_eq!(v, distfolio::eval::annualized_return(&r));
        assert_eq!(unsafe { df_annualized_vol(r.as_ptr(), r.len(), &mut v) }, DfStatus::Ok);
        assert_eq!(v, distfolio::eval::annualized_vol(&r));

        let one = [0.01];
        assert_eq!(
            unsafe { df_sharpe_annualized(one.as_ptr(), 1, &mut v, &mut defined) },
            DfStatus::DataError,
            "a single observation cannot carry a Sharpe"
        );

        let cvar_losses = [0.5, -0.1, 0.2, 0.9];
        assert_eq!(
            unsafe { df_empirical_cvar(cvar_losses.as_ptr(), 4, 0.95, &mut v) },
            DfStatus::Ok
        );
        assert_eq!(v, distfolio::allocators::empirical_cvar(&cvar_losses, 0.95).unwrap());
    }

    #[test]
    fn student_handle_lifecycle_and_parity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("student.json");
        let student = tiny_student(false);
        student.save(&path).unwrap();

        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle: *mut DfStudent = std::ptr::null_mut();
        assert_eq!(unsafe { df_student_load(c_path.as_ptr(), &mut handle) }, DfStatus::Ok);
        assert!(!handle.is_null());
        assert_eq!(unsafe { df_student_input_dim(handle) }, 2 * N_FEATURES);
        assert_eq!(unsafe { df_student_n_assets(handle) }, 2);
        assert_eq!(unsafe { df_student_is_bayesian(handle) }, 0);
        let kind = unsafe { CStr::from_ptr(df_student_kind(handle)).to_str().unwrap() };
        assert_eq!(kind, "dnn_sup");

        let x = vec![0.3; 2 * N_FEATURES];
        let mut w = [0.0; 2];
        assert_eq!(
            unsafe { df_student_predict(handle, x.as_ptr(), x.len(), w.as_mut_ptr(), 2) },
            DfStatus::Ok
        );
        let expect = student.predict(&x).unwrap();
        assert_eq!(w.as_slice(), expect.as_slice(), "FFI forward must match the library bitwise");

        // Wrong dimensions are rejected without touching the buffer.
        assert_eq!(
            unsafe { df_student_predict(handle, x.as_ptr(), 3, w.as_mut_ptr(), 2) },
            DfStatus::DataError
        );
        assert_eq!(
            unsafe { df_student_predict(handle, x.as_ptr(), x.len(), w.as_mut_ptr(), 5) },
            DfStatus::DataError
        );

        unsafe { df_student_free(handle) };
        unsafe { df_student_free(std::ptr::null_mut()) };
    }

    #[test]
    fn bayesian_mc_is_seed_deterministic_through_ffi() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bnn.json");
        let student = tiny_student(true);
        student.save(&path).unwrap();

        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle: *mut DfStudent = std::ptr::null_mut();
        assert_eq!(unsafe { df_student_load(c_path.as_ptr(), &mut handle) }, DfStatus::Ok);
        assert_eq!(unsafe { df_student_is_bayesian(handle) }, 1);

        let x = vec![-0.2; 2 * N_FEATURES];
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        let mut c = [0.0; 2];
        unsafe {
            assert_eq!(
                df_student_predict_mc(handle, x.as_ptr(), x.len(), 16, 9, a.as_mut_ptr(), 2),
                DfStatus::Ok
            );
            assert_eq!(
                df_student_predict_mc(handle, x.as_ptr(), x.len(), 16, 9, b.as_mut_ptr(), 2),
                DfStatus::Ok
            );
            assert_eq!(
                df_student_predict_mc(handle, x.as_ptr(), x.len(), 16, 10, c.as_mut_ptr(), 2),
                DfStatus::Ok
            );
        }
        assert_eq!(a, b, "same seed, same average");
        assert_ne!(a, c, "different seed moves the Monte Carlo average");
        let expect = student.predict_mc(&x, 16, 9).unwrap().0;
        assert_eq!(a.as_slice(), expect.as_slice());
        unsafe { df_student_free(handle) };
    }

    #[test]
    fn load_failure_reports_path() {
        let c_path = CString::new("/nonexistent/student.json").unwrap();
        let mut handle: *mut DfStudent = std::ptr::null_mut();
        let st = unsafe { df_student_load(c_path.as_ptr(), &mut handle) };
        assert_eq!(st, DfStatus::DataError);
        assert!(handle.is_null());
        assert!(last_error().contains("nonexistent"), "{}", last_error());
    }

    #[test]
    fn generated_header_covers_the_surface() {
        let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("include")
            .join("distfolio.h");
        let text = std::fs::read_to_string(&header).expect("build.rs generates the header");
        for symbol in [
            "df_last_error_message",
            "df_cvar_teacher_solve",
            "df_execute_rebalance",
            "df_sharpe_annualized",
            "df_student_load",
            "df_student_predict_mc",
            "DfStudent",
            "DF_STATUS_OK",
        ] {
            assert!(text.contains(symbol), "header lacks {symbol}");
        }
    }
}
