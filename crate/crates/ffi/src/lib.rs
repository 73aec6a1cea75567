//! C interface to the `aihs` library.
//!
//! Every fallible function returns an [`AihsStatus`]; on failure the message
//! is kept per thread and read with [`aihs_last_error`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `_free` function. Strings returned to the caller are freed with
//! [`aihs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use aihs::chains::{self, ChainOutcome, ChainStart, ChainTolerances};
use aihs::config::RunConfig;
use aihs::halfspace::{self, HalfSpaceCertificate};
use aihs::linalg::{CMatrix, CVector, C64};
use aihs::operator::{build_operator, OperatorModel, OperatorSpec};
use aihs::report::{self, Status};
use aihs::resolvent::{self, ResolventMethod};
use aihs::{duality, AihsError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AihsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    DegenerateAngle = 5,
    ChainTerminated = 6,
    Audit = 7,
    Io = 8,
    Panic = 9,
}

/// Opaque operator handle.
pub struct AihsOperator {
    model: OperatorModel,
}

/// Opaque certificate handle.
pub struct AihsCertificate {
    cert: HalfSpaceCertificate,
}

/// One random perturbation round trip.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AihsRoundTrip {
    pub dim: usize,
    pub dim_y: usize,
    pub dim_f: usize,
    pub rank_k: usize,
    pub residual_fwd: f64,
    pub residual_bwd: f64,
}

/// Outcome of a chain run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AihsChainResult {
    pub reached_depth: usize,
    /// 1 when the chain stopped on an invariant subspace.
    pub invariant: i32,
    /// Largest property residual over all steps.
    pub worst_residual: f64,
    /// Containment residual of the invariant witness, 0 otherwise.
    pub witness_residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(AihsStatus, String);

impl From<AihsError> for Failure {
    fn from(e: AihsError) -> Self {
        let status = match e.root() {
            AihsError::Config(_) | AihsError::Json(_) => AihsStatus::Config,
            AihsError::InvalidArgument(_) | AihsError::InvalidOperator(_) | AihsError::ZeroWeight { .. } | AihsError::NotMonotone { .. } => {
                AihsStatus::InvalidArgument
            }
            AihsError::DegenerateAngle { .. } => AihsStatus::DegenerateAngle,
            AihsError::ChainTerminated { .. } => AihsStatus::ChainTerminated,
            AihsError::Audit { .. } => AihsStatus::Audit,
            AihsError::Io(_) | AihsError::Csv(_) => AihsStatus::Io,
            _ => AihsStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AihsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(AihsStatus::InvalidArgument, msg.into())
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> AihsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AihsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            AihsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn complex_arg(re: *const f64, im: *const f64, n: usize, what: &str) -> Result<Vec<C64>, Failure> {
    if re.is_null() {
        return Err(null(what));
    }
    let re = std::slice::from_raw_parts(re, n);
    let im = if im.is_null() { None } else { Some(std::slice::from_raw_parts(im, n)) };
    Ok((0..n).map(|i| C64::new(re[i], im.map_or(0.0, |v| v[i]))).collect())
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into the library from the same thread.
#[no_mangle]
pub extern "C" fn aihs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aihs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn aihs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds an operator from its JSON description.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aihs_operator_from_json(json: *const c_char, out: *mut *mut AihsOperator) -> AihsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let spec: OperatorSpec = serde_json::from_str(str_arg(json, "json")?).map_err(|e| Failure(AihsStatus::Config, e.to_string()))?;
        let model = build_operator(&spec)?;
        *out = Box::into_raw(Box::new(AihsOperator { model }));
        Ok(())
    })
}

/// Dense operator from `dim * dim` row-major entries; `im` may be null.
///
/// # Safety
/// `re` (and `im` when given) must hold `dim * dim` values.
#[no_mangle]
pub unsafe extern "C" fn aihs_operator_dense(re: *const f64, im: *const f64, dim: usize, out: *mut *mut AihsOperator) -> AihsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let n2 = dim.checked_mul(dim).ok_or_else(|| invalid("dim overflows"))?;
        let entries = complex_arg(re, im, n2, "re")?;
        let model = OperatorModel::dense(CMatrix::from_row_slice(dim, dim, &entries))?;
        *out = Box::into_raw(Box::new(AihsOperator { model }));
        Ok(())
    })
}

/// # Safety
/// `op` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn aihs_operator_free(op: *mut AihsOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Dimension of the truncation, 0 for a null handle.
///
/// # Safety
/// `op` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aihs_operator_dim(op: *const AihsOperator) -> usize {
    op.as_ref().map_or(0, |o| o.model.dim())
}

/// Spectral norm of the truncation.
///
/// # Safety
/// `op` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aihs_operator_norm(op: *const AihsOperator, out: *mut f64) -> AihsStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        *out_ref(out, "out")? = op.model.norm();
        Ok(())
    })
}

/// Resolvent vector `(1/lambda - T)^-1 e` by direct solve. `e_im` may be
/// null; `out_re` and `out_im` receive `dim` values each.
///
/// # Safety
/// All arrays must hold `dim` values and `dim` must equal the operator's.
#[no_mangle]
pub unsafe extern "C" fn aihs_resolvent(
    op: *const AihsOperator,
    lambda_re: f64,
    lambda_im: f64,
    e_re: *const f64,
    e_im: *const f64,
    dim: usize,
    out_re: *mut f64,
    out_im: *mut f64,
) -> AihsStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        if dim != op.model.dim() {
            return Err(invalid(format!("dim {dim} does not match operator dim {}", op.model.dim())));
        }
        if out_re.is_null() || out_im.is_null() {
            return Err(null("output array"));
        }
        let e = CVector::from_vec(complex_arg(e_re, e_im, dim, "e_re")?);
        let rv = resolvent::resolvent_vector(&op.model, C64::new(lambda_re, lambda_im), &e, ResolventMethod::DirectSolve)?;
        let (re, im) = (std::slice::from_raw_parts_mut(out_re, dim), std::slice::from_raw_parts_mut(out_im, dim));
        for (i, z) in rv.vector.iter().enumerate() {
            re[i] = z.re;
            im[i] = z.im;
        }
        Ok(())
    })
}

/// Builds a certificate from a JSON run configuration. A certificate whose
/// checks fail is still returned; query it with [`aihs_certificate_status`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aihs_certificate_build(config_json: *const c_char, out: *mut *mut AihsCertificate) -> AihsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let config = RunConfig::from_json(str_arg(config_json, "config_json")?)?;
        let (_, cert) = report::build_certificate(&config)?;
        *out = Box::into_raw(Box::new(AihsCertificate { cert }));
        Ok(())
    })
}

/// Parses a certificate previously written as JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aihs_certificate_from_json(json: *const c_char, out: *mut *mut AihsCertificate) -> AihsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let cert = HalfSpaceCertificate::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(AihsCertificate { cert }));
        Ok(())
    })
}

/// # Safety
/// `cert` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn aihs_certificate_free(cert: *mut AihsCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}

/// 0 when every check passed, 2 when only the hypothesis is unverified,
/// 1 otherwise (same codes as the command-line `build`).
///
/// # Safety
/// `cert` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aihs_certificate_status(cert: *const AihsCertificate, out: *mut i32) -> AihsStatus {
    guard(|| {
        let cert = cert.as_ref().ok_or_else(|| null("cert"))?;
        *out_ref(out, "out")? = i32::from(Status::of(&cert.cert).code());
        Ok(())
    })
}

/// Reads a stored metric by name, e.g. `"ai_residual"`.
///
/// # Safety
/// `cert` must be a live handle, `name` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn aihs_certificate_metric(cert: *const AihsCertificate, name: *const c_char, out: *mut f64) -> AihsStatus {
    guard(|| {
        let cert = cert.as_ref().ok_or_else(|| null("cert"))?;
        let name = str_arg(name, "name")?;
        let out = out_ref(out, "out")?;
        *out = cert.cert.metric(name).ok_or_else(|| invalid(format!("unknown metric `{name}`")))?;
        Ok(())
    })
}

/// Serializes the certificate; free the string with [`aihs_string_free`].
///
/// # Safety
/// `cert` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aihs_certificate_to_json(cert: *const AihsCertificate, out: *mut *mut c_char) -> AihsStatus {
    guard(|| {
        let cert = cert.as_ref().ok_or_else(|| null("cert"))?;
        let out = out_ref(out, "out")?;
        let text = cert.cert.to_json()?;
        *out = CString::new(text).map_err(|_| invalid("certificate JSON contains NUL"))?.into_raw();
        Ok(())
    })
}

/// Re-audits the certificate against its embedded operator. `passed`
/// receives 1 when every recomputed metric agrees and passes.
///
/// # Safety
/// `cert` must be a live handle; the outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn aihs_certificate_verify(cert: *const AihsCertificate, max_difference: *mut f64, passed: *mut i32) -> AihsStatus {
    guard(|| {
        let cert = cert.as_ref().ok_or_else(|| null("cert"))?;
        let (max_difference, passed) = (out_ref(max_difference, "max_difference")?, out_ref(passed, "passed")?);
        let spec = cert
            .cert
            .operator
            .as_ref()
            .ok_or_else(|| Failure(AihsStatus::Config, "certificate carries no operator description".into()))?;
        let op = build_operator(spec)?;
        let audit = halfspace::verify_certificate(&op, &cert.cert)?;
        *max_difference = audit.max_relative_difference();
        *passed = i32::from(audit.passed());
        Ok(())
    })
}

/// Runs the functional chain from the default start up to `depth`.
///
/// # Safety
/// `op` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aihs_chain_run(op: *const AihsOperator, depth: usize, out: *mut AihsChainResult) -> AihsStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        let out = out_ref(out, "out")?;
        let run = chains::run_chain(&op.model, depth, ChainStart::Auto, &ChainTolerances::default())?;
        let worst = run.steps.iter().map(|s| s.worst()).fold(0.0, f64::max);
        *out = match &run.outcome {
            ChainOutcome::Completed => AihsChainResult {
                reached_depth: run.state.depth(),
                invariant: 0,
                worst_residual: worst,
                witness_residual: 0.0,
            },
            ChainOutcome::InvariantSubspace { witness } => AihsChainResult {
                reached_depth: witness.depth,
                invariant: 1,
                worst_residual: worst,
                witness_residual: witness.residual,
            },
        };
        Ok(())
    })
}

/// One seeded perturbation round trip with `4 <= N <= max_dim`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aihs_round_trip(seed: u64, max_dim: usize, tol_rank: f64, out: *mut AihsRoundTrip) -> AihsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let r = duality::random_round_trip(seed, max_dim, tol_rank)?.record;
        *out = AihsRoundTrip {
            dim: r.n,
            dim_y: r.dim_y,
            dim_f: r.dim_f,
            rank_k: r.rank_k,
            residual_fwd: r.residual_fwd,
            residual_bwd: r.residual_bwd,
        };
        Ok(())
    })
}
