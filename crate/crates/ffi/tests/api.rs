use std::ffi::{CStr, CString};
use std::ptr;

use aihs_ffi::*;

fn last_error() -> String {
    let p = aihs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn shift_operator(dim: usize) -> *mut AihsOperator {
    let json = CString::new(format!(
        r#"{{"family": "forward-weighted-shift", "weights": {{"kind": "geometric", "params": {{"ratio": 0.5}}}}, "dim": {dim}}}"#
    ))
    .unwrap();
    let mut op = ptr::null_mut();
    assert_eq!(unsafe { aihs_operator_from_json(json.as_ptr(), &mut op) }, AihsStatus::Ok);
    op
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(aihs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn resolvent_matches_the_series() {
    let op = shift_operator(6);
    assert_eq!(unsafe { aihs_operator_dim(op) }, 6);
    let e = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let (mut re, mut im) = ([0.0; 6], [0.0; 6]);
    let status = unsafe { aihs_resolvent(op, 2.0, 0.0, e.as_ptr(), ptr::null(), 6, re.as_mut_ptr(), im.as_mut_ptr()) };
    assert_eq!(status, AihsStatus::Ok);
    // h = lambda sum (lambda T)^j e_1, with T^j e_1 = 2^(-j(j+1)/2) e_{j+1}
    for j in 0..6 {
        let want = 2.0 * 2f64.powi(j) * 0.5f64.powi(j * (j + 1) / 2);
        assert!((re[j as usize] - want).abs() < 1e-14 * want, "{j}: {} vs {want}", re[j as usize]);
        assert_eq!(im[j as usize], 0.0);
    }
    unsafe { aihs_operator_free(op) };
}

#[test]
fn dimension_mismatch_sets_the_error() {
    let op = shift_operator(4);
    let e = [1.0; 3];
    let (mut re, mut im) = ([0.0; 3], [0.0; 3]);
    let status = unsafe { aihs_resolvent(op, 1.0, 0.0, e.as_ptr(), ptr::null(), 3, re.as_mut_ptr(), im.as_mut_ptr()) };
    assert_eq!(status, AihsStatus::InvalidArgument);
    assert!(last_error().contains("does not match"));
    unsafe { aihs_operator_free(op) };
}

#[test]
fn null_arguments_are_reported() {
    let mut op = ptr::null_mut();
    assert_eq!(unsafe { aihs_operator_from_json(ptr::null(), &mut op) }, AihsStatus::NullPointer);
    assert!(op.is_null());
    let mut norm = 0.0;
    assert_eq!(unsafe { aihs_operator_norm(ptr::null(), &mut norm) }, AihsStatus::NullPointer);
    unsafe {
        aihs_operator_free(ptr::null_mut());
        aihs_certificate_free(ptr::null_mut());
        aihs_string_free(ptr::null_mut());
    }
}

#[test]
fn bad_json_is_a_config_error() {
    let json = CString::new(r#"{"family": "no-such-family", "dim": 4}"#).unwrap();
    let mut op = ptr::null_mut();
    assert_eq!(unsafe { aihs_operator_from_json(json.as_ptr(), &mut op) }, AihsStatus::Config);
    assert!(!last_error().is_empty());
}

#[test]
fn dense_identity_chain_stops_at_once() {
    let n = 5;
    let re: Vec<f64> = (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 } else { 0.0 }).collect();
    let mut op = ptr::null_mut();
    assert_eq!(unsafe { aihs_operator_dense(re.as_ptr(), ptr::null(), n, &mut op) }, AihsStatus::Ok);
    let mut norm = 0.0;
    assert_eq!(unsafe { aihs_operator_norm(op, &mut norm) }, AihsStatus::Ok);
    assert!((norm - 1.0).abs() < 1e-12);
    let mut result = AihsChainResult::default();
    assert_eq!(unsafe { aihs_chain_run(op, 3, &mut result) }, AihsStatus::Ok);
    assert_eq!((result.reached_depth, result.invariant), (1, 1));
    assert!(result.witness_residual < 1e-12);
    unsafe { aihs_operator_free(op) };
}

#[test]
fn certificate_round_trip_through_json() {
    let config = CString::new(
        r#"{"operator": {"family": "forward-weighted-shift", "weights": {"kind": "geometric", "params": {"ratio": 0.5}}, "dim": 32}}"#,
    )
    .unwrap();
    let mut cert = ptr::null_mut();
    assert_eq!(unsafe { aihs_certificate_build(config.as_ptr(), &mut cert) }, AihsStatus::Ok);
    let mut status = -1;
    assert_eq!(unsafe { aihs_certificate_status(cert, &mut status) }, AihsStatus::Ok);
    assert_eq!(status, 0);

    let mut residual = f64::NAN;
    let name = CString::new("ai_residual").unwrap();
    assert_eq!(unsafe { aihs_certificate_metric(cert, name.as_ptr(), &mut residual) }, AihsStatus::Ok);
    assert!(residual < 1e-8);
    let bogus = CString::new("no_such_metric").unwrap();
    assert_eq!(unsafe { aihs_certificate_metric(cert, bogus.as_ptr(), &mut residual) }, AihsStatus::InvalidArgument);

    let mut text = ptr::null_mut();
    assert_eq!(unsafe { aihs_certificate_to_json(cert, &mut text) }, AihsStatus::Ok);
    let mut parsed = ptr::null_mut();
    assert_eq!(unsafe { aihs_certificate_from_json(text, &mut parsed) }, AihsStatus::Ok);
    let (mut diff, mut passed) = (f64::NAN, 0);
    assert_eq!(unsafe { aihs_certificate_verify(parsed, &mut diff, &mut passed) }, AihsStatus::Ok);
    assert_eq!(passed, 1);
    assert_eq!(diff, 0.0);
    unsafe {
        aihs_string_free(text);
        aihs_certificate_free(parsed);
        aihs_certificate_free(cert);
    }
}

#[test]
fn round_trip_reports_matching_ranks() {
    let mut r = AihsRoundTrip::default();
    assert_eq!(unsafe { aihs_round_trip(3, 24, 1e-10, &mut r) }, AihsStatus::Ok);
    assert!(r.dim >= 4 && r.dim <= 24);
    assert_eq!(r.rank_k, r.dim_f);
    assert!(r.residual_fwd < 1e-9);
}

#[test]
fn errors_are_per_thread() {
    let mut op = ptr::null_mut();
    assert_eq!(unsafe { aihs_operator_from_json(ptr::null(), &mut op) }, AihsStatus::NullPointer);
    let other = std::thread::spawn(|| aihs_last_error().is_null()).join().unwrap();
    assert!(other);
    assert!(last_error().contains("null"));
}
