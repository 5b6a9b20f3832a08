use std::ffi::{c_char, CString};
use std::ptr;

use roar_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { roar_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn linear(w: &[f64], b: f64) -> *mut RoarModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { roar_model_linear(w.as_ptr(), w.len(), b, &mut m) }, RoarStatus::Ok);
    m
}

#[test]
fn model_round_trip() {
    let json = CString::new(r#"{"kind":"linear","weights":[1.0,-1.0],"intercept":0.0}"#).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { roar_model_from_json(json.as_ptr(), &mut m) }, RoarStatus::Ok);
    let mut d = 0;
    assert_eq!(unsafe { roar_model_dim(m, &mut d) }, RoarStatus::Ok);
    assert_eq!(d, 2);
    let mut p = 0.0;
    assert_eq!(unsafe { roar_model_predict_proba(m, [1.0, 1.0].as_ptr(), 2, &mut p) }, RoarStatus::Ok);
    assert!((p - 0.5).abs() < 1e-12);
    assert_eq!(unsafe { roar_model_predict_proba(m, [1.0].as_ptr(), 1, &mut p) }, RoarStatus::InvalidArgument);
    assert!(last_error().contains("dimension"), "{}", last_error());
    unsafe { roar_model_free(m) };
    unsafe { roar_model_free(ptr::null_mut()) };
}

#[test]
fn bad_inputs_report_errors() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { roar_model_from_json(ptr::null(), &mut m) }, RoarStatus::NullPointer);
    let bad = CString::new("{").unwrap();
    assert_eq!(unsafe { roar_model_from_json(bad.as_ptr(), &mut m) }, RoarStatus::DataError);
    assert!(!last_error().is_empty());
    let missing = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(unsafe { roar_model_load(missing.as_ptr(), &mut m) }, RoarStatus::DataError);
    assert!(m.is_null());
}

#[test]
fn robust_recourse_goes_further_than_cfe() {
    let m = linear(&[1.0, 1.0], 0.0);
    let x = [-2.0, -2.0];
    let mut cfg = roar_recourse_config_default();
    cfg.lambda = 0.05;
    cfg.learning_rate = 0.1;
    cfg.delta_max = 0.1;
    cfg.norm = RoarNorm::Box;
    let mut a = [0.0; 2];
    let mut b = [0.0; 2];
    let mut ia = RoarRecourseInfo::default();
    let mut ib = RoarRecourseInfo::default();
    assert_eq!(unsafe { roar_cfe(m, x.as_ptr(), 2, ptr::null(), &cfg, a.as_mut_ptr(), 2, &mut ia) }, RoarStatus::Ok);
    assert_eq!(unsafe { roar_robust_recourse(m, x.as_ptr(), 2, ptr::null(), &cfg, b.as_mut_ptr(), 2, &mut ib) }, RoarStatus::Ok);
    assert!(ia.valid_on_source && ib.valid_on_source);
    assert!(b[0] + b[1] > a[0] + a[1]);
    assert!(ib.cost >= ia.cost);

    let mut small = [0.0; 1];
    assert_eq!(
        unsafe { roar_cfe(m, x.as_ptr(), 2, ptr::null(), &cfg, small.as_mut_ptr(), 1, ptr::null_mut()) },
        RoarStatus::BufferTooSmall
    );
    unsafe { roar_model_free(m) };
}

#[test]
fn theory_functions() {
    let (w, delta, mu) = ([1.0, 0.0], [-2.0, 0.0], [1.0, 0.0]);
    let sigma = [1.0, 0.0, 0.0, 1.0];
    let mut p = 0.0;
    let s = unsafe { roar_invalidation_probability(w.as_ptr(), delta.as_ptr(), mu.as_ptr(), sigma.as_ptr(), 2, &mut p) };
    assert_eq!(s, RoarStatus::Ok);
    assert!((p - 0.6826894921370859).abs() < 1e-9, "{p}");

    let (w, delta, mu) = ([1.0, 0.0], [0.0, 0.0], [2.0, 0.0]);
    let mut v = 0.0;
    let s = unsafe { roar_cost_increase_bound(1.0, w.as_ptr(), delta.as_ptr(), mu.as_ptr(), 2, 10.0, 0.01, 1.0, &mut v) };
    assert_eq!(s, RoarStatus::Ok);
    let expected = 2.0 + (50.0 * 100f64.ln()).sqrt();
    assert!((v - expected).abs() < 1e-9);
    let s = unsafe { roar_cost_increase_bound(1.0, w.as_ptr(), delta.as_ptr(), mu.as_ptr(), 2, 10.0, 0.0, 1.0, &mut v) };
    assert_eq!(s, RoarStatus::InvalidArgument);
}

#[test]
fn header_declares_exports() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/roar.h")).unwrap();
    for f in [
        "roar_last_error_message",
        "roar_model_from_json",
        "roar_model_load",
        "roar_model_linear",
        "roar_model_free",
        "roar_model_dim",
        "roar_model_predict_proba",
        "roar_recourse_config_default",
        "roar_cfe",
        "roar_robust_recourse",
        "roar_invalidation_probability",
        "roar_cost_increase_bound",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f}");
    }
}
