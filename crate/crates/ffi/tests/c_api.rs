use std::ffi::{CStr, CString};
use std::ptr;

use probrel_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn take_json(p: *mut std::ffi::c_char) -> serde_json::Value {
    assert!(!p.is_null());
    let v = serde_json::from_str(unsafe { CStr::from_ptr(p) }.to_str().unwrap()).unwrap();
    unsafe { probrel_string_free(p) };
    v
}

fn parse(text: &str) -> *mut ProbrelSystem {
    let mut sys = ptr::null_mut();
    let st = unsafe { probrel_system_parse(c(text).as_ptr(), &mut sys) };
    assert_eq!(st, ProbrelStatus::Ok);
    sys
}

const SORT_RED: &str = include_str!("../../core/assets/discrete_sort_red.sys");
const SORT_SCRIPT: &str = include_str!("../../core/assets/discrete_sort.script");

#[test]
fn eval_and_check_through_the_c_api() {
    let sys = parse(SORT_RED);
    let mut out = ptr::null_mut();
    let st = unsafe { probrel_eval(sys, c("s = stack2").as_ptr(), &mut out) };
    assert_eq!(st, ProbrelStatus::Ok);
    let rec = take_json(out);
    assert_eq!(rec["outcome"]["value"], "0.097");
    assert_eq!(rec["schema_version"], 1);

    let st = unsafe { probrel_check(sys, c("pr(s = stack2) < 0.05").as_ptr(), c(SORT_SCRIPT).as_ptr(), &mut out) };
    assert_eq!(st, ProbrelStatus::NotEstablished);
    assert_eq!(take_json(out)["outcome"]["verdict"], "not-established");
    let st = unsafe { probrel_check(sys, c("pr(s = stack2) < 0.1").as_ptr(), c(SORT_SCRIPT).as_ptr(), &mut out) };
    assert_eq!(st, ProbrelStatus::Ok);
    take_json(out);
    unsafe { probrel_system_free(sys) };
}

#[test]
fn simulate_is_deterministic() {
    let sys = parse("var b : bool; system { b ~ uniform(bool); }");
    let run = || {
        let mut out = ptr::null_mut();
        let st = unsafe { probrel_simulate(sys, c("b").as_ptr(), 5000, 42, 0.99, &mut out) };
        assert_eq!(st, ProbrelStatus::Ok);
        take_json(out)
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!((a["outcome"]["p_hat"].as_f64().unwrap() - 0.5).abs() < 0.05);
    unsafe { probrel_system_free(sys) };
}

#[test]
fn rewrite_with_null_event() {
    let sys = parse("var a, b : int; system { a ~ point(1); b ~ point(2); }");
    let mut out = ptr::null_mut();
    let st = unsafe { probrel_rewrite(sys, c("permutation @0").as_ptr(), ptr::null(), &mut out) };
    assert_eq!(st, ProbrelStatus::Ok);
    let rec = take_json(out);
    assert_eq!(rec["outcome"]["term"], "b ~ point(2);\na ~ point(1);\n");
    unsafe { probrel_system_free(sys) };
}

#[test]
fn errors_and_last_error() {
    let mut sys = ptr::null_mut();
    let st = unsafe { probrel_system_parse(c("system {\n  x ~ point(y);\n}").as_ptr(), &mut sys) };
    assert_eq!(st, ProbrelStatus::UserError);
    assert!(sys.is_null());
    let msg = unsafe { CStr::from_ptr(probrel_last_error()) }.to_str().unwrap().to_string();
    assert!(msg.starts_with("2:"), "{msg}");

    let st = unsafe { probrel_system_parse(ptr::null(), &mut sys) };
    assert_eq!(st, ProbrelStatus::NullArgument);
    let mut out = ptr::null_mut();
    let st = unsafe { probrel_eval(ptr::null(), c("true").as_ptr(), &mut out) };
    assert_eq!(st, ProbrelStatus::NullArgument);
    assert!(out.is_null());

    let bad = [0xffu8, 0];
    let st = unsafe { probrel_system_parse(bad.as_ptr().cast(), &mut sys) };
    assert_eq!(st, ProbrelStatus::InvalidUtf8);

    let sys = parse("var x : real; system { x ~ normal(0, 1); }");
    let st = unsafe { probrel_eval(sys, c("x < 0").as_ptr(), &mut out) };
    assert_eq!(st, ProbrelStatus::UserError);
    assert_eq!(take_json(out)["outcome"]["kind"], "error");
    let msg = unsafe { CStr::from_ptr(probrel_last_error()) }.to_str().unwrap().to_string();
    assert!(msg.contains("simulate"), "{msg}");

    // a successful call clears the error
    let st = unsafe { probrel_simulate(sys, c("x < 0").as_ptr(), 100, 1, 0.99, &mut out) };
    assert_eq!(st, ProbrelStatus::Ok);
    take_json(out);
    assert!(probrel_last_error().is_null());
    unsafe {
        probrel_system_free(sys);
        probrel_system_free(ptr::null_mut());
        probrel_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(probrel_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/probrel.h");
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
