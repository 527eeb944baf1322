use bihamil_ffi::*;
use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = bhm_last_error_message();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn constant_scenario() -> *mut BhmScenario {
    let mut sc = ptr::null_mut();
    let json = cstr(r#"{"field": "constant", "tube": {"ds": 0.01}, "faults": ["negate-phi"]}"#);
    assert_eq!(unsafe { bhm_scenario_from_json(json.as_ptr(), &mut sc) }, BhmStatus::Ok);
    assert!(!sc.is_null());
    sc
}

#[test]
fn construct_round_trip() {
    let sc = constant_scenario();
    let mut r = ptr::null_mut();
    unsafe {
        assert_eq!(bhm_run_construct(sc, &mut r), BhmStatus::Ok);
        assert!(bhm_report_pass(r));
        assert_eq!(bhm_report_exit_code(r), 0);
        let (mut max, mut tol) = (f64::NAN, f64::NAN);
        let name = cstr("jacobi.2");
        assert_eq!(bhm_report_residual(r, name.as_ptr(), &mut max, &mut tol), BhmStatus::Ok);
        assert!(max <= tol);
        let missing = cstr("no.such.residual");
        assert_eq!(bhm_report_residual(r, missing.as_ptr(), &mut max, ptr::null_mut()), BhmStatus::InvalidArgument);
        assert!(last_error().contains("no.such.residual"));

        let json = bhm_report_json(r);
        let body: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(body["pass"], true);
        assert_eq!(body["faults"][0]["detected"], true);
        bhm_string_free(json);
        bhm_report_free(r);
        bhm_scenario_free(sc);
    }
}

#[test]
fn construction_errors_come_back_in_the_report() {
    let mut sc = ptr::null_mut();
    let json = cstr(r#"{"field": "radial", "base": [0, 0, 0]}"#);
    unsafe {
        assert_eq!(bhm_scenario_from_json(json.as_ptr(), &mut sc), BhmStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(bhm_run_construct(sc, &mut r), BhmStatus::Ok);
        assert!(!bhm_report_pass(r));
        assert_eq!(bhm_report_exit_code(r), 2);
        bhm_report_free(r);
        bhm_scenario_free(sc);
    }
}

#[test]
fn tolerance_scale_is_validated() {
    let sc = constant_scenario();
    unsafe {
        assert_eq!(bhm_scenario_set_tolerance_scale(sc, 0.0), BhmStatus::InvalidArgument);
        assert_eq!(bhm_scenario_set_tolerance_scale(sc, 1e-30), BhmStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(bhm_run_construct(sc, &mut r), BhmStatus::Ok);
        // round-off residuals now exceed the shrunken bounds
        assert_eq!(bhm_report_exit_code(r), 1);
        bhm_report_free(r);
        bhm_scenario_free(sc);
    }
}

#[test]
fn bad_arguments_map_to_status_codes() {
    let mut sc = ptr::null_mut();
    unsafe {
        assert_eq!(bhm_scenario_from_json(ptr::null(), &mut sc), BhmStatus::NullPointer);
        let bad = cstr("{\"field\": \"constant\", \"tube\": {\"ds\": -1}}");
        assert_eq!(bhm_scenario_from_json(bad.as_ptr(), &mut sc), BhmStatus::InvalidArgument);
        assert!(sc.is_null());
        let invalid = [0xffu8, 0];
        assert_eq!(bhm_scenario_from_json(invalid.as_ptr().cast(), &mut sc), BhmStatus::InvalidUtf8);
        let missing = cstr("/nonexistent/scenario.json");
        assert_eq!(bhm_scenario_load(missing.as_ptr(), &mut sc), BhmStatus::Io);
        let good = cstr("constant");
        assert_eq!(bhm_scenario_for_field(good.as_ptr(), ptr::null_mut()), BhmStatus::NullPointer);
        let mut r = ptr::null_mut();
        assert_eq!(bhm_run_construct(ptr::null(), &mut r), BhmStatus::NullPointer);
        assert_eq!(bhm_report_exit_code(ptr::null()), -1);
        assert!(!bhm_report_pass(ptr::null()));
        assert!(bhm_report_json(ptr::null()).is_null());
        bhm_scenario_free(ptr::null_mut());
        bhm_report_free(ptr::null_mut());
        bhm_field_free(ptr::null_mut());
    }
}

#[test]
fn fields_frames_and_chern_numbers() {
    let mut f = ptr::null_mut();
    let name = cstr("radial");
    unsafe {
        assert_eq!(bhm_field_new(name.as_ptr(), ptr::null(), &mut f), BhmStatus::Ok);
        let x = [0.3, -0.2, 0.5];
        let mut v = [0.0; 3];
        assert_eq!(bhm_field_value(f, x.as_ptr(), v.as_mut_ptr()), BhmStatus::Ok);
        assert!(v.iter().any(|c| *c != 0.0));
        let mut frame = [0.0; 9];
        assert_eq!(bhm_field_frame(f, x.as_ptr(), frame.as_mut_ptr()), BhmStatus::Ok);
        let dot = |a: usize, b: usize| (0..3).map(|k| frame[3 * a + k] * frame[3 * b + k]).sum::<f64>();
        for a in 0..3 {
            for b in 0..3 {
                assert!((dot(a, b) - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let origin = [0.0; 3];
        assert_eq!(bhm_field_value(f, origin.as_ptr(), v.as_mut_ptr()), BhmStatus::Domain);
        let mut c = BhmChern::default();
        assert_eq!(bhm_chern_icosphere(f, 3, 1.0, origin.as_ptr(), &mut c), BhmStatus::Ok);
        assert_eq!(c.number, 2);
        assert!(c.defect < 1e-3);
        assert_eq!(bhm_chern_icosphere(f, 3, -1.0, origin.as_ptr(), &mut c), BhmStatus::InvalidArgument);
        bhm_field_free(f);
    }
    let unknown = cstr("nope");
    assert_eq!(unsafe { bhm_field_new(unknown.as_ptr(), ptr::null(), &mut f) }, BhmStatus::Scenario);
    assert!(last_error().contains("nope"));
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(bhm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn include_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = include_dir().join("bihamil.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["bhm_run_construct", "bhm_last_error_message", "BHM_STATUS_PANIC", "typedef struct BhmReport BhmReport"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    if !have_cc() {
        eprintln!("no C compiler; skipping syntax check");
        return;
    }
    for lang in ["c", "c++"] {
        let out = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang]).arg(&header).output().unwrap();
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    // target/<profile>/deps/capi-* -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libbihamil_ffi.a");
    if !have_cc() || !lib.exists() {
        eprintln!("no C compiler or static library; skipping link test");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(include_dir())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "link: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "smoke: {}{}", String::from_utf8_lossy(&run.stdout), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).ends_with("ok\n"));
}
