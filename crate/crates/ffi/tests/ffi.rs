use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use ltn_ffi::*;

fn last_error() -> String {
    let p = ltn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

/// Copies a library-owned string and frees it.
unsafe fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    ltn_string_free(s);
    out
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn formula_handles_round_trip() {
    unsafe {
        let mut f = ptr::null_mut();
        let src = c("forall x:(A(x)&B(x))|~C(x, lo)");
        assert_eq!(ltn_formula_parse(src.as_ptr(), &mut f), LtnStatus::Ok);
        assert!(ltn_last_error().is_null());
        let mut text = ptr::null_mut();
        assert_eq!(ltn_formula_format(f, &mut text), LtnStatus::Ok);
        assert_eq!(take(text), "forall x: A(x) & B(x) | ~C(x, lo)");
        let mut depth = 0usize;
        assert_eq!(ltn_formula_depth(f, &mut depth), LtnStatus::Ok);
        assert!(depth >= 3);
        ltn_formula_free(f);
        ltn_formula_free(ptr::null_mut());
        ltn_string_free(ptr::null_mut());
    }
}

#[test]
fn failures_set_status_and_message() {
    unsafe {
        let mut f = ptr::null_mut();
        let bad = c("forall : P(x)");
        assert_eq!(
            ltn_formula_parse(bad.as_ptr(), &mut f),
            LtnStatus::ParseError
        );
        assert!(f.is_null());
        assert!(
            last_error().starts_with("line 1, column 8"),
            "{}",
            last_error()
        );

        assert_eq!(
            ltn_formula_parse(ptr::null(), &mut f),
            LtnStatus::NullArgument
        );
        assert_eq!(
            ltn_formula_format(ptr::null(), &mut ptr::null_mut()),
            LtnStatus::NullArgument
        );
        let latin1 = [0xe9u8, 0];
        assert_eq!(
            ltn_formula_parse(latin1.as_ptr().cast(), &mut f),
            LtnStatus::InvalidUtf8
        );

        let mut out = 0.0;
        let v = [0.5];
        assert_eq!(
            ltn_aggregate(LtnQuantifier::Forall, v.as_ptr(), 1, 0.5, &mut out),
            LtnStatus::LogicError
        );
        assert_eq!(
            ltn_aggregate(LtnQuantifier::Forall, ptr::null(), 3, 2.0, &mut out),
            LtnStatus::NullArgument
        );
        // a later success clears the message
        assert_eq!(
            ltn_aggregate(LtnQuantifier::Exists, v.as_ptr(), 1, 2.0, &mut out),
            LtnStatus::Ok
        );
        assert!(ltn_last_error().is_null());
    }
}

#[test]
fn aggregation_and_similarity_values() {
    unsafe {
        let mut out = 0.0;
        let v = [0.8, 0.6];
        assert_eq!(
            ltn_aggregate(LtnQuantifier::Forall, v.as_ptr(), 2, 2.0, &mut out),
            LtnStatus::Ok
        );
        assert!((out - (1.0 - 0.1f64.sqrt())).abs() < 1e-12);
        let v = [0.2, 0.4, 0.9];
        assert_eq!(
            ltn_aggregate(LtnQuantifier::Exists, v.as_ptr(), 3, 1.0, &mut out),
            LtnStatus::Ok
        );
        assert!((out - 0.5).abs() < 1e-12);

        let x = [0.0, 0.0, 1.0, 1.0];
        let y = [3.0, 4.0, 1.0, 2.0];
        let mut sim = [0.0; 2];
        assert_eq!(
            ltn_similarity(
                LtnDistance::Euclidean,
                0.0,
                x.as_ptr(),
                y.as_ptr(),
                2,
                2,
                sim.as_mut_ptr()
            ),
            LtnStatus::Ok
        );
        assert!((sim[0] - (-5.0f64).exp()).abs() < 1e-15);
        assert!((sim[1] - (-1.0f64).exp()).abs() < 1e-12);
        let mut l1 = [0.0; 2];
        assert_eq!(
            ltn_similarity(
                LtnDistance::Manhattan,
                0.0,
                x.as_ptr(),
                y.as_ptr(),
                2,
                2,
                l1.as_mut_ptr()
            ),
            LtnStatus::Ok
        );
        let mut m1 = [0.0; 2];
        assert_eq!(
            ltn_similarity(
                LtnDistance::Minkowski,
                1.0,
                x.as_ptr(),
                y.as_ptr(),
                2,
                2,
                m1.as_mut_ptr()
            ),
            LtnStatus::Ok
        );
        assert!((l1[0] - m1[0]).abs() < 1e-12 && (l1[1] - m1[1]).abs() < 1e-12);
        assert_eq!(
            ltn_similarity(
                LtnDistance::Minkowski,
                0.5,
                x.as_ptr(),
                y.as_ptr(),
                2,
                2,
                m1.as_mut_ptr()
            ),
            LtnStatus::LogicError
        );
    }
}

#[test]
fn experiment_handles_configure_and_run() {
    unsafe {
        let mut e = ptr::null_mut();
        let name = c("kdd-multilabel");
        assert_eq!(
            ltn_experiment_new(name.as_ptr(), &mut e),
            LtnStatus::UnknownExperiment
        );
        assert!(last_error().contains("kdd-multilabel-ltn"));

        let name = c("protocol-kb");
        assert_eq!(ltn_experiment_new(name.as_ptr(), &mut e), LtnStatus::Ok);
        assert_eq!(ltn_experiment_validate(e), LtnStatus::Ok);
        assert_eq!(
            ltn_experiment_set(e, c("k").as_ptr(), c("2").as_ptr()),
            LtnStatus::Ok
        );
        assert_eq!(ltn_experiment_validate(e), LtnStatus::ConfigError);
        assert_eq!(
            ltn_experiment_set(e, c("k").as_ptr(), c("none").as_ptr()),
            LtnStatus::Ok
        );
        assert_eq!(
            ltn_experiment_set(e, c("colour").as_ptr(), c("red").as_ptr()),
            LtnStatus::ConfigError
        );

        let dir = tempfile::tempdir().unwrap();
        let out_dir = dir.path().join("run");
        for (k, v) in [
            ("n", "200"),
            ("epochs", "2"),
            ("out", out_dir.to_str().unwrap()),
        ] {
            assert_eq!(
                ltn_experiment_set(e, c(k).as_ptr(), c(v).as_ptr()),
                LtnStatus::Ok,
                "{k}"
            );
        }
        let mut text = ptr::null_mut();
        assert_eq!(ltn_experiment_config_text(e, &mut text), LtnStatus::Ok);
        assert!(take(text).lines().any(|l| l == "epochs=2"));

        let mut metrics = ptr::null_mut();
        assert_eq!(
            ltn_experiment_run(e, &mut metrics),
            LtnStatus::Ok,
            "{}",
            last_error()
        );
        let metrics = PathBuf::from(take(metrics));
        assert_eq!(metrics, out_dir.join("metrics.csv"));
        assert_eq!(
            std::fs::read_to_string(&metrics).unwrap().lines().count(),
            1 + 3
        );

        assert_eq!(
            ltn_experiment_set(e, c("axioms").as_ptr(), c("/nonexistent.axioms").as_ptr()),
            LtnStatus::Ok
        );
        assert_eq!(ltn_experiment_run(e, ptr::null_mut()), LtnStatus::IoError);
        ltn_experiment_free(e);
    }
}

#[test]
fn header_is_generated_and_usable_from_c() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/ltn.h")).unwrap();
    for symbol in [
        "ltn_formula_parse",
        "ltn_experiment_run",
        "LTN_STATUS_PARSE_ERROR",
        "typedef struct LtnFormula LtnFormula",
    ] {
        assert!(header.contains(symbol), "{symbol}");
    }

    // target/<profile>/deps/ffi-<hash> -> target/<profile>/libltn_ffi.a
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().unwrap().parent().unwrap().join("libltn_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C smoke test failed to compile");
    let run = Command::new(&bin).output().unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
