use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use envauth_ffi::*;

fn rot2(theta: f64) -> [f64; 4] {
    [theta.cos(), -theta.sin(), theta.sin(), theta.cos()]
}

unsafe fn fingerprint(data: &[f64], rows: usize, cols: usize) -> *mut EaFingerprint {
    let id = CString::new("obj").unwrap();
    let mut fp = ptr::null_mut();
    assert_eq!(ea_fingerprint_new(data.as_ptr(), rows, cols, id.as_ptr(), 0, &mut fp), EaStatus::Ok);
    fp
}

unsafe fn last_error() -> String {
    CStr::from_ptr(ea_last_error_message()).to_string_lossy().into_owned()
}

#[test]
fn features_through_the_abi() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let mut out = [0.0; EA_FEATURE_COUNT];
    unsafe {
        assert_eq!(ea_extract_features(x.as_ptr(), 5, x.as_ptr(), 5, out.as_mut_ptr()), EaStatus::Ok);
        assert_eq!(out[0], 3.0);
        assert_eq!(out[1], 2.0);
        assert!((out[6] - 1.0).abs() < 1e-12);
        assert_eq!(ea_extract_features(x.as_ptr(), 0, x.as_ptr(), 5, out.as_mut_ptr()), EaStatus::InvalidInput);
        assert!(last_error().contains("empty signal"));
        assert_eq!(ea_extract_features(ptr::null(), 5, x.as_ptr(), 5, out.as_mut_ptr()), EaStatus::NullPointer);
    }
}

#[test]
fn transform_round_trip() {
    let reference = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 2.0, 3.0, -1.0, 1.0];
    let r = rot2(std::f64::consts::FRAC_PI_2);
    let l = [3.0, -1.0];
    unsafe {
        let fp_ref = fingerprint(&reference, 5, 2);
        let mut truth = ptr::null_mut();
        assert_eq!(ea_transform_new(r.as_ptr(), l.as_ptr(), 2, &mut truth), EaStatus::Ok);
        let mut corrected = ptr::null_mut();
        assert_eq!(ea_correct_reference(fp_ref, truth, &mut corrected), EaStatus::Ok);

        let mut est = ptr::null_mut();
        let mut degenerate = true;
        assert_eq!(ea_estimate_transform(corrected, fp_ref, &mut est, &mut degenerate), EaStatus::Ok);
        assert!(!degenerate);
        assert_eq!(ea_transform_dim(est), 2);
        let mut rot = [0.0; 4];
        let mut tr = [0.0; 2];
        assert_eq!(ea_transform_rotation(est, rot.as_mut_ptr(), 4), EaStatus::Ok);
        assert_eq!(ea_transform_translation(est, tr.as_mut_ptr(), 2), EaStatus::Ok);
        for (a, b) in rot.iter().zip(&r) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in tr.iter().zip(&l) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(ea_transform_rotation(est, rot.as_mut_ptr(), 3), EaStatus::InvalidInput);

        let mut d = -1.0;
        assert_eq!(ea_bhattacharyya(corrected, fp_ref, &mut d), EaStatus::Ok);
        assert!(d > 0.0);

        let handles = [truth as *const EaTransform, est as *const EaTransform];
        let mut fused = ptr::null_mut();
        assert_eq!(ea_fuse_transforms(handles.as_ptr(), [1.0, 1.0].as_ptr(), 2, &mut fused), EaStatus::Ok);
        assert_eq!(ea_fuse_transforms(handles.as_ptr(), [0.0, 0.0].as_ptr(), 2, &mut fused), EaStatus::InvalidInput);

        let mut data = [0.0; 10];
        assert_eq!(ea_fingerprint_data(corrected, data.as_mut_ptr(), 10), EaStatus::Ok);
        assert!((data[0] - 3.0).abs() < 1e-12 && (data[1] + 1.0).abs() < 1e-12);

        ea_transform_free(fused);
        ea_transform_free(est);
        ea_transform_free(truth);
        ea_fingerprint_free(corrected);
        ea_fingerprint_free(fp_ref);
    }
}

#[test]
fn rejects_reflection_and_bad_shapes() {
    let refl = [1.0, 0.0, 0.0, -1.0];
    let l = [0.0, 0.0];
    let mut t = ptr::null_mut();
    unsafe {
        assert_eq!(ea_transform_new(refl.as_ptr(), l.as_ptr(), 2, &mut t), EaStatus::InvalidInput);
        assert!(t.is_null());
        let id = CString::new("x").unwrap();
        let mut fp = ptr::null_mut();
        assert_eq!(ea_fingerprint_new([1.0].as_ptr(), 1, 1, id.as_ptr(), 0, &mut fp), EaStatus::InvalidInput);
        assert_eq!(ea_fingerprint_new(ptr::null(), 2, 2, id.as_ptr(), 0, &mut fp), EaStatus::NullPointer);
        ea_fingerprint_free(ptr::null_mut());
    }
}

#[test]
fn calibration_and_verdicts() {
    let legit = [1.0, 2.0];
    let att = [10.0, 12.0];
    let mut tau = 0.0;
    unsafe {
        assert_eq!(ea_calibrate_threshold(legit.as_ptr(), 2, att.as_ptr(), 2, 0.1, &mut tau), EaStatus::Ok);
        assert_eq!(tau, 6.0);
        assert_eq!(ea_calibrate_threshold(legit.as_ptr(), 2, ptr::null(), 0, 0.1, &mut tau), EaStatus::Ok);
        assert!((tau - 2.2).abs() < 1e-12);
    }
    assert_eq!(ea_authenticate(1.0, 1.0), EaVerdict::Legitimate);
    assert_eq!(ea_authenticate(1.5, 1.0), EaVerdict::Attacker);
}

#[test]
fn scenario_report_json() {
    let cfg = CString::new(r#"{"num_objects": 4, "num_windows": 4, "seed": 9, "attacker_kind": "cyber_physical", "attacker_count": 1}"#).unwrap();
    unsafe {
        let mut sc = ptr::null_mut();
        assert_eq!(ea_scenario_from_json(cfg.as_ptr(), &mut sc), EaStatus::Ok);
        let mut rep = ptr::null_mut();
        assert_eq!(ea_scenario_run(sc, &mut rep), EaStatus::Ok);
        let (mut tb, mut te) = (0.0, 0.0);
        assert_eq!(ea_report_thresholds(rep, &mut tb, &mut te), EaStatus::Ok);
        assert!(tb > 0.0 && te > 0.0);
        let mut json = ptr::null_mut();
        assert_eq!(ea_report_json(rep, &mut json), EaStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["attacker_kind"], "cyber_physical");
        ea_string_free(json);
        ea_report_free(rep);
        ea_scenario_free(sc);

        let bad = CString::new(r#"{"num_objects": 2, "attacker_count": 2, "attacker_kind": "cyber_physical"}"#).unwrap();
        let mut sc = ptr::null_mut();
        assert_eq!(ea_scenario_from_json(bad.as_ptr(), &mut sc), EaStatus::Schema);
        assert!(last_error().contains("attacker_count"));
    }
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib_dir = target_dir();
    let staticlib = lib_dir.join("libenvauth_ffi.a");
    if !staticlib.exists() {
        eprintln!("{} not built; skipping", staticlib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new(&cc)
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&staticlib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let output = Command::new(&exe).output().unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("ok "));
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_owned());
        }
    }
    Err(())
}
