use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use heatctl::*;

fn last_error() -> String {
    let p = heatctl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn preset(name: &str) -> *mut HeatctlScenario {
    let name = CString::new(name).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { heatctl_scenario_preset(name.as_ptr(), &mut h) },
        HeatctlStatus::Ok
    );
    assert!(!h.is_null());
    h
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(heatctl_version()) }
        .to_str()
        .unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn certificate_through_the_abi() {
    let h = preset("section4");
    let mut cert = HeatctlCertificate::default();
    assert_eq!(unsafe { heatctl_certify(h, &mut cert) }, HeatctlStatus::Ok);
    assert!((cert.sigma_max - (0.04f64 / 3.0).sqrt()).abs() < 1e-12);
    assert!((cert.theta_star - 0.01).abs() < 1e-12);
    assert!(cert.gamma_star.is_finite() && cert.gamma_star > 0.0);

    assert_eq!(
        unsafe { heatctl_scenario_set_sigma(h, 0.2) },
        HeatctlStatus::Ok
    );
    let before = cert;
    assert_eq!(
        unsafe { heatctl_certify(h, &mut cert) },
        HeatctlStatus::Certification
    );
    assert_eq!(cert, before);
    assert!(last_error().contains("0.2"));
    unsafe { heatctl_scenario_free(h) };
}

#[test]
fn null_and_bad_arguments() {
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { heatctl_scenario_preset(ptr::null(), &mut h) },
        HeatctlStatus::NullPointer
    );
    let bad = CString::new("nowhere").unwrap();
    assert_eq!(
        unsafe { heatctl_scenario_preset(bad.as_ptr(), &mut h) },
        HeatctlStatus::InvalidArgument
    );
    assert!(last_error().contains("nowhere"));
    assert!(h.is_null());
    assert_eq!(
        unsafe { heatctl_certify(ptr::null(), ptr::null_mut()) },
        HeatctlStatus::NullPointer
    );
    assert_eq!(unsafe { heatctl_trajectory_len(ptr::null()) }, 0);
    unsafe {
        heatctl_scenario_free(ptr::null_mut());
        heatctl_trajectory_free(ptr::null_mut());
        heatctl_ensemble_free(ptr::null_mut());
    }
}

#[test]
fn validation_reports_grid_errors() {
    let h = preset("remark2");
    assert_eq!(unsafe { heatctl_scenario_validate(h) }, HeatctlStatus::Ok);
    assert_eq!(
        unsafe { heatctl_scenario_set_grid(h, 0.5, 65, 1.0) },
        HeatctlStatus::Ok
    );
    assert_eq!(
        unsafe { heatctl_scenario_validate(h) },
        HeatctlStatus::InvalidArgument
    );
    unsafe { heatctl_scenario_free(h) };
}

#[test]
fn config_text_scenario() {
    let text = CString::new("[scenario]\npreset = remark2\nnodes = 33\nT = 0.1\n").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { heatctl_scenario_from_config(text.as_ptr(), &mut h) },
        HeatctlStatus::Ok
    );
    let mut traj = ptr::null_mut();
    assert_eq!(
        unsafe { heatctl_simulate(h, 3, &mut traj) },
        HeatctlStatus::Ok
    );
    let n = unsafe { heatctl_trajectory_len(traj) };
    assert_eq!(n, 11);
    let mut t = vec![0.0; n];
    assert_eq!(
        unsafe { heatctl_trajectory_column(traj, HeatctlColumn::Time, t.as_mut_ptr(), n) },
        HeatctlStatus::Ok
    );
    assert!((t[n - 1] - 0.1).abs() < 1e-12);
    assert_eq!(
        unsafe { heatctl_trajectory_column(traj, HeatctlColumn::NormSq, t.as_mut_ptr(), n - 1) },
        HeatctlStatus::InvalidArgument
    );
    unsafe {
        heatctl_trajectory_free(traj);
        heatctl_scenario_free(h);
    }
}

#[test]
fn kernel_trace_matches_core() {
    let a = vec![0.0; 41];
    let mut k11 = 0.0;
    let mut kx1 = vec![0.0; 41];
    let st = unsafe { heatctl_kernel_solve(a.as_ptr(), a.len(), 1.02, &mut k11, kx1.as_mut_ptr()) };
    assert_eq!(st, HeatctlStatus::Ok);
    let k = heatctl_core::kernel::solve_kernel(&a, 1.02, 41).unwrap();
    assert_eq!(k11, k.k11);
    assert_eq!(kx1, k.kx1_trace);
}

#[test]
fn ensemble_and_bound_check() {
    let h = preset("coupledZeta");
    let mut e = ptr::null_mut();
    assert_eq!(
        unsafe { heatctl_ensemble_run(h, 200, 9, &mut e) },
        HeatctlStatus::Ok
    );
    let n = unsafe { heatctl_ensemble_len(e) };
    let mut mean = vec![0.0; n];
    let mut se = vec![0.0; n];
    let st = unsafe {
        heatctl_ensemble_series(e, ptr::null_mut(), mean.as_mut_ptr(), se.as_mut_ptr(), n)
    };
    assert_eq!(st, HeatctlStatus::Ok);
    assert!(mean[n - 1] < mean[0]);
    let mut r = HeatctlBoundReport {
        prefactor: 0.0,
        rate: 0.0,
        max_margin: 0.0,
        as_fraction: 0.0,
        verdict: HeatctlVerdict::Fail,
    };
    assert_eq!(
        unsafe { heatctl_ensemble_check(e, &mut r) },
        HeatctlStatus::Ok
    );
    assert_eq!(r.verdict, HeatctlVerdict::Pass);
    assert!(r.max_margin <= 3.0);
    unsafe {
        heatctl_ensemble_free(e);
        heatctl_scenario_free(h);
    }
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/heatctl.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "heatctl_version",
        "heatctl_last_error",
        "heatctl_scenario_preset",
        "heatctl_certify",
        "heatctl_simulate",
        "heatctl_ensemble_check",
        "HEATCTL_STATUS_CERTIFICATION",
        "typedef struct HeatctlScenario HeatctlScenario;",
    ] {
        assert!(text.contains(name), "{name}");
    }
    // syntax check with the system C compiler when one is present
    if let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    {
        assert!(status.success());
    }
}
