use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use gpcollapse_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        gpc_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn desc(n: usize, a: f64, g: f64, kind: GpcPotentialKind) -> GpcModelDesc {
    GpcModelDesc { half_width: 8.0, n, a, g, kind: kind as i32, trap_q: 2.0, h0: 1.0, points: ptr::null(), n_points: 0 }
}

#[test]
fn profile_constants() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(gpc_profile_solve(1e-4, 20.0, 1e-12, &mut p), GpcStatus::Ok);
        let (mut a_star, mut d0, mut m, mut q) = (0.0, 0.0, 0.0, 0.0);
        assert_eq!(gpc_profile_a_star(p, &mut a_star), GpcStatus::Ok);
        assert_eq!(gpc_profile_d0(p, &mut d0), GpcStatus::Ok);
        assert_eq!(gpc_profile_moment(p, 1.0, &mut m), GpcStatus::Ok);
        assert_eq!(gpc_profile_eval(p, 0.0, &mut q), GpcStatus::Ok);
        assert!((a_star - 11.700896524557).abs() < 1e-8);
        assert!((d0 - 1.2602385).abs() < 1e-6);
        assert!((m - 1.92167349).abs() < 1e-6);
        assert!(q > 0.0);
        assert_eq!(gpc_profile_moment(p, 2.5, &mut m), GpcStatus::Domain);
        gpc_profile_free(p);
    }
}

#[test]
fn harmonic_minimization_roundtrip() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(gpc_model_new(&desc(64, 0.0, 0.0, GpcPotentialKind::Trap), &mut model), GpcStatus::Ok);
        let mut opts = gpc_minimize_options_default();
        opts.a_star = 11.700896524557148;
        let mut res = ptr::null_mut();
        assert_eq!(gpc_minimize(model, &opts, &mut res), GpcStatus::Ok);
        let mut info = GpcResultInfo::default();
        let mut e = GpcEnergy::default();
        assert_eq!(gpc_result_info(res, &mut info), GpcStatus::Ok);
        assert_eq!(gpc_result_energy(res, &mut e), GpcStatus::Ok);
        assert!(info.converged);
        assert!((e.total - 2.0).abs() < 1e-3);

        let mut n = 0;
        assert_eq!(gpc_model_n(model, &mut n), GpcStatus::Ok);
        let mut field = vec![0.0; n * n];
        assert_eq!(gpc_result_field(res, field.as_mut_ptr(), field.len() - 1), GpcStatus::BufferSize);
        assert_eq!(gpc_result_field(res, field.as_mut_ptr(), field.len()), GpcStatus::Ok);
        let mut again = GpcEnergy::default();
        assert_eq!(gpc_model_energy(model, field.as_ptr(), field.len(), &mut again), GpcStatus::Ok);
        assert_eq!(again, e);
        let (mut mu, mut r) = (0.0, 0.0);
        assert_eq!(gpc_model_residual(model, field.as_ptr(), field.len(), &mut mu, &mut r), GpcStatus::Ok);
        assert!((mu - 2.0).abs() < 1e-3 && r < 1e-6);
        gpc_result_free(res);
        gpc_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(gpc_model_new(&desc(100, 0.0, 0.0, GpcPotentialKind::Zero), &mut model), GpcStatus::Config);
        assert!(last_error().contains("power of two"), "{}", last_error());
        assert!(model.is_null());

        let mut bad = desc(32, 0.0, 0.0, GpcPotentialKind::Zero);
        bad.kind = 7;
        assert_eq!(gpc_model_new(&bad, &mut model), GpcStatus::Config);
        assert_eq!(gpc_model_new(ptr::null(), &mut model), GpcStatus::NullPointer);

        let pts = [GpcSingularPoint { x: 0.0, y: 0.0, p: 0.5 }];
        let mut at_threshold = desc(32, 11.700896524557148, 1.0, GpcPotentialKind::Singular);
        at_threshold.points = pts.as_ptr();
        at_threshold.n_points = 1;
        assert_eq!(gpc_model_new(&at_threshold, &mut model), GpcStatus::Ok);
        let mut opts = gpc_minimize_options_default();
        opts.a_star = 11.700896524557148;
        let mut res = ptr::null_mut();
        assert_eq!(gpc_minimize(model, &opts, &mut res), GpcStatus::Domain);
        assert!(last_error().contains("E(a) = -inf"));
        assert!(res.is_null());
        gpc_model_free(model);
        gpc_model_free(ptr::null_mut());

        let needed = gpc_last_error(ptr::null_mut(), 0);
        assert_eq!(needed, last_error().len());
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(gpc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn c_program_links_against_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libgpcollapse_ffi.a");
    if !lib.exists() {
        eprintln!("static library not found at {}; skipping", lib.display());
        return;
    }
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let src = tmp.join("gpc_smoke.c");
    let exe = tmp.join("gpc_smoke");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "gpcollapse.h"
int main(void) {
    GpcProfile *p = NULL;
    double a_star = 0.0;
    if (gpc_profile_solve(1e-3, 20.0, 1e-12, &p) != GPC_STATUS_OK) return 1;
    if (gpc_profile_a_star(p, &a_star) != GPC_STATUS_OK) return 2;
    gpc_profile_free(p);
    GpcModelDesc d = {8.0, 100, 0.0, 0.0, GPC_POTENTIAL_KIND_ZERO, 2.0, 1.0, NULL, 0};
    GpcModel *m = NULL;
    if (gpc_model_new(&d, &m) != GPC_STATUS_CONFIG) return 3;
    char msg[128];
    gpc_last_error(msg, sizeof msg);
    printf("%.6f %s\n", a_star, msg);
    return 0;
}
"#,
    )
    .unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header_dir)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status();
    let Ok(status) = status else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("11.7008"), "{stdout}");
    assert!(stdout.contains("power of two"), "{stdout}");
}
