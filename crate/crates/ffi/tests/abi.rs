use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use tiot_ffi::*;

const MU: f64 = 398600.4418;

fn elements(a: f64, e: f64, i_deg: f64, argp_deg: f64) -> TiotElements {
    TiotElements { a, e, i: i_deg.to_radians(), raan: 0.0, argp: argp_deg.to_radians(), m0: 0.0 }
}

fn last_error() -> String {
    let p = tiot_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn context(branch: TiotBranch) -> *mut TiotContext {
    let mut ctx = ptr::null_mut();
    let st = unsafe {
        tiot_context_new(&elements(10000.0, 0.1, 0.0, 135.0), &elements(8000.0, 0.1, 30.0, 225.0), MU, branch as i32, &mut ctx)
    };
    assert_eq!(st, TiotStatus::Ok);
    ctx
}

#[test]
fn cost_and_gradient() {
    let ctx = context(TiotBranch::Long);
    let x = TiotDesignPoint { m1: 0.4, m2: 2.2, tof: 9000.0 };
    let mut c = std::mem::MaybeUninit::<TiotCost>::uninit();
    assert_eq!(unsafe { tiot_evaluate_cost(ctx, &x, c.as_mut_ptr()) }, TiotStatus::Ok);
    let c = unsafe { c.assume_init() };
    let norm = |v: [f64; 3]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!((c.j - norm(c.dv1) - norm(c.dv2)).abs() < 1e-12);
    let mut g = [0.0; 2];
    assert_eq!(unsafe { tiot_gradient(ctx, &x, TiotDomain::Angular as i32, g.as_mut_ptr()) }, TiotStatus::Ok);
    assert_eq!(g, [c.djdm1, c.djdm2]);
    assert_eq!(unsafe { tiot_gradient(ctx, &x, 7, g.as_mut_ptr()) }, TiotStatus::InvalidArgument);
    assert!(last_error().contains("domain 7"));
    unsafe { tiot_context_free(ctx) };
}

#[test]
fn lambert_and_propagation_agree() {
    let r1 = [8000.0, 0.0, 0.0];
    let r2 = [-2000.0, 9000.0, 1000.0];
    let (mut v1, mut v2) = ([0.0; 3], [0.0; 3]);
    let st = unsafe { tiot_lambert(r1.as_ptr(), r2.as_ptr(), 3000.0, MU, TiotBranch::Short as i32, v1.as_mut_ptr(), v2.as_mut_ptr()) };
    assert_eq!(st, TiotStatus::Ok);
    let (mut r, mut v, mut phi) = ([0.0; 3], [0.0; 3], [0.0; 36]);
    let st = unsafe { tiot_propagate(r1.as_ptr(), v1.as_ptr(), 3000.0, MU, r.as_mut_ptr(), v.as_mut_ptr(), phi.as_mut_ptr()) };
    assert_eq!(st, TiotStatus::Ok);
    for k in 0..3 {
        assert!((r[k] - r2[k]).abs() < 1e-6);
        assert!((v[k] - v2[k]).abs() < 1e-9);
    }
    assert!(phi.iter().any(|p| *p != 0.0));
    let st = unsafe { tiot_propagate(r1.as_ptr(), v1.as_ptr(), 10.0, MU, r.as_mut_ptr(), v.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(st, TiotStatus::Ok);
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut ctx = ptr::null_mut();
    let bad = elements(8000.0, 1.5, 0.0, 0.0);
    let st = unsafe { tiot_context_new(&bad, &bad, MU, TiotBranch::Long as i32, &mut ctx) };
    assert_eq!(st, TiotStatus::InvalidArgument);
    assert!(last_error().contains("eccentricity"));
    assert!(ctx.is_null());

    let st = unsafe { tiot_context_new(ptr::null(), &bad, MU, 1, &mut ctx) };
    assert_eq!(st, TiotStatus::NullPointer);
    assert_eq!(last_error(), "dep is null");

    let r = [7000.0, 0.0, 0.0];
    let r2 = [14000.0, 0.0, 0.0];
    let (mut v1, mut v2) = ([0.0; 3], [0.0; 3]);
    let st = unsafe { tiot_lambert(r.as_ptr(), r2.as_ptr(), 3000.0, MU, 0, v1.as_mut_ptr(), v2.as_mut_ptr()) };
    assert_eq!(st, TiotStatus::Singular);
    let st = unsafe { tiot_lambert(r.as_ptr(), r2.as_ptr(), -1.0, MU, 0, v1.as_mut_ptr(), v2.as_mut_ptr()) };
    assert_eq!(st, TiotStatus::InvalidArgument);

    let text = CString::new("[departure]\na = 1\n").unwrap();
    let mut scn = ptr::null_mut();
    assert_eq!(unsafe { tiot_scenario_from_toml(text.as_ptr(), &mut scn) }, TiotStatus::InvalidArgument);
    unsafe {
        tiot_context_free(ptr::null_mut());
        tiot_family_free(ptr::null_mut());
        tiot_scenario_free(ptr::null_mut());
    }
    assert_eq!(unsafe { tiot_family_len(ptr::null()) }, 0);
}

#[test]
fn trace_a_family_through_handles() {
    let mut scn = ptr::null_mut();
    assert_eq!(unsafe { tiot_scenario_baseline(&mut scn) }, TiotStatus::Ok);
    let mut ctx = ptr::null_mut();
    assert_eq!(unsafe { tiot_scenario_context(scn, TiotBranch::Long as i32, &mut ctx) }, TiotStatus::Ok);
    let mut fam = ptr::null_mut();
    // any start is projected onto the nearest family
    let seed = TiotDesignPoint { m1: 0.6, m2: 2.8, tof: 25000.0 };
    let st = unsafe { tiot_trace_family(ctx, &seed, TiotDomain::Temporal as i32, &mut fam) };
    assert_eq!(st, TiotStatus::Ok, "{}", last_error());
    let n = unsafe { tiot_family_len(fam) };
    assert!(n > 10);
    let mut m = std::mem::MaybeUninit::<TiotMember>::uninit();
    for k in [0, n / 2, n - 1] {
        assert_eq!(unsafe { tiot_family_member(fam, k, m.as_mut_ptr()) }, TiotStatus::Ok);
        let m = unsafe { m.assume_init() };
        assert!(m.x.tof > 0.0 && m.j > 0.0 && m.pvt == -1);
        let mut g = [1.0; 2];
        unsafe { tiot_gradient(ctx, &m.x, TiotDomain::Temporal as i32, g.as_mut_ptr()) };
        assert!(g[0].hypot(g[1]) < 1e-8);
    }
    assert_eq!(unsafe { tiot_family_member(fam, n, m.as_mut_ptr()) }, TiotStatus::OutOfRange);
    let (mut e1, mut e2) = (TiotTermination::StepCap, TiotTermination::StepCap);
    assert_eq!(unsafe { tiot_family_ends(fam, &mut e1, &mut e2) }, TiotStatus::Ok);
    assert_ne!(e1, TiotTermination::StepCap);
    unsafe {
        tiot_family_free(fam);
        tiot_context_free(ctx);
        tiot_scenario_free(scn);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(tiot_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/tiot.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["tiot_context_new", "tiot_trace_family", "tiot_last_error", "TIOT_STATUS_OK", "typedef struct TiotFamily TiotFamily"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(&src, "#include \"tiot.h\"\nint main(void) { return tiot_family_len(0) == 0 ? 0 : 1; }\n").unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler, syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
