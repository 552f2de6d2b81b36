//! C ABI over `tiot-core`.
//!
//! Every fallible call returns a `TiotStatus`; on failure the message is
//! available from `tiot_last_error` on the same thread. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.
//! Angles are in radians, lengths in km, times in s.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::Vector3;
use tiot_core::continuation::{trace_family, ContinuationConfig, Family, TerminationReason};
use tiot_core::cost::{evaluate_cost, DerivDomain, DesignPoint, ScenarioContext, StationaryClass};
use tiot_core::kepler::{propagate_with_stm, CartesianState, ClassicalElements, GravModel};
use tiot_core::lambert::{solve_lambert, BranchFlag};
use tiot_core::scenario::{baseline, Scenario};
use tiot_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiotStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NoConvergence = 3,
    Singular = 4,
    Propagation = 5,
    OutOfRange = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiotBranch {
    Short = 0,
    Long = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiotDomain {
    Angular = 0,
    Temporal = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiotClass {
    Minimum = 0,
    Maximum = 1,
    Saddle = 2,
    Degenerate = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiotTermination {
    TofAboveMax = 0,
    TofBelowMin = 1,
    SingularityPi = 2,
    CycleClosed = 3,
    StepCap = 4,
    CorrectorFailure = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiotElements {
    pub a: f64,
    pub e: f64,
    pub i: f64,
    pub raan: f64,
    pub argp: f64,
    pub m0: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiotDesignPoint {
    pub m1: f64,
    pub m2: f64,
    pub tof: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiotCost {
    /// Total impulse [km/s].
    pub j: f64,
    pub dv1: [f64; 3],
    pub dv2: [f64; 3],
    pub djdm1: f64,
    pub djdm2: f64,
    /// Per 1000 s.
    pub djdt_total: f64,
    pub theta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiotMember {
    pub x: TiotDesignPoint,
    pub j: f64,
    pub hclass: TiotClass,
    pub theta: f64,
    /// Unit tangent in scaled coordinates.
    pub tangent: [f64; 3],
    /// 1 satisfied, 0 violated, -1 not checked.
    pub pvt: i32,
}

/// Departure and arrival orbits with a Lambert branch.
pub struct TiotContext {
    ctx: ScenarioContext,
}

pub struct TiotScenario {
    scn: Scenario,
}

pub struct TiotFamily {
    family: Family,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TiotStatus {
    match e {
        Error::InvalidEccentricity(_)
        | Error::InvalidElements(_)
        | Error::InvalidTof(_)
        | Error::InvalidConfig(_)
        | Error::Scenario(_)
        | Error::Toml(_) => TiotStatus::InvalidArgument,
        Error::KeplerNonConvergence { .. }
        | Error::LambertNonConvergence
        | Error::CorrectorFailure
        | Error::JumpGuard { .. } => TiotStatus::NoConvergence,
        Error::Collinear
        | Error::NoParabolicConnection
        | Error::DegenerateBurn
        | Error::SingularStm(_)
        | Error::RankDeficient => TiotStatus::Singular,
        Error::Propagation(_) => TiotStatus::Propagation,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => TiotStatus::Io,
    }
}

enum Fail {
    Core(Error),
    Null(&'static str),
    Arg(String),
    Range(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, records any failure and converts it to a status code.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> TiotStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TiotStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(name))) => {
            set_error(format!("{name} is null"));
            TiotStatus::NullPointer
        }
        Ok(Err(Fail::Arg(m))) => {
            set_error(m);
            TiotStatus::InvalidArgument
        }
        Ok(Err(Fail::Range(m))) => {
            set_error(m);
            TiotStatus::OutOfRange
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TiotStatus::Panic
        }
    }
}

unsafe fn read<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(name))
}

unsafe fn write<T>(p: *mut T, name: &'static str, v: T) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    p.write(v);
    Ok(())
}

fn branch(v: i32) -> Result<BranchFlag, Fail> {
    match v {
        0 => Ok(BranchFlag::Short),
        1 => Ok(BranchFlag::Long),
        _ => Err(Fail::Arg(format!("branch {v} is not a TiotBranch"))),
    }
}

fn domain(v: i32) -> Result<DerivDomain, Fail> {
    match v {
        0 => Ok(DerivDomain::Angular),
        1 => Ok(DerivDomain::Temporal),
        _ => Err(Fail::Arg(format!("domain {v} is not a TiotDomain"))),
    }
}

fn class(c: StationaryClass) -> TiotClass {
    match c {
        StationaryClass::Minimum => TiotClass::Minimum,
        StationaryClass::Maximum => TiotClass::Maximum,
        StationaryClass::Saddle => TiotClass::Saddle,
        StationaryClass::Degenerate => TiotClass::Degenerate,
    }
}

fn termination(t: TerminationReason) -> TiotTermination {
    match t {
        TerminationReason::TofAboveMax => TiotTermination::TofAboveMax,
        TerminationReason::TofBelowMin => TiotTermination::TofBelowMin,
        TerminationReason::SingularityPi => TiotTermination::SingularityPi,
        TerminationReason::CycleClosed => TiotTermination::CycleClosed,
        TerminationReason::StepCap => TiotTermination::StepCap,
        TerminationReason::CorrectorFailure => TiotTermination::CorrectorFailure,
    }
}

fn elements(e: &TiotElements) -> Result<ClassicalElements, Fail> {
    Ok(ClassicalElements::new(e.a, e.e, e.i, e.raan, e.argp, e.m0)?)
}

fn design(x: &TiotDesignPoint) -> DesignPoint {
    DesignPoint::new(x.m1, x.m2, x.tof)
}

fn vec3(p: *const f64, name: &'static str) -> Result<Vector3<f64>, Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    let s = unsafe { std::slice::from_raw_parts(p, 3) };
    Ok(Vector3::new(s[0], s[1], s[2]))
}

fn put3(p: *mut f64, name: &'static str, v: &Vector3<f64>) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    let s = unsafe { std::slice::from_raw_parts_mut(p, 3) };
    s.copy_from_slice(v.as_slice());
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tiot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tiot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a context from two orbits. `mu` in km^3/s^2, `branch` a
/// `TiotBranch` value.
///
/// # Safety
/// `dep` and `arr` point to valid elements; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tiot_context_new(
    dep: *const TiotElements,
    arr: *const TiotElements,
    mu: f64,
    branch_flag: i32,
    out: *mut *mut TiotContext,
) -> TiotStatus {
    guard(|| {
        let (d, a) = (elements(read(dep, "dep")?)?, elements(read(arr, "arr")?)?);
        let ctx = ScenarioContext::new(d, a, GravModel::new(mu)?, branch(branch_flag)?)?;
        write(out, "out", Box::into_raw(Box::new(TiotContext { ctx })))
    })
}

/// # Safety
/// `ctx` comes from this library and is not used afterwards; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn tiot_context_free(ctx: *mut TiotContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

/// Parses a scenario from NUL-terminated TOML text.
///
/// # Safety
/// `toml` is a valid C string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tiot_scenario_from_toml(toml: *const c_char, out: *mut *mut TiotScenario) -> TiotStatus {
    guard(|| {
        if toml.is_null() {
            return Err(Fail::Null("toml"));
        }
        let text = CStr::from_ptr(toml).to_str().map_err(|e| Fail::Arg(format!("scenario is not UTF-8: {e}")))?;
        let scn = Scenario::from_toml(text)?;
        write(out, "out", Box::into_raw(Box::new(TiotScenario { scn })))
    })
}

/// The bundled baseline scenario.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tiot_scenario_baseline(out: *mut *mut TiotScenario) -> TiotStatus {
    guard(|| write(out, "out", Box::into_raw(Box::new(TiotScenario { scn: baseline() }))))
}

/// Context for one branch of a scenario.
///
/// # Safety
/// `scn` comes from this library; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tiot_scenario_context(
    scn: *const TiotScenario,
    branch_flag: i32,
    out: *mut *mut TiotContext,
) -> TiotStatus {
    guard(|| {
        let ctx = read(scn, "scn")?.scn.context(branch(branch_flag)?)?;
        write(out, "out", Box::into_raw(Box::new(TiotContext { ctx })))
    })
}

/// # Safety
/// `scn` comes from this library and is not used afterwards; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn tiot_scenario_free(scn: *mut TiotScenario) {
    if !scn.is_null() {
        drop(Box::from_raw(scn));
    }
}

/// Cost and analytic derivatives at a design point.
///
/// # Safety
/// Pointers are valid; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tiot_evaluate_cost(
    ctx: *const TiotContext,
    x: *const TiotDesignPoint,
    out: *mut TiotCost,
) -> TiotStatus {
    guard(|| {
        let c = evaluate_cost(&design(read(x, "x")?), &read(ctx, "ctx")?.ctx)?;
        write(
            out,
            "out",
            TiotCost {
                j: c.j,
                dv1: c.dv1.into(),
                dv2: c.dv2.into(),
                djdm1: c.djdm1,
                djdm2: c.djdm2,
                djdt_total: c.djdt_total,
                theta: c.theta,
            },
        )
    })
}

/// Domain gradient of the cost (`domain` a `TiotDomain` value) into `out[2]`,
/// per radian or per 1000 s.
///
/// # Safety
/// Pointers are valid; `out` holds two doubles.
#[no_mangle]
pub unsafe extern "C" fn tiot_gradient(
    ctx: *const TiotContext,
    x: *const TiotDesignPoint,
    deriv_domain: i32,
    out: *mut f64,
) -> TiotStatus {
    guard(|| {
        let dom = domain(deriv_domain)?;
        let g = evaluate_cost(&design(read(x, "x")?), &read(ctx, "ctx")?.ctx)?.domain_gradient(dom);
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        std::slice::from_raw_parts_mut(out, 2).copy_from_slice(&g);
        Ok(())
    })
}

/// Zero-revolution Lambert arc from `r1` to `r2` in `tof`: transfer
/// velocities at both ends.
///
/// # Safety
/// `r1`, `r2`, `v1`, `v2` point to three doubles each.
#[no_mangle]
pub unsafe extern "C" fn tiot_lambert(
    r1: *const f64,
    r2: *const f64,
    tof: f64,
    mu: f64,
    branch_flag: i32,
    v1: *mut f64,
    v2: *mut f64,
) -> TiotStatus {
    guard(|| {
        let sol = solve_lambert(&vec3(r1, "r1")?, &vec3(r2, "r2")?, tof, branch(branch_flag)?, GravModel::new(mu)?)?;
        put3(v1, "v1", &sol.v1g)?;
        put3(v2, "v2", &sol.v2g)
    })
}

/// Two-body propagation over `dt`. When `phi` is not null it receives the
/// 6x6 state transition matrix, row-major.
///
/// # Safety
/// `r`, `v`, `r_out`, `v_out` point to three doubles each; `phi` is null or
/// holds 36.
#[no_mangle]
pub unsafe extern "C" fn tiot_propagate(
    r: *const f64,
    v: *const f64,
    dt: f64,
    mu: f64,
    r_out: *mut f64,
    v_out: *mut f64,
    phi: *mut f64,
) -> TiotStatus {
    guard(|| {
        let s0 = CartesianState::new(vec3(r, "r")?, vec3(v, "v")?);
        let (s, stm) = propagate_with_stm(&s0, dt, GravModel::new(mu)?)?;
        put3(r_out, "r_out", &s.r)?;
        put3(v_out, "v_out", &s.v)?;
        if !phi.is_null() {
            let out = std::slice::from_raw_parts_mut(phi, 36);
            for i in 0..6 {
                for j in 0..6 {
                    out[6 * i + j] = stm.phi[(i, j)];
                }
            }
        }
        Ok(())
    })
}

/// Traces the family of stationary points through `seed` with the default
/// continuation settings.
///
/// # Safety
/// Pointers are valid; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tiot_trace_family(
    ctx: *const TiotContext,
    seed: *const TiotDesignPoint,
    deriv_domain: i32,
    out: *mut *mut TiotFamily,
) -> TiotStatus {
    guard(|| {
        let dom = domain(deriv_domain)?;
        let family = trace_family(&design(read(seed, "seed")?), &read(ctx, "ctx")?.ctx, dom, &ContinuationConfig::default())?;
        write(out, "out", Box::into_raw(Box::new(TiotFamily { family })))
    })
}

/// Number of members, 0 for a null handle.
///
/// # Safety
/// `f` is null or comes from this library.
#[no_mangle]
pub unsafe extern "C" fn tiot_family_len(f: *const TiotFamily) -> usize {
    f.as_ref().map_or(0, |f| f.family.members.len())
}

/// # Safety
/// `f` comes from this library; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tiot_family_member(f: *const TiotFamily, index: usize, out: *mut TiotMember) -> TiotStatus {
    guard(|| {
        let fam = &read(f, "family")?.family;
        let m = fam
            .members
            .get(index)
            .ok_or_else(|| Fail::Range(format!("member {index} of {}", fam.members.len())))?;
        write(
            out,
            "out",
            TiotMember {
                x: TiotDesignPoint { m1: m.x.m1, m2: m.x.m2, tof: m.x.tof },
                j: m.cost.j,
                hclass: class(m.hclass),
                theta: m.theta,
                tangent: m.tangent,
                pvt: m.pvt_ok.map_or(-1, i32::from),
            },
        )
    })
}

/// Why the trace stopped at either end.
///
/// # Safety
/// `f` comes from this library; `end1` and `end2` are writable.
#[no_mangle]
pub unsafe extern "C" fn tiot_family_ends(
    f: *const TiotFamily,
    end1: *mut TiotTermination,
    end2: *mut TiotTermination,
) -> TiotStatus {
    guard(|| {
        let fam = &read(f, "family")?.family;
        write(end1, "end1", termination(fam.end1))?;
        write(end2, "end2", termination(fam.end2))
    })
}

/// # Safety
/// `f` comes from this library and is not used afterwards; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn tiot_family_free(f: *mut TiotFamily) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}
