//! Zero-revolution Lambert arcs and their parabolic (infinite-time) limit.
//!
//! The finite-time solver follows Izzo's formulation: one root-find in the
//! variable `x` on `(-1, inf)`, where the nondimensional time of flight is
//! monotone decreasing. The root-find is a Newton iteration kept inside a
//! bisection bracket.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kepler::GravModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchFlag {
    Short,
    Long,
}

impl BranchFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchFlag::Short => "short",
            BranchFlag::Long => "long",
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            BranchFlag::Short => "s",
            BranchFlag::Long => "l",
        }
    }
}

impl std::str::FromStr for BranchFlag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" | "s" => Ok(BranchFlag::Short),
            "long" | "l" => Ok(BranchFlag::Long),
            _ => Err(Error::InvalidConfig(format!("unknown branch {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conic {
    Elliptic,
    Parabolic,
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambertSolution {
    pub v1g: Vector3<f64>,
    pub v2g: Vector3<f64>,
    pub theta: f64,
    pub conic: Conic,
    pub d1: BranchFlag,
}

const COLLINEAR_SIN: f64 = 1e-10;

/// Unit normal of the transfer plane for branch `d1`: along `r1 x r2` for
/// the short branch, opposite for the long one.
pub fn transfer_normal(r1: &Vector3<f64>, r2: &Vector3<f64>, d1: BranchFlag) -> Result<Vector3<f64>> {
    let h = r1.cross(r2);
    let hn = h.norm();
    if !(hn > COLLINEAR_SIN * r1.norm() * r2.norm()) {
        return Err(Error::Collinear);
    }
    let h = h / hn;
    Ok(match d1 {
        BranchFlag::Short => h,
        BranchFlag::Long => -h,
    })
}

/// How the transfer plane is chosen. `Branch` takes it from the endpoint
/// geometry; `Fixed` pins the angular-momentum direction, which is what
/// coplanar problems need for arcs to pass through `theta = pi` continuously.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransferPlane {
    Branch(BranchFlag),
    Fixed(Vector3<f64>),
}

/// Transfer angle, unit normal and equivalent branch flag.
pub fn transfer_geometry(
    r1: &Vector3<f64>,
    r2: &Vector3<f64>,
    plane: TransferPlane,
) -> Result<(f64, Vector3<f64>, BranchFlag)> {
    match plane {
        TransferPlane::Branch(d1) => Ok((transfer_angle(r1, r2, d1)?, transfer_normal(r1, r2, d1)?, d1)),
        TransferPlane::Fixed(n) => {
            let h = r1.cross(r2);
            let sin = h.dot(&n);
            let cos = r1.dot(r2);
            if !(h.norm() > COLLINEAR_SIN * r1.norm() * r2.norm()) && cos > 0.0 {
                return Err(Error::Collinear);
            }
            let theta = sin.atan2(cos).rem_euclid(TAU);
            let d1 = if theta <= PI { BranchFlag::Short } else { BranchFlag::Long };
            Ok((theta, n, d1))
        }
    }
}

pub fn transfer_angle(r1: &Vector3<f64>, r2: &Vector3<f64>, d1: BranchFlag) -> Result<f64> {
    let c = r1.cross(r2).norm();
    if !(c > COLLINEAR_SIN * r1.norm() * r2.norm()) {
        return Err(Error::Collinear);
    }
    let ts = c.atan2(r1.dot(r2));
    Ok(match d1 {
        BranchFlag::Short => ts,
        BranchFlag::Long => TAU - ts,
    })
}

fn hypergeometric_f(z: f64) -> f64 {
    let (mut sj, mut cj) = (1.0, 1.0);
    let mut j = 0.0;
    loop {
        let cj1 = cj * (3.0 + j) * (1.0 + j) / (2.5 + j) * z / (j + 1.0);
        sj += cj1;
        cj = cj1;
        j += 1.0;
        if cj1.abs() < 1e-16 || j > 200.0 {
            return sj;
        }
    }
}

/// Nondimensional time of flight as a function of `x` for `N = 0`.
fn x2tof(x: f64, lam: f64) -> f64 {
    let dist = (x - 1.0).abs();
    if dist < 0.2 && dist > 0.01 {
        // Lagrange
        let a = 1.0 / (1.0 - x * x);
        if a > 0.0 {
            let alfa = 2.0 * x.acos();
            let mut beta = 2.0 * (lam * lam / a).sqrt().asin();
            if lam < 0.0 {
                beta = -beta;
            }
            a * a.sqrt() * ((alfa - alfa.sin()) - (beta - beta.sin())) / 2.0
        } else {
            let alfa = 2.0 * x.acosh();
            let mut beta = 2.0 * (-lam * lam / a).sqrt().asinh();
            if lam < 0.0 {
                beta = -beta;
            }
            -a * (-a).sqrt() * ((beta - beta.sinh()) - (alfa - alfa.sinh())) / 2.0
        }
    } else {
        let k = lam * lam;
        let e = x * x - 1.0;
        let rho = e.abs();
        let z = (1.0 + k * e).sqrt();
        if dist < 0.01 {
            // Battin series
            let eta = z - lam * x;
            let s1 = 0.5 * (1.0 - lam - x * eta);
            let q = 4.0 / 3.0 * hypergeometric_f(s1);
            (eta.powi(3) * q + 4.0 * lam * eta) / 2.0
        } else {
            // Lancaster
            let y = rho.sqrt();
            let g = x * z - lam * e;
            let d = if e < 0.0 {
                g.clamp(-1.0, 1.0).acos()
            } else {
                let f = y * (z - lam * x);
                (f + g).ln()
            };
            (x - lam * z - d / y) / e
        }
    }
}

fn dtdx(x: f64, t: f64, lam: f64) -> f64 {
    let umx2 = 1.0 - x * x;
    if umx2.abs() > 1e-3 {
        let y = (1.0 - lam * lam * umx2).sqrt();
        (3.0 * t * x - 2.0 + 2.0 * lam.powi(3) * x / y) / umx2
    } else {
        let h = 1e-6;
        (x2tof(x + h, lam) - x2tof(x - h, lam)) / (2.0 * h)
    }
}

/// Solves for `x` with `x2tof(x) = t_target`.
fn find_x(t_target: f64, lam: f64) -> Result<f64> {
    let t00 = lam.acos() + lam * (1.0 - lam * lam).sqrt();
    let t1 = 2.0 / 3.0 * (1.0 - lam.powi(3));
    let x0 = if t_target >= t00 {
        (t00 / t_target).powf(2.0 / 3.0) - 1.0
    } else if t_target < t1 {
        2.5 * t1 / t_target * (t1 - t_target) / (1.0 - lam.powi(5)) + 1.0
    } else {
        (t00 / t_target).powf((t1 / t00).log2()) - 1.0
    };

    // bracket: T(lo) > target > T(hi)
    let mut lo = -1.0;
    let mut hi = 1.0f64.max(x0 + 1.0);
    let mut n = 0;
    while x2tof(hi, lam) > t_target {
        lo = hi;
        hi = 2.0 * hi + 1.0;
        n += 1;
        if n > 200 {
            return Err(Error::LambertNonConvergence);
        }
    }
    let mut x = if x0 > lo && x0 < hi { x0 } else { 0.5 * (lo + hi) };
    for _ in 0..100 {
        let t = x2tof(x, lam);
        let res = t - t_target;
        if res.abs() <= 1e-13 * t_target {
            return Ok(x);
        }
        if res > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = dtdx(x, t, lam);
        let mut next = x - res / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 2.0 * f64::EPSILON * (1.0 + x.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::LambertNonConvergence)
}

fn conic_of(r1: &Vector3<f64>, v1: &Vector3<f64>, g: GravModel) -> Conic {
    let scale = g.mu / r1.norm();
    let en = 0.5 * v1.norm_squared() - scale;
    if en.abs() <= 1e-12 * scale {
        Conic::Parabolic
    } else if en < 0.0 {
        Conic::Elliptic
    } else {
        Conic::Hyperbolic
    }
}

pub fn solve_lambert(
    r1: &Vector3<f64>,
    r2: &Vector3<f64>,
    tof: f64,
    d1: BranchFlag,
    g: GravModel,
) -> Result<LambertSolution> {
    solve_lambert_in(r1, r2, tof, TransferPlane::Branch(d1), g)
}

pub fn solve_lambert_in(
    r1: &Vector3<f64>,
    r2: &Vector3<f64>,
    tof: f64,
    plane: TransferPlane,
    g: GravModel,
) -> Result<LambertSolution> {
    if !(tof > 0.0 && tof.is_finite()) {
        return Err(Error::InvalidTof(tof));
    }
    let (theta, ih, d1) = transfer_geometry(r1, r2, plane)?;
    let mu = g.mu;
    let r1n = r1.norm();
    let r2n = r2.norm();
    let c = (r2 - r1).norm();
    let s = 0.5 * (r1n + r2n + c);
    let ir1 = r1 / r1n;
    let ir2 = r2 / r2n;
    let mut lam = (1.0 - c / s).max(0.0).sqrt();
    if theta > PI {
        lam = -lam;
    }
    let (it1, it2) = (ih.cross(&ir1), ih.cross(&ir2));
    let t = (2.0 * mu / s.powi(3)).sqrt() * tof;
    let x = find_x(t, lam)?;

    let gamma = (mu * s / 2.0).sqrt();
    let rho = (r1n - r2n) / c;
    let sigma = (1.0 - rho * rho).max(0.0).sqrt();
    let y = (1.0 - lam * lam + lam * lam * x * x).sqrt();
    let vr1 = gamma * ((lam * y - x) - rho * (lam * y + x)) / r1n;
    let vr2 = -gamma * ((lam * y - x) + rho * (lam * y + x)) / r2n;
    let vt = gamma * sigma * (y + lam * x);
    let v1g = vr1 * ir1 + (vt / r1n) * it1;
    let v2g = vr2 * ir2 + (vt / r2n) * it2;
    Ok(LambertSolution { v1g, v2g, theta, conic: conic_of(r1, &v1g, g), d1 })
}

fn wrap_pm_pi(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Parameters of the infinite-time parabolic arc: `(f1, p)`.
///
/// The endpoint true anomaly solves `A cos f1 + B sin f1 = C`. The arc has to
/// leave `r1` on the outbound leg and reach `r2` after passing `f = pi`, i.e.
/// `pi - theta < f1 < pi`.
pub fn parabolic_anomaly(r1n: f64, r2n: f64, theta: f64) -> Result<(f64, f64)> {
    let a = r1n - r2n * theta.cos();
    let b = r2n * theta.sin();
    let c = r2n - r1n;
    let rr = a.hypot(b);
    let mut q = c / rr;
    if q.abs() > 1.0 + 1e-12 || !q.is_finite() {
        return Err(Error::NoParabolicConnection);
    }
    q = q.clamp(-1.0, 1.0);
    let delta = b.atan2(a);
    let traverses = |f: f64| f < PI && f + theta > PI;
    for f1 in [wrap_pm_pi(delta + q.acos()), wrap_pm_pi(delta - q.acos())] {
        if traverses(f1) {
            return Ok((f1, r1n * (1.0 + f1.cos())));
        }
    }
    Err(Error::NoParabolicConnection)
}

pub fn parabolic_lambert(
    r1: &Vector3<f64>,
    r2: &Vector3<f64>,
    d1: BranchFlag,
    g: GravModel,
) -> Result<LambertSolution> {
    parabolic_lambert_in(r1, r2, TransferPlane::Branch(d1), g)
}

pub fn parabolic_lambert_in(
    r1: &Vector3<f64>,
    r2: &Vector3<f64>,
    plane: TransferPlane,
    g: GravModel,
) -> Result<LambertSolution> {
    let (theta, h, d1) = transfer_geometry(r1, r2, plane)?;
    let (f1, p) = parabolic_anomaly(r1.norm(), r2.norm(), theta)?;
    let k = (g.mu / p).sqrt();
    let vel = |r: &Vector3<f64>, f: f64| {
        let ur = r.normalize();
        let ut = h.cross(&ur);
        k * (f.sin() * ur + (1.0 + f.cos()) * ut)
    };
    Ok(LambertSolution {
        v1g: vel(r1, f1),
        v2g: vel(r2, f1 + theta),
        theta,
        conic: Conic::Parabolic,
        d1,
    })
}
