//! Primer vector histories along converged transfers.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::continuation::FamilyMember;
use crate::cost::{invert_phi_rv_for, ScenarioContext, DEGENERATE_BURN};
use crate::error::{Error, Result};
use crate::kepler::{propagate_variation, propagate_with_stm, CartesianState, GravModel};

pub const DEFAULT_SAMPLES: usize = 400;
pub const DEFAULT_PVT_TOL: f64 = 1e-3;
/// Fraction of the arc excluded at each end from the interior maximum.
pub const INTERIOR_MARGIN: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimerSample {
    pub tau: f64,
    pub p: [f64; 3],
    pub pmag: f64,
    /// Transfer-arc position at `tau` [km].
    pub r: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimerHistory {
    pub samples: Vec<PrimerSample>,
    pub boundary_residual: f64,
    /// Largest interior magnitude, refined between samples.
    pub interior_max: f64,
    pub interior_argmax: f64,
}

/// Transfer arc and primer initial conditions for a member.
struct PrimerArc {
    s0: CartesianState,
    p0: Vector3<f64>,
    pdot0: Vector3<f64>,
    tof: f64,
    g: GravModel,
}

impl PrimerArc {
    fn new(member: &FamilyMember, ctx: &ScenarioContext) -> Result<Self> {
        let c = &member.cost;
        let (n1, n2) = (c.dv1.norm(), c.dv2.norm());
        if n1 < DEGENERATE_BURN || n2 < DEGENERATE_BURN {
            return Err(Error::DegenerateBurn);
        }
        let (u1, u2) = (c.dv1 / n1, c.dv2 / n2);
        let (s1, _) = ctx.endpoints(&member.x)?;
        let s0 = CartesianState::new(s1.r, c.lambert.v1g);
        let tof = member.x.tof;
        let (_, stm) = propagate_with_stm(&s0, tof, ctx.g)?;
        let rv_inv = invert_phi_rv_for(&stm, ctx.plane_normal())?;
        let mut pdot0 = rv_inv * (u2 - stm.rr() * u1);
        // two rounds of refinement against the propagated end value
        for _ in 0..2 {
            let (_, pf, _) = propagate_variation(&s0, &u1, &pdot0, tof, ctx.g)?;
            pdot0 += rv_inv * (u2 - pf);
        }
        Ok(Self { s0, p0: u1, pdot0, tof, g: ctx.g })
    }

    fn at(&self, tau: f64) -> Result<(CartesianState, Vector3<f64>)> {
        let (s, p, _) = propagate_variation(&self.s0, &self.p0, &self.pdot0, tau, self.g)?;
        Ok((s, p))
    }

    fn pmag(&self, tau: f64) -> f64 {
        self.at(tau).map(|(_, p)| p.norm()).unwrap_or(f64::NAN)
    }
}

/// Golden-section maximization of `f` on `[a, b]`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Solves the primer boundary value problem along the member's transfer arc
/// and samples it at `n_samples + 1` equally spaced epochs.
pub fn primer_history(member: &FamilyMember, ctx: &ScenarioContext, n_samples: usize) -> Result<PrimerHistory> {
    if n_samples < 2 {
        return Err(Error::InvalidConfig("primer history needs at least 2 samples".into()));
    }
    let arc = PrimerArc::new(member, ctx)?;
    let c = &member.cost;
    let (u1, u2) = (c.dv1.normalize(), c.dv2.normalize());
    let mut samples = Vec::with_capacity(n_samples + 1);
    for k in 0..=n_samples {
        let tau = arc.tof * k as f64 / n_samples as f64;
        let (s, p) = arc.at(tau)?;
        samples.push(PrimerSample { tau, p: p.into(), pmag: p.norm(), r: s.r.into() });
    }
    let p_first = Vector3::from(samples[0].p);
    let p_last = Vector3::from(samples[n_samples].p);
    let boundary_residual = (p_first - u1).amax().max((p_last - u2).amax());

    let lo = INTERIOR_MARGIN * arc.tof;
    let hi = (1.0 - INTERIOR_MARGIN) * arc.tof;
    let smax = *samples
        .iter()
        .filter(|s| s.tau >= lo && s.tau <= hi)
        .max_by(|a, b| a.pmag.total_cmp(&b.pmag))
        .ok_or(Error::InvalidConfig("empty interior".into()))?;
    let dt = arc.tof / n_samples as f64;
    let a = (smax.tau - dt).max(lo);
    let b = (smax.tau + dt).min(hi);
    let (tr, fr) = golden_max(|t| arc.pmag(t), a, b, 1e-9 * arc.tof.max(1.0));
    let (interior_argmax, interior_max) = if fr >= smax.pmag { (tr, fr) } else { (smax.tau, smax.pmag) };

    Ok(PrimerHistory { samples, boundary_residual, interior_max, interior_argmax })
}

/// Primer magnitude condition with an inclusive tolerance.
pub fn check_pvt(h: &PrimerHistory, tol: f64) -> bool {
    h.interior_max <= 1.0 + tol
}

/// Interior points where the magnitude touches unity, with the rate of
/// `|p|` there; the coast condition asks for that rate to vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoastTouch {
    pub tau: f64,
    pub pmag: f64,
    pub pmag_rate: f64,
}

pub fn coast_diagnostic(h: &PrimerHistory, tol: f64) -> Vec<CoastTouch> {
    let s = &h.samples;
    let n = s.len();
    let mut out = Vec::new();
    for k in 1..n.saturating_sub(1) {
        let m = s[k].pmag;
        if m >= 1.0 - tol && m >= s[k - 1].pmag && m >= s[k + 1].pmag {
            let rate = (s[k + 1].pmag - s[k - 1].pmag) / (s[k + 1].tau - s[k - 1].tau);
            out.push(CoastTouch { tau: s[k].tau, pmag: m, pmag_rate: rate });
        }
    }
    out
}

/// Runs the primer check on every member, filling `pvt_ok`. Members whose
/// history cannot be built are left as `None`.
pub fn annotate_members(members: &mut [FamilyMember], ctx: &ScenarioContext, n_samples: usize, tol: f64) {
    use rayon::prelude::*;
    members.par_iter_mut().for_each(|m| {
        m.pvt_ok = primer_history(m, ctx, n_samples).ok().map(|h| check_pvt(&h, tol));
    });
}
