//! Pseudo-arclength continuation of one-parameter families of stationary
//! transfers.
//!
//! The two domain partials of `J` are driven to zero in the scaled design
//! space `X = (M1, M2, t / time_scale)`. Their solution set is a curve; it is
//! followed by predicting along the kernel of the 2x3 constraint Jacobian and
//! correcting with Newton on the constraints plus an arclength closure.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cost::{
    evaluate_cost, sym_eigenvalues, classify_stationary, CostEval, DerivDomain, DesignPoint,
    ScenarioContext, StationaryClass,
};
use crate::error::{Error, Result};
use crate::kepler::angle_diff;
use crate::lambert::BranchFlag;

pub const JAC_STEP: f64 = 1e-7;
pub const RANK_TOL: f64 = 1e-8;
pub const CYCLE_ARM_STEPS: usize = 20;
pub const MAX_HALVINGS: u32 = 5;
pub const JUMP_FACTOR: f64 = 5.0;
/// Newton also stops once its step falls below this (scaled units) with the
/// residual under `STALL_RESIDUAL`; near pi the residual's rounding floor can
/// sit above `newton_tol`.
pub const STEP_TOL: f64 = 1e-11;
pub const STALL_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationConfig {
    /// Arclength step, scaled units.
    pub ds: f64,
    /// Upper time-of-flight bound [s].
    pub tmax: f64,
    /// Lower time-of-flight bound [s].
    pub tmin: f64,
    /// Halt when `|theta - pi|` drops below this [rad].
    pub sing_tol: f64,
    /// Closure distance to the starting member, scaled units.
    pub cycle_tol: f64,
    /// Member cap per direction.
    pub max_steps: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            ds: 0.01,
            tmax: 4.0e4,
            tmin: 10.0,
            sing_tol: 0.01,
            cycle_tol: 0.005,
            max_steps: 10_000,
            newton_tol: 1e-10,
            newton_max_iter: 20,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.ds > 0.0
            && self.tmin > 0.0
            && self.tmin < self.tmax
            && self.sing_tol > 0.0
            && self.cycle_tol > 0.0
            && self.newton_tol > 0.0
            && self.max_steps > 0
            && self.newton_max_iter > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("continuation config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    TofAboveMax,
    TofBelowMin,
    SingularityPi,
    CycleClosed,
    StepCap,
    CorrectorFailure,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::TofAboveMax => "tof_above_max",
            TerminationReason::TofBelowMin => "tof_below_min",
            TerminationReason::SingularityPi => "singularity_pi",
            TerminationReason::CycleClosed => "cycle_closed",
            TerminationReason::StepCap => "step_cap",
            TerminationReason::CorrectorFailure => "corrector_failure",
        }
    }
}

impl std::str::FromStr for TerminationReason {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        use TerminationReason::*;
        [TofAboveMax, TofBelowMin, SingularityPi, CycleClosed, StepCap, CorrectorFailure]
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown termination reason {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyMember {
    pub x: DesignPoint,
    pub cost: CostEval,
    pub hclass: StationaryClass,
    /// Eigenvalues of the domain Hessian, ascending.
    pub eig: [f64; 2],
    pub pvt_ok: Option<bool>,
    pub theta: f64,
    /// Unit tangent in scaled coordinates.
    pub tangent: [f64; 3],
}

impl FamilyMember {
    pub fn scaled(&self, time_scale: f64) -> [f64; 3] {
        self.x.scaled(time_scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub members: Vec<FamilyMember>,
    pub end1: TerminationReason,
    pub end2: TerminationReason,
    pub domain: DerivDomain,
    pub d1: BranchFlag,
    pub seed_id: String,
    /// Member indices reached right after a step-halving retry.
    pub halvings: Vec<usize>,
}

/// Two constraints on the scaled design space.
pub trait ConstraintSystem {
    fn eval(&self, x: &[f64; 3]) -> Result<[f64; 2]>;
}

impl<F> ConstraintSystem for F
where
    F: Fn(&[f64; 3]) -> Result<[f64; 2]>,
{
    fn eval(&self, x: &[f64; 3]) -> Result<[f64; 2]> {
        self(x)
    }
}

pub struct TiotConstraints<'a> {
    pub ctx: &'a ScenarioContext,
    pub dom: DerivDomain,
}

impl ConstraintSystem for TiotConstraints<'_> {
    fn eval(&self, x: &[f64; 3]) -> Result<[f64; 2]> {
        let p = DesignPoint::from_scaled(x, self.ctx.time_scale);
        Ok(evaluate_cost(&p, self.ctx)?.domain_gradient(self.dom))
    }
}

pub fn constraints(x: &DesignPoint, ctx: &ScenarioContext, dom: DerivDomain) -> Result<[f64; 2]> {
    TiotConstraints { ctx, dom }.eval(&x.scaled(ctx.time_scale))
}

/// Central-difference Jacobian of a constraint system.
pub fn jacobian_fd<S: ConstraintSystem + ?Sized>(sys: &S, x: &[f64; 3]) -> Result<Matrix2x3<f64>> {
    let mut jac = Matrix2x3::zeros();
    for k in 0..3 {
        let mut xp = *x;
        let mut xm = *x;
        xp[k] += JAC_STEP;
        xm[k] -= JAC_STEP;
        let cp = sys.eval(&xp)?;
        let cm = sys.eval(&xm)?;
        for i in 0..2 {
            jac[(i, k)] = (cp[i] - cm[i]) / (2.0 * JAC_STEP);
        }
    }
    Ok(jac)
}

pub fn constraint_jacobian(
    x: &DesignPoint,
    ctx: &ScenarioContext,
    dom: DerivDomain,
) -> Result<Matrix2x3<f64>> {
    jacobian_fd(&TiotConstraints { ctx, dom }, &x.scaled(ctx.time_scale))
}

/// Unit kernel vector of a rank-2 2x3 matrix, oriented along `prev` if given.
pub fn null_direction(jac: &Matrix2x3<f64>, prev: Option<&[f64; 3]>) -> Result<[f64; 3]> {
    let gram: Matrix2<f64> = jac * jac.transpose();
    let [lo, hi] = sym_eigenvalues(&gram);
    if !(hi > 0.0) || !(lo.max(0.0).sqrt() > RANK_TOL * hi.sqrt()) {
        return Err(Error::RankDeficient);
    }
    let a = Vector3::new(jac[(0, 0)], jac[(0, 1)], jac[(0, 2)]);
    let b = Vector3::new(jac[(1, 0)], jac[(1, 1)], jac[(1, 2)]);
    let mut n = a.cross(&b).normalize();
    if let Some(p) = prev {
        if n.dot(&Vector3::from(*p)) < 0.0 {
            n = -n;
        }
    }
    Ok([n.x, n.y, n.z])
}

/// Domain Hessian from the design-space Jacobian of the domain gradient.
pub fn domain_hessian(jac: &Matrix2x3<f64>, ctx: &ScenarioContext, dom: DerivDomain) -> Matrix2<f64> {
    let dirs = ctx.domain_directions(dom);
    let mut h = Matrix2::zeros();
    for j in 0..2 {
        for i in 0..2 {
            h[(i, j)] = (0..3).map(|k| jac[(i, k)] * dirs[j][k]).sum();
        }
    }
    let off = 0.5 * (h[(0, 1)] + h[(1, 0)]);
    h[(0, 1)] = off;
    h[(1, 0)] = off;
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub x: [f64; 3],
    /// Jacobian of the constraints at `x`.
    pub jac: Matrix2x3<f64>,
    /// `max(|c|, |F_A|)` before each iteration and at the end.
    pub residuals: Vec<f64>,
}

fn norm3(a: &[f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Newton on `[c(X); (X - x_prev) . N - ds] = 0` from the predictor `xp`.
pub fn correct_generic<S: ConstraintSystem + ?Sized>(
    sys: &S,
    xp: &[f64; 3],
    x_prev: &[f64; 3],
    tangent: &[f64; 3],
    ds: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Correction> {
    let n = Vector3::from(*tangent);
    let mut x = *xp;
    let mut residuals = Vec::new();
    for it in 0..=max_iter {
        let c = sys.eval(&x)?;
        let fa = Vector3::from(sub3(&x, x_prev)).dot(&n) - ds;
        let res = c[0].abs().max(c[1].abs()).max(fa.abs());
        residuals.push(res);
        let jac = jacobian_fd(sys, &x)?;
        if res < tol {
            return Ok(Correction { x, jac, residuals });
        }
        if it == max_iter || !res.is_finite() {
            break;
        }
        let mut a = Matrix3::zeros();
        a.fixed_view_mut::<2, 3>(0, 0).copy_from(&jac);
        a.set_row(2, &n.transpose());
        let rhs = Vector3::new(-c[0], -c[1], -fa);
        let dx = a.lu().solve(&rhs).ok_or(Error::CorrectorFailure)?;
        for k in 0..3 {
            x[k] += dx[k];
        }
        if dx.norm() < STEP_TOL && res < STALL_RESIDUAL {
            let jac = jacobian_fd(sys, &x)?;
            return Ok(Correction { x, jac, residuals });
        }
    }
    Err(Error::CorrectorFailure)
}

/// Minimum-norm Newton onto the solution curve, for seeds.
pub fn project_generic<S: ConstraintSystem + ?Sized>(
    sys: &S,
    x0: &[f64; 3],
    tol: f64,
    max_iter: usize,
) -> Result<Correction> {
    let mut x = *x0;
    let mut residuals = Vec::new();
    for it in 0..=max_iter {
        let c = sys.eval(&x)?;
        let res = c[0].abs().max(c[1].abs());
        residuals.push(res);
        let jac = jacobian_fd(sys, &x)?;
        if res < tol {
            return Ok(Correction { x, jac, residuals });
        }
        if it == max_iter || !res.is_finite() {
            break;
        }
        let gram: Matrix2<f64> = jac * jac.transpose();
        let y = gram
            .lu()
            .solve(&nalgebra::Vector2::new(-c[0], -c[1]))
            .ok_or(Error::RankDeficient)?;
        let dx = jac.transpose() * y;
        for k in 0..3 {
            x[k] += dx[k];
        }
        if dx.norm() < STEP_TOL && res < STALL_RESIDUAL {
            let jac = jacobian_fd(sys, &x)?;
            return Ok(Correction { x, jac, residuals });
        }
    }
    Err(Error::CorrectorFailure)
}

fn build_member(
    x: &[f64; 3],
    jac: &Matrix2x3<f64>,
    prev_tangent: Option<&[f64; 3]>,
    ctx: &ScenarioContext,
    dom: DerivDomain,
) -> Result<FamilyMember> {
    let p = DesignPoint::from_scaled(x, ctx.time_scale);
    let cost = evaluate_cost(&p, ctx)?;
    let tangent = null_direction(jac, prev_tangent)?;
    let h = domain_hessian(jac, ctx, dom);
    Ok(FamilyMember {
        x: p,
        cost,
        hclass: classify_stationary(&h),
        eig: sym_eigenvalues(&h),
        pvt_ok: None,
        theta: cost.theta,
        tangent,
    })
}

/// Corrects a predicted point and returns the resulting member, whose tangent
/// is oriented along `tangent`.
#[allow(clippy::too_many_arguments)]
pub fn correct(
    xp: &DesignPoint,
    x_prev: &DesignPoint,
    tangent: &[f64; 3],
    ds: f64,
    ctx: &ScenarioContext,
    dom: DerivDomain,
    cfg: &ContinuationConfig,
) -> Result<FamilyMember> {
    let ts = ctx.time_scale;
    let sys = TiotConstraints { ctx, dom };
    let prev = x_prev.scaled(ts);
    let c = correct_generic(&sys, &xp.scaled(ts), &prev, tangent, ds, cfg.newton_tol, cfg.newton_max_iter)?;
    let dist = norm3(&sub3(&c.x, &prev));
    let guard = JUMP_FACTOR * ds.abs();
    if dist > guard {
        return Err(Error::JumpGuard { dist, guard });
    }
    build_member(&c.x, &c.jac, Some(tangent), ctx, dom)
}

/// Member record for a point already on the curve.
pub fn member_at(x: &DesignPoint, ctx: &ScenarioContext, dom: DerivDomain) -> Result<FamilyMember> {
    let xs = x.scaled(ctx.time_scale);
    let jac = jacobian_fd(&TiotConstraints { ctx, dom }, &xs)?;
    build_member(&xs, &jac, None, ctx, dom)
}

/// Corrects a seed onto the curve of stationary points.
pub fn correct_seed(
    seed: &DesignPoint,
    ctx: &ScenarioContext,
    dom: DerivDomain,
    cfg: &ContinuationConfig,
) -> Result<FamilyMember> {
    let sys = TiotConstraints { ctx, dom };
    let c = project_generic(&sys, &seed.scaled(ctx.time_scale), cfg.newton_tol, cfg.newton_max_iter)?;
    // orient toward increasing time of flight
    build_member(&c.x, &c.jac, Some(&[0.0, 0.0, 1.0]), ctx, dom)
}

/// Distance from the origin to the segment `[a, b]`.
fn segment_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = sub3(b, a);
    let dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let t = if dd > 0.0 {
        (-(a[0] * d[0] + a[1] * d[1] + a[2] * d[2]) / dd).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm3(&[a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]])
}

/// Offset of `x` from `origin` with angle differences wrapped to `[-pi, pi)`.
pub fn wrapped_offset(x: &[f64; 3], origin: &[f64; 3]) -> [f64; 3] {
    [angle_diff(x[0], origin[0]), angle_diff(x[1], origin[1]), x[2] - origin[2]]
}

pub fn wrapped_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    norm3(&wrapped_offset(a, b))
}

struct Branch {
    members: Vec<FamilyMember>,
    end: TerminationReason,
    halvings: Vec<usize>,
}

fn trace_direction(
    start: &FamilyMember,
    sign: f64,
    ctx: &ScenarioContext,
    dom: DerivDomain,
    cfg: &ContinuationConfig,
    check_cycle: bool,
) -> Branch {
    let ts = ctx.time_scale;
    let origin = start.scaled(ts);
    let mut cur = *start;
    cur.tangent = start.tangent.map(|t| sign * t);
    let mut members = Vec::new();
    let mut halvings = Vec::new();
    let mut ds = cfg.ds;
    let ds_min = cfg.ds / f64::from(1u32 << MAX_HALVINGS);
    let mut streak = 0usize;
    let pi = std::f64::consts::PI;
    // coplanar arcs keep a fixed plane and cross theta = pi regularly
    let pi_stop = !ctx.is_coplanar();

    for step in 0..cfg.max_steps {
        let xs = cur.scaled(ts);
        let mut halved = 0;
        let next = loop {
            let xp: [f64; 3] = std::array::from_fn(|k| xs[k] + ds * cur.tangent[k]);
            match correct(&DesignPoint::from_scaled(&xp, ts), &cur.x, &cur.tangent, ds, ctx, dom, cfg) {
                Ok(m) => break Some(m),
                Err(_) if ds > ds_min => {
                    halved += 1;
                    ds = (0.5 * ds).max(ds_min);
                    streak = 0;
                }
                Err(_) => break None,
            }
        };
        let Some(m) = next else {
            let end = if pi_stop && (cur.theta - pi).abs() < 2.0 * cfg.sing_tol {
                TerminationReason::SingularityPi
            } else {
                TerminationReason::CorrectorFailure
            };
            return Branch { members, end, halvings };
        };
        if m.x.tof > cfg.tmax {
            return Branch { members, end: TerminationReason::TofAboveMax, halvings };
        }
        if m.x.tof < cfg.tmin {
            return Branch { members, end: TerminationReason::TofBelowMin, halvings };
        }
        if halved > 0 {
            halvings.push(members.len());
        }
        let xn = m.scaled(ts);
        members.push(m);
        if pi_stop && (m.theta - pi).abs() < cfg.sing_tol {
            return Branch { members, end: TerminationReason::SingularityPi, halvings };
        }
        if check_cycle && step + 1 >= CYCLE_ARM_STEPS {
            let a = wrapped_offset(&xs, &origin);
            let b: [f64; 3] = std::array::from_fn(|k| a[k] + xn[k] - xs[k]);
            if segment_distance(&a, &b) < cfg.cycle_tol {
                return Branch { members, end: TerminationReason::CycleClosed, halvings };
            }
        }
        cur = m;
        streak += 1;
        if streak >= 10 && ds < cfg.ds {
            ds = (2.0 * ds).min(cfg.ds);
            streak = 0;
        }
    }
    Branch { members, end: TerminationReason::StepCap, halvings }
}

/// Traces the family through `seed` in both directions. Members are ordered
/// from the `end1` extremity to the `end2` extremity; the `end2` direction is
/// the one of increasing time of flight at the seed.
pub fn trace_family(
    seed: &DesignPoint,
    ctx: &ScenarioContext,
    dom: DerivDomain,
    cfg: &ContinuationConfig,
) -> Result<Family> {
    trace_family_tagged(seed, ctx, dom, cfg, "manual")
}

pub fn trace_family_tagged(
    seed: &DesignPoint,
    ctx: &ScenarioContext,
    dom: DerivDomain,
    cfg: &ContinuationConfig,
    seed_id: &str,
) -> Result<Family> {
    cfg.validate()?;
    let start = correct_seed(seed, ctx, dom, cfg)?;
    let fwd = trace_direction(&start, 1.0, ctx, dom, cfg, true);
    let (bwd, end1) = if fwd.end == TerminationReason::CycleClosed {
        (Branch { members: Vec::new(), end: TerminationReason::CycleClosed, halvings: Vec::new() },
         TerminationReason::CycleClosed)
    } else {
        let b = trace_direction(&start, -1.0, ctx, dom, cfg, false);
        let e = b.end;
        (b, e)
    };

    let nb = bwd.members.len();
    let mut members: Vec<FamilyMember> = bwd
        .members
        .into_iter()
        .rev()
        .map(|mut m| {
            m.tangent = m.tangent.map(|t| -t);
            m
        })
        .collect();
    members.push(start);
    members.extend(fwd.members);
    let mut halvings: Vec<usize> = bwd.halvings.iter().map(|&i| nb - 1 - i).collect();
    halvings.extend(fwd.halvings.iter().map(|&i| nb + 1 + i));
    halvings.sort_unstable();

    Ok(Family {
        members,
        end1,
        end2: fwd.end,
        domain: dom,
        d1: ctx.d1,
        seed_id: seed_id.to_string(),
        halvings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_direction_examples() {
        let jac = Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        let n = null_direction(&jac, Some(&[0.0, 0.0, -0.3])).unwrap();
        assert_eq!(n, [0.0, 0.0, -1.0]);
        let n = null_direction(&jac, Some(&[0.0, 0.0, 0.3])).unwrap();
        assert_eq!(n, [0.0, 0.0, 1.0]);
        let jac = Matrix2x3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0 + 1e-12);
        assert!(matches!(null_direction(&jac, None), Err(Error::RankDeficient)));
    }

    #[test]
    fn quadratic_jacobian_is_exact() {
        // c = grad of J = x^2 + 2 x y + 3 y^2 + x t - t^2 / 2 wrt (x, y)
        let sys = |x: &[f64; 3]| Ok([2.0 * x[0] + 2.0 * x[1] + x[2], 2.0 * x[0] + 6.0 * x[1]]);
        let jac = jacobian_fd(&sys, &[0.3, -0.2, 1.5]).unwrap();
        let want = Matrix2x3::new(2.0, 2.0, 1.0, 2.0, 6.0, 0.0);
        assert!((jac - want).amax() < 1e-6);
    }

    #[test]
    fn corrector_converges_quadratically_on_paraboloid() {
        // solution curve: x = t^2, y = -t
        let sys = |x: &[f64; 3]| Ok([x[0] - x[2] * x[2], x[1] + x[2]]);
        let x0 = [1.0, -1.0, 1.0];
        let jac = jacobian_fd(&sys, &x0).unwrap();
        let n = null_direction(&jac, Some(&[0.0, 0.0, 1.0])).unwrap();
        let ds = 0.2;
        let xp: [f64; 3] = std::array::from_fn(|k| x0[k] + ds * n[k]);
        let c = correct_generic(&sys, &xp, &x0, &n, ds, 1e-13, 20).unwrap();
        let r = &c.residuals;
        assert!(r.len() >= 3);
        for w in r.windows(2).skip(1) {
            if w[1] > 1e-12 {
                // e_{k+1} <= K e_k^2
                assert!(w[1] <= 10.0 * w[0] * w[0], "{r:?}");
            }
        }
        assert!((c.x[0] - c.x[2] * c.x[2]).abs() < 1e-12);
    }

    #[test]
    fn corrector_fixed_point_with_zero_step() {
        let sys = |x: &[f64; 3]| Ok([x[0] - x[2] * x[2], x[1] + x[2]]);
        let x0 = [4.0, -2.0, 2.0];
        let n = [0.5, 0.5, 0.5];
        let c = correct_generic(&sys, &x0, &x0, &n, 0.0, 1e-12, 20).unwrap();
        assert_eq!(c.x, x0);
        assert_eq!(c.residuals.len(), 1);
    }

    #[test]
    fn segment_distance_basics() {
        assert!((segment_distance(&[1.0, -1.0, 0.0], &[1.0, 1.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((segment_distance(&[1.0, 1.0, 0.0], &[2.0, 1.0, 0.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn termination_reason_round_trip() {
        use std::str::FromStr;
        for r in [
            TerminationReason::TofAboveMax,
            TerminationReason::TofBelowMin,
            TerminationReason::SingularityPi,
            TerminationReason::CycleClosed,
            TerminationReason::StepCap,
            TerminationReason::CorrectorFailure,
        ] {
            assert_eq!(TerminationReason::from_str(r.as_str()).unwrap(), r);
        }
    }
}
