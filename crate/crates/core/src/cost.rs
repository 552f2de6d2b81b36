//! Two-impulse cost `J = |dv1| + |dv2|` and its derivatives.
//!
//! First derivatives are analytic: Lambert velocity sensitivities come from
//! the STM blocks of the transfer arc. Second derivatives are central
//! differences of the analytic gradient in scaled coordinates
//! `(M1, M2, t / time_scale)`.

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kepler::{
    elements_to_state, gravity, mean_motion, propagate_with_stm, state_derivs_wrt_mean_anomaly,
    CartesianState, ClassicalElements, GravModel, Stm,
};
use crate::lambert::{solve_lambert_in, BranchFlag, LambertSolution, TransferPlane};

pub const DEGENERATE_BURN: f64 = 1e-12;
pub const STM_COND_MAX: f64 = 1e12;
pub const FD_STEP: f64 = 1e-7;
pub const EIG_TOL: f64 = 1e-10;
/// `|h1 x h2|` below which the two orbits are treated as coplanar.
pub const COPLANAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub m1: f64,
    pub m2: f64,
    /// Time of flight [s].
    pub tof: f64,
}

impl DesignPoint {
    pub fn new(m1: f64, m2: f64, tof: f64) -> Self {
        Self { m1, m2, tof }
    }

    pub fn scaled(&self, time_scale: f64) -> [f64; 3] {
        [self.m1, self.m2, self.tof / time_scale]
    }

    pub fn from_scaled(x: &[f64; 3], time_scale: f64) -> Self {
        Self { m1: x[0], m2: x[1], tof: x[2] * time_scale }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivDomain {
    Angular,
    Temporal,
}

impl DerivDomain {
    pub fn as_str(self) -> &'static str {
        match self {
            DerivDomain::Angular => "angular",
            DerivDomain::Temporal => "temporal",
        }
    }
}

impl std::str::FromStr for DerivDomain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "angular" => Ok(DerivDomain::Angular),
            "temporal" => Ok(DerivDomain::Temporal),
            _ => Err(Error::InvalidConfig(format!("unknown domain {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioContext {
    pub dep: ClassicalElements,
    pub arr: ClassicalElements,
    pub g: GravModel,
    pub d1: BranchFlag,
    /// Time unit of the scaled design coordinates [s].
    pub time_scale: f64,
}

impl ScenarioContext {
    pub fn new(
        dep: ClassicalElements,
        arr: ClassicalElements,
        g: GravModel,
        d1: BranchFlag,
    ) -> Result<Self> {
        let ctx = Self { dep, arr, g, d1, time_scale: 1000.0 };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        self.dep.validate()?;
        self.arr.validate()?;
        GravModel::new(self.g.mu)?;
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(Error::InvalidConfig("time_scale must be positive".into()));
        }
        Ok(())
    }

    /// Common orbit normal when both orbits share a plane.
    pub fn coplanar_normal(&self) -> Option<Vector3<f64>> {
        let h1 = self.dep.angular_momentum_dir();
        let h2 = self.arr.angular_momentum_dir();
        (h1.cross(&h2).norm() < COPLANAR_TOL).then_some(h1)
    }

    /// Fixed plane of the Lambert arcs, if any.
    pub fn plane_normal(&self) -> Option<Vector3<f64>> {
        self.coplanar_normal()
    }

    pub fn is_coplanar(&self) -> bool {
        self.coplanar_normal().is_some()
    }

    /// Transfer plane used for Lambert arcs. In the coplanar case the plane
    /// is fixed and the branch flag picks the sense of motion: long is
    /// prograde with respect to the departure orbit, short is retrograde.
    pub fn transfer_plane(&self) -> TransferPlane {
        match self.coplanar_normal() {
            Some(h) => TransferPlane::Fixed(match self.d1 {
                BranchFlag::Long => h,
                BranchFlag::Short => -h,
            }),
            None => TransferPlane::Branch(self.d1),
        }
    }

    pub fn with_branch(&self, d1: BranchFlag) -> Self {
        Self { d1, ..*self }
    }

    pub fn n1(&self) -> f64 {
        mean_motion(&self.dep, self.g)
    }

    pub fn n2(&self) -> f64 {
        mean_motion(&self.arr, self.g)
    }

    pub fn p1(&self) -> f64 {
        self.dep.period(self.g)
    }

    pub fn p2(&self) -> f64 {
        self.arr.period(self.g)
    }

    pub fn synodic_period(&self) -> f64 {
        std::f64::consts::TAU / (self.n2() - self.n1()).abs()
    }

    /// Design point for departure epoch `t_dep` and time of flight `tof`.
    pub fn design_at(&self, t_dep: f64, tof: f64) -> DesignPoint {
        DesignPoint {
            m1: self.n1() * t_dep + self.dep.m0,
            m2: self.n2() * (t_dep + tof) + self.arr.m0,
            tof,
        }
    }

    /// Departure epoch implied by `x.m1`.
    pub fn departure_epoch(&self, x: &DesignPoint) -> f64 {
        (x.m1 - self.dep.m0) / self.n1()
    }

    /// Arrival-orbit mean anomaly at departure, `M2 - n2 t`.
    pub fn m2_dep(&self, x: &DesignPoint) -> f64 {
        x.m2 - self.n2() * x.tof
    }

    pub fn endpoints(&self, x: &DesignPoint) -> Result<(CartesianState, CartesianState)> {
        Ok((
            elements_to_state(&self.dep, x.m1, self.g)?,
            elements_to_state(&self.arr, x.m2, self.g)?,
        ))
    }

    /// The two domain coordinate directions in scaled design space.
    pub fn domain_directions(&self, dom: DerivDomain) -> [[f64; 3]; 2] {
        match dom {
            DerivDomain::Angular => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            DerivDomain::Temporal => {
                let n1 = self.n1() * self.time_scale;
                let n2 = self.n2() * self.time_scale;
                [[n1, n2, 0.0], [0.0, n2, 1.0]]
            }
        }
    }
}

/// Cost without derivatives; defined even when a burn vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostValue {
    pub j: f64,
    pub dv1: Vector3<f64>,
    pub dv2: Vector3<f64>,
    pub lambert: LambertSolution,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEval {
    pub j: f64,
    pub dv1: Vector3<f64>,
    pub dv2: Vector3<f64>,
    pub djdm1: f64,
    pub djdm2: f64,
    /// Explicit time-of-flight sensitivity, per scaled time unit.
    pub djdtof_explicit: f64,
    /// Per scaled time unit.
    pub djdt_dep: f64,
    /// Per scaled time unit.
    pub djdt_total: f64,
    pub theta: f64,
    pub lambert: LambertSolution,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambertSensitivities {
    pub dv1_dr1: Matrix3<f64>,
    pub dv1_dr2: Matrix3<f64>,
    pub dv2_dr1: Matrix3<f64>,
    pub dv2_dr2: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TofSensitivity {
    pub dv1_dt: Vector3<f64>,
    pub dv2_dt: Vector3<f64>,
    /// [km/s per s].
    pub djdt: f64,
}

pub fn evaluate_j(x: &DesignPoint, ctx: &ScenarioContext) -> Result<CostValue> {
    let (s1, s2) = ctx.endpoints(x)?;
    let lambert = solve_lambert_in(&s1.r, &s2.r, x.tof, ctx.transfer_plane(), ctx.g)?;
    let dv1 = lambert.v1g - s1.v;
    let dv2 = s2.v - lambert.v2g;
    Ok(CostValue { j: dv1.norm() + dv2.norm(), dv1, dv2, lambert })
}

/// Inverse of `phi_rv` restricted to the plane with unit normal `n`:
/// `Q (Q' phi_rv Q)^-1 Q'`. For coplanar problems only in-plane
/// perturbations occur, and the out-of-plane block is singular at
/// `theta = pi`.
pub fn invert_phi_rv_in_plane(stm: &Stm, n: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let e1 = n.cross(&Vector3::x()).try_normalize(1e-6).unwrap_or_else(|| n.cross(&Vector3::y()).normalize());
    let e2 = n.cross(&e1);
    let q = nalgebra::Matrix3x2::from_columns(&[e1, e2]);
    let a = q.transpose() * stm.rv() * q;
    let sv = a.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond < STM_COND_MAX) {
        return Err(Error::SingularStm(cond));
    }
    let inv = a.try_inverse().ok_or(Error::SingularStm(f64::INFINITY))?;
    Ok(q * inv * q.transpose())
}

/// `phi_rv` inverse, restricted to the transfer plane when one is given.
pub fn invert_phi_rv_for(stm: &Stm, plane: Option<Vector3<f64>>) -> Result<Matrix3<f64>> {
    match plane {
        Some(n) => invert_phi_rv_in_plane(stm, &n),
        None => invert_phi_rv(stm),
    }
}

/// Inverse of `phi_rv` with a condition-number guard.
pub fn invert_phi_rv(stm: &Stm) -> Result<Matrix3<f64>> {
    let svd = stm.rv().svd(true, true);
    let sv = svd.singular_values;
    let cond = sv.max() / sv.min();
    if !(cond < STM_COND_MAX) {
        return Err(Error::SingularStm(cond));
    }
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let sinv = Matrix3::from_diagonal(&sv.map(|s| 1.0 / s));
    Ok(vt.transpose() * sinv * u.transpose())
}

/// STM-based sensitivities of the arc `(r1, v1g) -> (r2, v2g)` over `tof`.
pub fn arc_sensitivities(
    r1: &Vector3<f64>,
    lambert: &LambertSolution,
    tof: f64,
    plane: Option<Vector3<f64>>,
    g: GravModel,
) -> Result<(LambertSensitivities, Vector3<f64>, Vector3<f64>)> {
    let (fin, stm) = propagate_with_stm(&CartesianState::new(*r1, lambert.v1g), tof, g)?;
    let rv_inv = invert_phi_rv_for(&stm, plane)?;
    let vv_rv_inv = stm.vv() * rv_inv;
    let sens = LambertSensitivities {
        dv1_dr1: -rv_inv * stm.rr(),
        dv1_dr2: rv_inv,
        dv2_dr1: stm.vr() - vv_rv_inv * stm.rr(),
        dv2_dr2: vv_rv_inv,
    };
    let dv1_dt = -rv_inv * lambert.v2g;
    let dv2_dt = -vv_rv_inv * lambert.v2g + gravity(&fin.r, g.mu);
    Ok((sens, dv1_dt, dv2_dt))
}

pub fn lambert_velocity_sensitivities(
    x: &DesignPoint,
    ctx: &ScenarioContext,
) -> Result<LambertSensitivities> {
    let (s1, s2) = ctx.endpoints(x)?;
    let lam = solve_lambert_in(&s1.r, &s2.r, x.tof, ctx.transfer_plane(), ctx.g)?;
    Ok(arc_sensitivities(&s1.r, &lam, x.tof, ctx.plane_normal(), ctx.g)?.0)
}

pub fn explicit_tof_sensitivity(x: &DesignPoint, ctx: &ScenarioContext) -> Result<TofSensitivity> {
    let c = evaluate_j(x, ctx)?;
    let (s1, _) = ctx.endpoints(x)?;
    let (_, dv1_dt, dv2_dt) = arc_sensitivities(&s1.r, &c.lambert, x.tof, ctx.plane_normal(), ctx.g)?;
    let (u1, u2) = burn_directions(&c)?;
    Ok(TofSensitivity { dv1_dt, dv2_dt, djdt: u1.dot(&dv1_dt) - u2.dot(&dv2_dt) })
}

fn burn_directions(c: &CostValue) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let (n1, n2) = (c.dv1.norm(), c.dv2.norm());
    if n1 < DEGENERATE_BURN || n2 < DEGENERATE_BURN {
        return Err(Error::DegenerateBurn);
    }
    Ok((c.dv1 / n1, c.dv2 / n2))
}

pub fn evaluate_cost(x: &DesignPoint, ctx: &ScenarioContext) -> Result<CostEval> {
    let c = evaluate_j(x, ctx)?;
    let (u1, u2) = burn_directions(&c)?;
    let (s1, _) = ctx.endpoints(x)?;
    let (sens, dv1_dt, dv2_dt) = arc_sensitivities(&s1.r, &c.lambert, x.tof, ctx.plane_normal(), ctx.g)?;
    let (dr1, dv1) = state_derivs_wrt_mean_anomaly(&ctx.dep, x.m1, ctx.g)?;
    let (dr2, dv2) = state_derivs_wrt_mean_anomaly(&ctx.arr, x.m2, ctx.g)?;

    // dv1 = v1g - v1, dv2 = v2 - v2g
    let djdm1 = u1.dot(&(sens.dv1_dr1 * dr1 - dv1)) - u2.dot(&(sens.dv2_dr1 * dr1));
    let djdm2 = u1.dot(&(sens.dv1_dr2 * dr2)) + u2.dot(&(dv2 - sens.dv2_dr2 * dr2));
    let djdt = u1.dot(&dv1_dt) - u2.dot(&dv2_dt);

    let ts = ctx.time_scale;
    let (n1, n2) = (ctx.n1(), ctx.n2());
    Ok(CostEval {
        j: c.j,
        dv1: c.dv1,
        dv2: c.dv2,
        djdm1,
        djdm2,
        djdtof_explicit: djdt * ts,
        djdt_dep: (n1 * djdm1 + n2 * djdm2) * ts,
        djdt_total: (n2 * djdm2 + djdt) * ts,
        theta: c.lambert.theta,
        lambert: c.lambert,
    })
}

impl CostEval {
    pub fn domain_gradient(&self, dom: DerivDomain) -> [f64; 2] {
        match dom {
            DerivDomain::Angular => [self.djdm1, self.djdm2],
            DerivDomain::Temporal => [self.djdt_dep, self.djdt_total],
        }
    }
}

pub fn gradient(x: &DesignPoint, ctx: &ScenarioContext, dom: DerivDomain) -> Result<[f64; 2]> {
    Ok(evaluate_cost(x, ctx)?.domain_gradient(dom))
}

/// Moves `x` by `h` along a scaled design-space direction.
pub fn step(x: &DesignPoint, d: &[f64; 3], h: f64, time_scale: f64) -> DesignPoint {
    DesignPoint {
        m1: x.m1 + h * d[0],
        m2: x.m2 + h * d[1],
        tof: x.tof + h * d[2] * time_scale,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hessian2 {
    /// Symmetrized matrix.
    pub m: Matrix2<f64>,
    pub eig: [f64; 2],
    /// `|H12 - H21|` before symmetrization.
    pub asym: f64,
}

impl Hessian2 {
    pub fn from_raw(raw: Matrix2<f64>) -> Self {
        let asym = (raw[(0, 1)] - raw[(1, 0)]).abs();
        let off = 0.5 * (raw[(0, 1)] + raw[(1, 0)]);
        let m = Matrix2::new(raw[(0, 0)], off, off, raw[(1, 1)]);
        Self { m, eig: sym_eigenvalues(&m), asym }
    }
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix2<f64>) -> [f64; 2] {
    let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let mean = 0.5 * (a + d);
    let rad = (0.5 * (a - d)).hypot(b);
    [mean - rad, mean + rad]
}

/// Central differences of an arbitrary gradient field along the two domain
/// directions.
pub fn hessian_fd_with<F>(x: &DesignPoint, dirs: &[[f64; 3]; 2], time_scale: f64, grad: F) -> Result<Hessian2>
where
    F: Fn(&DesignPoint) -> Result<[f64; 2]>,
{
    let h = FD_STEP;
    let mut raw = Matrix2::zeros();
    for (j, d) in dirs.iter().enumerate() {
        let gp = grad(&step(x, d, h, time_scale))?;
        let gm = grad(&step(x, d, -h, time_scale))?;
        for i in 0..2 {
            raw[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    Ok(Hessian2::from_raw(raw))
}

pub fn hessian_fd(x: &DesignPoint, ctx: &ScenarioContext, dom: DerivDomain) -> Result<Hessian2> {
    hessian_fd_with(x, &ctx.domain_directions(dom), ctx.time_scale, |p| gradient(p, ctx, dom))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationaryClass {
    Minimum,
    Maximum,
    Saddle,
    Degenerate,
}

impl StationaryClass {
    pub fn as_str(self) -> &'static str {
        match self {
            StationaryClass::Minimum => "minimum",
            StationaryClass::Maximum => "maximum",
            StationaryClass::Saddle => "saddle",
            StationaryClass::Degenerate => "degenerate",
        }
    }

    /// Subscript used in seed names.
    pub fn tag(self) -> &'static str {
        match self {
            StationaryClass::Minimum => "m",
            StationaryClass::Maximum => "M",
            StationaryClass::Saddle => "σ",
            StationaryClass::Degenerate => "d",
        }
    }
}

impl std::str::FromStr for StationaryClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimum" => Ok(StationaryClass::Minimum),
            "maximum" => Ok(StationaryClass::Maximum),
            "saddle" => Ok(StationaryClass::Saddle),
            "degenerate" => Ok(StationaryClass::Degenerate),
            _ => Err(Error::InvalidConfig(format!("unknown class {s:?}"))),
        }
    }
}

pub fn classify_stationary(h: &Matrix2<f64>) -> StationaryClass {
    let sym = Matrix2::new(
        h[(0, 0)],
        0.5 * (h[(0, 1)] + h[(1, 0)]),
        0.5 * (h[(0, 1)] + h[(1, 0)]),
        h[(1, 1)],
    );
    let [a, b] = sym_eigenvalues(&sym);
    if a.abs() < EIG_TOL || b.abs() < EIG_TOL {
        StationaryClass::Degenerate
    } else if a > 0.0 {
        StationaryClass::Minimum
    } else if b < 0.0 {
        StationaryClass::Maximum
    } else {
        StationaryClass::Saddle
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::lambert::solve_lambert;

    pub(crate) fn inclined() -> ScenarioContext {
        let deg = PI / 180.0;
        ScenarioContext::new(
            ClassicalElements::new(10000.0, 0.1, 0.0, 0.0, 135.0 * deg, 0.0).unwrap(),
            ClassicalElements::new(8000.0, 0.1, 30.0 * deg, 0.0, 225.0 * deg, 0.0).unwrap(),
            GravModel::earth(),
            BranchFlag::Long,
        )
        .unwrap()
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_stationary(&Matrix2::new(1.0, 0.0, 0.0, 2.0)), StationaryClass::Minimum);
        assert_eq!(classify_stationary(&Matrix2::new(-1.0, 0.0, 0.0, -2.0)), StationaryClass::Maximum);
        assert_eq!(classify_stationary(&Matrix2::new(1.0, 0.0, 0.0, -1.0)), StationaryClass::Saddle);
        assert_eq!(classify_stationary(&Matrix2::new(1.0, 0.0, 0.0, 1e-12)), StationaryClass::Degenerate);
    }

    #[test]
    fn coasting_is_free_but_not_differentiable() {
        let el = ClassicalElements::new(9000.0, 0.1, 0.2, 0.3, 0.4, 0.0).unwrap();
        // same plane: the long flag selects the prograde sense
        let ctx = ScenarioContext::new(el, el, GravModel::earth(), BranchFlag::Long).unwrap();
        let tof = 1500.0;
        let x = DesignPoint::new(0.5, 0.5 + ctx.n1() * tof, tof);
        let c = evaluate_j(&x, &ctx).unwrap();
        assert!(c.j < 1e-9, "{}", c.j);
        // exactly zero burns are flagged
        let c0 = CostValue { dv1: Vector3::zeros(), ..c };
        assert!(matches!(burn_directions(&c0), Err(Error::DegenerateBurn)));
    }

    #[test]
    fn cost_reassembles_independently() {
        let ctx = inclined();
        let x = DesignPoint::new(1.0, 4.0, 9000.0);
        let c = evaluate_cost(&x, &ctx).unwrap();
        let s1 = elements_to_state(&ctx.dep, x.m1, ctx.g).unwrap();
        let s2 = elements_to_state(&ctx.arr, x.m2, ctx.g).unwrap();
        let l = solve_lambert(&s1.r, &s2.r, x.tof, ctx.d1, ctx.g).unwrap();
        let j = (l.v1g - s1.v).norm() + (s2.v - l.v2g).norm();
        assert!(c.j > 0.0);
        assert!((c.j - j).abs() < 1e-12);
        assert_eq!(c.j, c.dv1.norm() + c.dv2.norm());
    }

    #[test]
    fn chain_rule_identity() {
        let ctx = inclined();
        let c = evaluate_cost(&DesignPoint::new(0.3, 2.0, 12000.0), &ctx).unwrap();
        let ts = ctx.time_scale;
        assert!((c.djdt_dep - ts * (ctx.n1() * c.djdm1 + ctx.n2() * c.djdm2)).abs() < 1e-12);
    }

    #[test]
    fn phi_rv_inverse_is_dv1_dr2() {
        let ctx = inclined();
        let x = DesignPoint::new(0.3, 2.0, 12000.0);
        let s = lambert_velocity_sensitivities(&x, &ctx).unwrap();
        let (s1, s2) = ctx.endpoints(&x).unwrap();
        let l = solve_lambert(&s1.r, &s2.r, x.tof, ctx.d1, ctx.g).unwrap();
        let (_, stm) = propagate_with_stm(&CartesianState::new(s1.r, l.v1g), x.tof, ctx.g).unwrap();
        assert!((s.dv1_dr2 * stm.rv() - Matrix3::identity()).amax() < 1e-10);
    }

    #[test]
    fn near_antiparallel_is_singular() {
        // theta within 1e-9 of pi: either the collinearity check or the
        // conditioning guard must trip
        let g = GravModel::earth();
        let r1 = Vector3::new(8000.0, 0.0, 0.0);
        let r2 = Vector3::new(-9000.0, 1e-5, 0.0);
        let res = solve_lambert(&r1, &r2, 20000.0, BranchFlag::Short, g)
            .and_then(|l| arc_sensitivities(&r1, &l, 20000.0, None, g));
        assert!(matches!(res, Err(Error::SingularStm(_)) | Err(Error::Collinear)));
    }
}
