#![allow(dead_code)]

use std::f64::consts::PI;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tiot_core::cost::*;
use tiot_core::kepler::*;
use tiot_core::lambert::BranchFlag;

pub const DEG: f64 = PI / 180.0;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn coplanar_circular(d1: BranchFlag) -> ScenarioContext {
    ScenarioContext::new(
        ClassicalElements::new(7000.0, 0.0, 20.0 * DEG, 40.0 * DEG, 0.0, 0.0).unwrap(),
        ClassicalElements::new(12000.0, 0.0, 20.0 * DEG, 40.0 * DEG, 0.0, 0.0).unwrap(),
        GravModel::earth(),
        d1,
    )
    .unwrap()
}

pub fn coplanar_elliptic(d1: BranchFlag) -> ScenarioContext {
    ScenarioContext::new(
        ClassicalElements::new(10000.0, 0.1, 0.0, 0.0, 135.0 * DEG, 0.0).unwrap(),
        ClassicalElements::new(8000.0, 0.2, 0.0, 0.0, 225.0 * DEG, 0.0).unwrap(),
        GravModel::earth(),
        d1,
    )
    .unwrap()
}

pub fn inclined(d1: BranchFlag) -> ScenarioContext {
    ScenarioContext::new(
        ClassicalElements::new(10000.0, 0.1, 0.0, 0.0, 135.0 * DEG, 0.0).unwrap(),
        ClassicalElements::new(8000.0, 0.1, 30.0 * DEG, 0.0, 225.0 * DEG, 0.0).unwrap(),
        GravModel::earth(),
        d1,
    )
    .unwrap()
}

pub fn scenarios() -> Vec<(&'static str, fn(BranchFlag) -> ScenarioContext)> {
    vec![("coplanar circular", coplanar_circular), ("coplanar elliptic", coplanar_elliptic), ("inclined", inclined)]
}

/// Random design point away from the collinear and (non-coplanar) pi
/// configurations.
pub fn random_point(r: &mut StdRng, ctx: &ScenarioContext) -> DesignPoint {
    loop {
        let tof = 10f64.powf(r.gen_range(2.5..4.6));
        let x = DesignPoint::new(r.gen_range(0.0..2.0 * PI), r.gen_range(0.0..2.0 * PI), tof);
        let Ok(c) = evaluate_j(&x, ctx) else { continue };
        let th = c.lambert.theta;
        let near_pi = !ctx.is_coplanar() && (th - PI).abs() < 0.05;
        if th.sin().abs() > 0.02 && !near_pi && c.dv1.norm() > 1e-3 && c.dv2.norm() > 1e-3 {
            return x;
        }
    }
}

/// Central differences of J along the scaled domain directions.
pub fn fd_gradient(x: &DesignPoint, ctx: &ScenarioContext, dom: DerivDomain, h: f64) -> [f64; 2] {
    let dirs = ctx.domain_directions(dom);
    let j = |p: &DesignPoint| evaluate_j(p, ctx).unwrap().j;
    let ts = ctx.time_scale;
    [0, 1].map(|k| (j(&step(x, &dirs[k], h, ts)) - j(&step(x, &dirs[k], -h, ts))) / (2.0 * h))
}

pub fn rel_err(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1]) / a[0].hypot(a[1])
}
