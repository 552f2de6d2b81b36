//! Continuation seeds: stationary points of the parabolic (t -> inf) cost,
//! of the transfer distance (t -> 0), and of the gradient field on a grid.

use std::f64::consts::TAU;

use log::warn;
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::cost::{
    classify_stationary, evaluate_cost, hessian_fd, hessian_fd_with, CostEval, DerivDomain,
    DesignPoint, ScenarioContext, StationaryClass,
};
use crate::continuation::{jacobian_fd, TiotConstraints, STALL_RESIDUAL, STEP_TOL};
use crate::error::{Error, Result};
use crate::kepler::{elements_to_state, state_derivs_wrt_mean_anomaly, wrap_2pi};
use crate::lambert::{parabolic_lambert_in, BranchFlag};

pub const SEED_NEWTON_TOL: f64 = 1e-10;
pub const SEED_NEWTON_MAX_ITER: usize = 10;
pub const DEDUP_TOL: f64 = 1e-3;
/// Step for finite differences on the parabolic and distance landscapes.
/// Step halvings tried per Newton iteration.
pub const BACKTRACK_MAX: usize = 8;
const LANDSCAPE_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedOrigin {
    AsymptoteInf,
    AsymptoteZero,
    Grid,
    Manual,
}

impl SeedOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            SeedOrigin::AsymptoteInf => "asymptote_inf",
            SeedOrigin::AsymptoteZero => "asymptote_zero",
            SeedOrigin::Grid => "grid",
            SeedOrigin::Manual => "manual",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedLabel {
    pub origin: SeedOrigin,
    pub d1: BranchFlag,
    /// Class on the landscape the seed was found on.
    pub hclass: StationaryClass,
    pub index: usize,
}

impl SeedLabel {
    /// Short name such as `inf^l_{m,1}`.
    pub fn name(&self) -> String {
        let head = match self.origin {
            SeedOrigin::AsymptoteInf => "inf",
            SeedOrigin::AsymptoteZero => "0",
            SeedOrigin::Grid => "grid",
            SeedOrigin::Manual => "manual",
        };
        format!("{head}^{}_{{{},{}}}", self.d1.tag(), self.hclass.tag(), self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed {
    pub x: DesignPoint,
    pub label: SeedLabel,
    /// Class at `x` in the target domain, when `x` is a stationary point
    /// there.
    pub hclass: StationaryClass,
    /// Landscape coordinates before re-convergence (angles wrapped).
    pub source: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeedSearch {
    pub seeds: Vec<Seed>,
    /// Newton solves that failed or left the search region.
    pub dropped: usize,
    /// Solves abandoned on a singular Hessian.
    pub degenerate: usize,
}

/// Bracketing cells of a gradient field sampled on `(n1 + 1) x (n2 + 1)`
/// nodes: both components take both signs (zero counts as either) among the
/// four corners.
fn bracket_cells(vals: &[Option<[f64; 2]>], n1: usize, n2: usize) -> Vec<(usize, usize)> {
    let at = |i: usize, j: usize| vals[i * (n2 + 1) + j];
    let mut out = Vec::new();
    for i in 0..n1 {
        for j in 0..n2 {
            let corners = [at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1)];
            if corners.iter().any(|c| c.is_none()) {
                continue;
            }
            let ok = (0..2).all(|k| {
                let lo = corners.iter().map(|c| c.unwrap()[k]).fold(f64::INFINITY, f64::min);
                let hi = corners.iter().map(|c| c.unwrap()[k]).fold(f64::NEG_INFINITY, f64::max);
                lo <= 0.0 && hi >= 0.0
            });
            if ok {
                out.push((i, j));
            }
        }
    }
    out
}

/// Newton on a 2-D gradient field with its Hessian. Steps are capped at
/// `max_step` so the iteration stays local.
pub fn newton2<G, H>(
    p0: [f64; 2],
    grad: G,
    hess: H,
    tol: f64,
    max_iter: usize,
    max_step: f64,
) -> Result<([f64; 2], Matrix2<f64>)>
where
    G: Fn(&[f64; 2]) -> Result<[f64; 2]>,
    H: Fn(&[f64; 2]) -> Result<Matrix2<f64>>,
{
    let mut p = p0;
    for _ in 0..=max_iter {
        let g = grad(&p)?;
        let h = hess(&p)?;
        if g[0].hypot(g[1]) < tol {
            return Ok((p, h));
        }
        let cls = classify_stationary(&h);
        if cls == StationaryClass::Degenerate {
            return Err(Error::RankDeficient);
        }
        let d = h.lu().solve(&Vector2::new(-g[0], -g[1])).ok_or(Error::RankDeficient)?;
        let mut scale = (max_step / d.norm()).min(1.0);
        // backtrack on the gradient norm; near pi the field is steep enough
        // for full steps to jump across the singular line
        let gn = g[0].hypot(g[1]);
        let mut q = [p[0] + scale * d[0], p[1] + scale * d[1]];
        for _ in 0..BACKTRACK_MAX {
            match grad(&q) {
                Ok(gq) if gq[0].hypot(gq[1]) < gn => break,
                _ => {
                    scale *= 0.5;
                    q = [p[0] + scale * d[0], p[1] + scale * d[1]];
                }
            }
        }
        p = q;
        if d.norm() < STEP_TOL && gn < STALL_RESIDUAL {
            return Ok((p, hess(&p)?));
        }
    }
    Err(Error::CorrectorFailure)
}

fn within(p: &[f64; 2], lo: &[f64; 2], hi: &[f64; 2]) -> bool {
    (0..2).all(|k| p[k] >= lo[k] - 1e-9 && p[k] <= hi[k] + 1e-9)
}

fn dist2(a: &[f64; 2], b: &[f64; 2], periodic: bool) -> f64 {
    let d = |x: f64, y: f64| {
        if periodic {
            crate::kepler::angle_diff(x, y)
        } else {
            x - y
        }
    };
    d(a[0], b[0]).hypot(d(a[1], b[1]))
}

struct Found {
    p: [f64; 2],
    h: Matrix2<f64>,
}

/// Grid sampling, bracketing and Newton refinement on a rectangle.
#[allow(clippy::too_many_arguments)]
fn grid_search<G, H>(
    lo: [f64; 2],
    hi: [f64; 2],
    n: [usize; 2],
    periodic: bool,
    grad: G,
    hess: H,
    tol: f64,
    dedup: f64,
) -> (Vec<Found>, usize, usize)
where
    G: Fn(&[f64; 2]) -> Result<[f64; 2]> + Sync,
    H: Fn(&[f64; 2]) -> Result<Matrix2<f64>> + Sync,
{
    use rayon::prelude::*;
    let [n1, n2] = n;
    let h1 = (hi[0] - lo[0]) / n1 as f64;
    let h2 = (hi[1] - lo[1]) / n2 as f64;
    let vals: Vec<Option<[f64; 2]>> = (0..(n1 + 1) * (n2 + 1))
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / (n2 + 1), k % (n2 + 1));
            grad(&[lo[0] + i as f64 * h1, lo[1] + j as f64 * h2]).ok()
        })
        .collect();
    let cells = bracket_cells(&vals, n1, n2);
    let max_step = 2.0 * h1.hypot(h2);
    let results: Vec<Result<([f64; 2], Matrix2<f64>)>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let c = [lo[0] + (i as f64 + 0.5) * h1, lo[1] + (j as f64 + 0.5) * h2];
            let run = |p0: [f64; 2]| newton2(p0, &grad, &hess, tol, SEED_NEWTON_MAX_ITER + 10, max_step);
            let near = |r: &Result<([f64; 2], Matrix2<f64>)>| {
                r.as_ref().is_ok_and(|(p, _)| dist2(p, &c, periodic) <= 1.5 * max_step)
            };
            let first = run(c);
            if near(&first) {
                return first;
            }
            // the center run left the cell; try its corners before giving up
            // on a local root
            [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
                .iter()
                .map(|&(a, b)| run([lo[0] + (i as f64 + a) * h1, lo[1] + (j as f64 + b) * h2]))
                .find(near)
                .unwrap_or(first)
        })
        .collect();
    let mut found: Vec<Found> = Vec::new();
    let (mut dropped, mut degenerate) = (0, 0);
    for r in results {
        match r {
            Ok((mut p, h)) => {
                if periodic {
                    p = [wrap_2pi(p[0]), wrap_2pi(p[1])];
                } else if !within(&p, &lo, &hi) {
                    continue;
                }
                if found.iter().any(|f| dist2(&f.p, &p, periodic) < dedup) {
                    continue;
                }
                found.push(Found { p, h });
            }
            Err(Error::RankDeficient) => degenerate += 1,
            Err(_) => dropped += 1,
        }
    }
    found.sort_by(|a, b| a.p[0].total_cmp(&b.p[0]).then(a.p[1].total_cmp(&b.p[1])));
    (found, dropped, degenerate)
}

fn fd_grad2<F: Fn(&[f64; 2]) -> Result<f64>>(f: &F, p: &[f64; 2]) -> Result<[f64; 2]> {
    let h = LANDSCAPE_STEP;
    let mut g = [0.0; 2];
    for k in 0..2 {
        let mut a = *p;
        let mut b = *p;
        a[k] += h;
        b[k] -= h;
        g[k] = (f(&a)? - f(&b)?) / (2.0 * h);
    }
    Ok(g)
}

fn fd_hess2<G: Fn(&[f64; 2]) -> Result<[f64; 2]>>(grad: &G, p: &[f64; 2]) -> Result<Matrix2<f64>> {
    let h = 1e-4;
    let mut m = Matrix2::zeros();
    for k in 0..2 {
        let mut a = *p;
        let mut b = *p;
        a[k] += h;
        b[k] -= h;
        let (ga, gb) = (grad(&a)?, grad(&b)?);
        for i in 0..2 {
            m[(i, k)] = (ga[i] - gb[i]) / (2.0 * h);
        }
    }
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    m[(0, 1)] = off;
    m[(1, 0)] = off;
    Ok(m)
}

/// Cost of the parabolic (infinite-time) transfer between `M1` and `M2`.
pub fn parabolic_cost(ctx: &ScenarioContext, m1: f64, m2: f64) -> Result<f64> {
    let s1 = elements_to_state(&ctx.dep, m1, ctx.g)?;
    let s2 = elements_to_state(&ctx.arr, m2, ctx.g)?;
    let p = parabolic_lambert_in(&s1.r, &s2.r, ctx.transfer_plane(), ctx.g)?;
    Ok((p.v1g - s1.v).norm() + (s2.v - p.v2g).norm())
}

/// Transfer distance of the `t -> 0` limit: chord for the short branch,
/// `|r1| + |r2|` for the long one.
pub fn zero_time_distance(ctx: &ScenarioContext, m1: f64, m2: f64) -> Result<f64> {
    let s1 = elements_to_state(&ctx.dep, m1, ctx.g)?;
    let s2 = elements_to_state(&ctx.arr, m2, ctx.g)?;
    Ok(match ctx.d1 {
        BranchFlag::Short => (s1.r - s2.r).norm(),
        BranchFlag::Long => s1.r.norm() + s2.r.norm(),
    })
}

fn zero_time_gradient(ctx: &ScenarioContext, m1: f64, m2: f64) -> Result<[f64; 2]> {
    let s1 = elements_to_state(&ctx.dep, m1, ctx.g)?;
    let s2 = elements_to_state(&ctx.arr, m2, ctx.g)?;
    let (dr1, _) = state_derivs_wrt_mean_anomaly(&ctx.dep, m1, ctx.g)?;
    let (dr2, _) = state_derivs_wrt_mean_anomaly(&ctx.arr, m2, ctx.g)?;
    Ok(match ctx.d1 {
        BranchFlag::Short => {
            let u = (s1.r - s2.r).normalize();
            [u.dot(&dr1), -u.dot(&dr2)]
        }
        BranchFlag::Long => [s1.r.normalize().dot(&dr1), s2.r.normalize().dot(&dr2)],
    })
}

/// Assigns per-class indices in order of the landscape value.
fn label_found(
    found: Vec<Found>,
    origin: SeedOrigin,
    d1: BranchFlag,
    value: impl Fn(&[f64; 2]) -> f64,
) -> Vec<(Found, SeedLabel)> {
    let mut tagged: Vec<(Found, StationaryClass, f64)> = found
        .into_iter()
        .map(|f| {
            let c = classify_stationary(&f.h);
            let v = value(&f.p);
            (f, c, v)
        })
        .collect();
    tagged.sort_by(|a, b| a.1.cmp(&b.1).then(a.2.total_cmp(&b.2)));
    let mut out = Vec::new();
    let mut counts = std::collections::HashMap::new();
    for (f, c, _) in tagged {
        let k = counts.entry(c).or_insert(0usize);
        *k += 1;
        out.push((f, SeedLabel { origin, d1, hclass: c, index: *k }));
    }
    out
}

/// Stationary points of the parabolic cost over `(M1, M2)`, wrapped to
/// `[0, 2pi)^2`, ordered by class then cost.
pub fn parabolic_stationary_points(
    ctx: &ScenarioContext,
    grid_n: usize,
) -> Result<(Vec<([f64; 2], SeedLabel, Matrix2<f64>)>, usize, usize)> {
    if grid_n < 32 {
        return Err(Error::InvalidConfig(format!("grid_n = {grid_n} < 32")));
    }
    let f = |p: &[f64; 2]| parabolic_cost(ctx, p[0], p[1]);
    let grad = |p: &[f64; 2]| fd_grad2(&f, p);
    let hess = |p: &[f64; 2]| fd_hess2(&grad, p);
    let (found, dropped, degenerate) =
        grid_search([0.0, 0.0], [TAU, TAU], [grid_n, grid_n], true, grad, hess, 1e-8, DEDUP_TOL);
    let labeled = label_found(found, SeedOrigin::AsymptoteInf, ctx.d1, |p| f(p).unwrap_or(f64::NAN));
    Ok((labeled.into_iter().map(|(f, l)| (f.p, l, f.h)).collect(), dropped, degenerate))
}

/// Newton at fixed time of flight on the domain constraints, moving only
/// `(M1, M2)`.
pub fn reconverge_fixed_tof(
    m: [f64; 2],
    tof: f64,
    ctx: &ScenarioContext,
    dom: DerivDomain,
    tol: f64,
    max_iter: usize,
) -> Result<(DesignPoint, CostEval)> {
    let sys = TiotConstraints { ctx, dom };
    let ts = ctx.time_scale;
    let mut p = m;
    for _ in 0..=max_iter {
        let x = DesignPoint::new(p[0], p[1], tof);
        let c = evaluate_cost(&x, ctx)?;
        let g = c.domain_gradient(dom);
        if g[0].hypot(g[1]) < tol {
            return Ok((x, c));
        }
        let jac = jacobian_fd(&sys, &x.scaled(ts))?;
        let a = Matrix2::new(jac[(0, 0)], jac[(0, 1)], jac[(1, 0)], jac[(1, 1)]);
        let d = a.lu().solve(&Vector2::new(-g[0], -g[1])).ok_or(Error::RankDeficient)?;
        let scale = (0.5 / d.norm()).min(1.0);
        p = [p[0] + scale * d[0], p[1] + scale * d[1]];
        if d.norm() < STEP_TOL && g[0].hypot(g[1]) < STALL_RESIDUAL {
            let x = DesignPoint::new(p[0], p[1], tof);
            return Ok((x, evaluate_cost(&x, ctx)?));
        }
    }
    Err(Error::CorrectorFailure)
}

fn class_at(x: &DesignPoint, ctx: &ScenarioContext, dom: DerivDomain) -> StationaryClass {
    hessian_fd(x, ctx, dom).map(|h| classify_stationary(&h.m)).unwrap_or(StationaryClass::Degenerate)
}

/// Seeds from the `t -> inf` asymptotes: stationary points of the parabolic
/// cost, re-converged at `t = t_seed` in domain `dom`.
pub fn asymptotic_seeds_inf(
    ctx: &ScenarioContext,
    dom: DerivDomain,
    grid_n: usize,
    t_seed: f64,
) -> Result<SeedSearch> {
    let (pts, mut dropped, degenerate) = parabolic_stationary_points(ctx, grid_n)?;
    let mut seeds = Vec::new();
    for (p, label, _) in pts {
        match reconverge_fixed_tof(p, t_seed, ctx, dom, SEED_NEWTON_TOL, SEED_NEWTON_MAX_ITER) {
            Ok((x, _)) => seeds.push(Seed { x, label, hclass: class_at(&x, ctx, dom), source: p }),
            Err(e) => {
                warn!("asymptote {} did not re-converge at t = {t_seed}: {e}", label.name());
                dropped += 1;
            }
        }
    }
    Ok(SeedSearch { seeds, dropped, degenerate })
}

/// Seeds from the `t -> 0` asymptotes: stationary points of the transfer
/// distance. These are labels for family end points rather than continuation
/// starts, so `x.tof` is zero.
pub fn asymptotic_seeds_zero(ctx: &ScenarioContext, grid_n: usize) -> Result<SeedSearch> {
    if grid_n < 32 {
        return Err(Error::InvalidConfig(format!("grid_n = {grid_n} < 32")));
    }
    let grad = |p: &[f64; 2]| zero_time_gradient(ctx, p[0], p[1]);
    let hess = |p: &[f64; 2]| fd_hess2(&grad, p);
    let (found, dropped, degenerate) =
        grid_search([0.0, 0.0], [TAU, TAU], [grid_n, grid_n], true, grad, hess, 1e-9, DEDUP_TOL);
    let value = |p: &[f64; 2]| zero_time_distance(ctx, p[0], p[1]).unwrap_or(f64::NAN);
    let seeds = label_found(found, SeedOrigin::AsymptoteZero, ctx.d1, value)
        .into_iter()
        .map(|(f, label)| Seed {
            x: DesignPoint::new(f.p[0], f.p[1], 0.0),
            label,
            hclass: label.hclass,
            source: f.p,
        })
        .collect();
    Ok(SeedSearch { seeds, dropped, degenerate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SeedWindow {
    /// `(M1, M2)` rectangle [rad] at fixed time of flight [s].
    Angular { m1: (f64, f64), m2: (f64, f64), tof: f64 },
    /// Departure epoch and time of flight ranges [s].
    Temporal { t_dep: (f64, f64), tof: (f64, f64) },
}

impl SeedWindow {
    /// `0 <= T <= 2 P_syn`, `0.2 P2 <= t <= 2 P2`.
    pub fn default_temporal(ctx: &ScenarioContext) -> Self {
        SeedWindow::Temporal {
            t_dep: (0.0, 2.0 * ctx.synodic_period()),
            tof: (0.2 * ctx.p2(), 2.0 * ctx.p2()),
        }
    }

    pub fn default_angular(tof: f64) -> Self {
        SeedWindow::Angular { m1: (0.0, TAU), m2: (0.0, TAU), tof }
    }

    pub fn domain(&self) -> DerivDomain {
        match self {
            SeedWindow::Angular { .. } => DerivDomain::Angular,
            SeedWindow::Temporal { .. } => DerivDomain::Temporal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SeedWindow::Angular { m1, m2, tof } => m1.0 < m1.1 && m2.0 < m2.1 && tof > 0.0,
            SeedWindow::Temporal { t_dep, tof } => t_dep.0 < t_dep.1 && tof.0 < tof.1 && tof.0 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("degenerate seed window {self:?}")))
        }
    }

    /// Design point at window coordinates `p` (scaled for the temporal case).
    pub fn design(&self, p: &[f64; 2], ctx: &ScenarioContext) -> DesignPoint {
        match *self {
            SeedWindow::Angular { tof, .. } => DesignPoint::new(p[0], p[1], tof),
            SeedWindow::Temporal { .. } => {
                ctx.design_at(p[0] * ctx.time_scale, p[1] * ctx.time_scale)
            }
        }
    }

    /// Window coordinates of `x`: `(M1, M2)` or scaled `(T, t)`.
    pub fn coords(&self, x: &DesignPoint, ctx: &ScenarioContext) -> [f64; 2] {
        match self {
            SeedWindow::Angular { .. } => [x.m1, x.m2],
            SeedWindow::Temporal { .. } => {
                [ctx.departure_epoch(x) / ctx.time_scale, x.tof / ctx.time_scale]
            }
        }
    }

    pub fn bounds(&self, ts: f64) -> ([f64; 2], [f64; 2]) {
        match *self {
            SeedWindow::Angular { m1, m2, .. } => ([m1.0, m2.0], [m1.1, m2.1]),
            SeedWindow::Temporal { t_dep, tof } => {
                ([t_dep.0 / ts, tof.0 / ts], [t_dep.1 / ts, tof.1 / ts])
            }
        }
    }

    pub fn contains(&self, x: &DesignPoint, ctx: &ScenarioContext) -> bool {
        let (lo, hi) = self.bounds(ctx.time_scale);
        within(&self.coords(x, ctx), &lo, &hi)
    }
}

fn window_gradient(ctx: &ScenarioContext, window: &SeedWindow, p: &[f64; 2]) -> Result<[f64; 2]> {
    Ok(evaluate_cost(&window.design(p, ctx), ctx)?.domain_gradient(window.domain()))
}

fn window_hessian(ctx: &ScenarioContext, window: &SeedWindow, p: &[f64; 2]) -> Result<Matrix2<f64>> {
    let dom = window.domain();
    let dirs = ctx.domain_directions(dom);
    let x = window.design(p, ctx);
    Ok(hessian_fd_with(&x, &dirs, ctx.time_scale, |q| Ok(evaluate_cost(q, ctx)?.domain_gradient(dom)))?.m)
}

/// Newton refinement of a stationary point in window coordinates, as used
/// for grid seeds. Returns the point and its domain Hessian.
pub fn refine_in_window(
    ctx: &ScenarioContext,
    window: &SeedWindow,
    p0: [f64; 2],
    max_step: f64,
) -> Result<([f64; 2], Matrix2<f64>)> {
    newton2(
        p0,
        |p: &[f64; 2]| window_gradient(ctx, window, p),
        |p: &[f64; 2]| window_hessian(ctx, window, p),
        SEED_NEWTON_TOL,
        SEED_NEWTON_MAX_ITER + 10,
        max_step,
    )
}

/// Stationary points of `J` over a window of domain coordinates.
pub fn grid_seeds(ctx: &ScenarioContext, window: &SeedWindow, n: [usize; 2]) -> Result<SeedSearch> {
    window.validate()?;
    if n[0] < 2 || n[1] < 2 {
        return Err(Error::InvalidConfig("grid resolution below 2".into()));
    }
    let (lo, hi) = window.bounds(ctx.time_scale);
    let grad = |p: &[f64; 2]| window_gradient(ctx, window, p);
    let hess = |p: &[f64; 2]| window_hessian(ctx, window, p);
    let (found, dropped, degenerate) =
        grid_search(lo, hi, n, false, grad, hess, SEED_NEWTON_TOL, DEDUP_TOL);
    let value = |p: &[f64; 2]| evaluate_cost(&window.design(p, ctx), ctx).map(|c| c.j).unwrap_or(f64::NAN);
    let seeds = label_found(found, SeedOrigin::Grid, ctx.d1, value)
        .into_iter()
        .map(|(f, label)| Seed { x: window.design(&f.p, ctx), label, hclass: label.hclass, source: f.p })
        .collect();
    Ok(SeedSearch { seeds, dropped, degenerate })
}
