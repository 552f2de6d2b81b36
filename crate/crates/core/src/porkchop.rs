//! Porkchop grids, time-lines and family/time-line intersections.
//!
//! A departure epoch `T` and time of flight `t` fix `M1 = n1 T + M1_0` and
//! `M2_dep = M2 - n2 t = n2 T + M2_0`, so epochs trace straight lines of slope
//! `n2 / n1` on the `(M1, M2_dep)` torus. A family crossing such a line is a
//! stationary point of the porkchop plot.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::AtlasEntry;
use crate::continuation::{member_at, Family, TerminationReason};
use crate::cost::{classify_stationary, evaluate_j, DerivDomain, DesignPoint, ScenarioContext, StationaryClass};
use crate::error::{Error, Result};
use crate::kepler::{angle_diff, wrap_2pi};
use crate::lambert::BranchFlag;
use crate::pvt::{check_pvt, primer_history, DEFAULT_PVT_TOL, DEFAULT_SAMPLES};
use crate::seeds::{refine_in_window, SeedWindow};

/// Events closer than this in scaled `(T, t)` are one event.
pub const EVENT_DEDUP: f64 = 1e-6;
/// Largest Newton step when re-converging an intersection [scaled].
pub const EVENT_MAX_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorkchopGrid {
    /// [s]
    pub t_dep: Vec<f64>,
    /// [s]
    pub tof: Vec<f64>,
    /// `j[i][k]` at `(t_dep[i], tof[k])` [km/s]; `None` where evaluation failed.
    pub j: Vec<Vec<Option<f64>>>,
    pub failures: usize,
}

impl PorkchopGrid {
    /// Smallest cell value as `(t_dep, tof, j)`.
    pub fn min_cell(&self) -> Option<(f64, f64, f64)> {
        let mut best: Option<(f64, f64, f64)> = None;
        for (i, row) in self.j.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                if let Some(v) = *v {
                    if best.is_none_or(|b| v < b.2) {
                        best = Some((self.t_dep[i], self.tof[k], v));
                    }
                }
            }
        }
        best
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// `J` over a temporal window on an `n[0] x n[1]` node grid.
pub fn porkchop_grid(ctx: &ScenarioContext, window: &SeedWindow, n: [usize; 2]) -> Result<PorkchopGrid> {
    window.validate()?;
    let SeedWindow::Temporal { t_dep, tof } = *window else {
        return Err(Error::InvalidConfig("porkchop grids need a temporal window".into()));
    };
    if n[0] < 2 || n[1] < 2 {
        return Err(Error::InvalidConfig("grid resolution below 2".into()));
    }
    let ta = linspace(t_dep.0, t_dep.1, n[0]);
    let tb = linspace(tof.0, tof.1, n[1]);
    let j: Vec<Vec<Option<f64>>> = ta
        .par_iter()
        .map(|&t0| tb.iter().map(|&t| evaluate_j(&ctx.design_at(t0, t), ctx).ok().map(|c| c.j)).collect())
        .collect();
    let failures = j.iter().flatten().filter(|v| v.is_none()).count();
    Ok(PorkchopGrid { t_dep: ta, tof: tb, j, failures })
}

/// One straight piece of a time-line on the `(M1, M2_dep)` torus, angles in
/// `[0, 2 pi)` and `end` reached without wrapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineSegment {
    pub t0: f64,
    pub t1: f64,
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl TimelineSegment {
    pub fn slope(&self) -> f64 {
        (self.end[1] - self.start[1]) / (self.end[0] - self.start[0])
    }
}

/// Departure-epoch line over `t_range`, split wherever either angle wraps.
pub fn time_line(ctx: &ScenarioContext, t_range: (f64, f64)) -> Vec<TimelineSegment> {
    let (t0, t1) = t_range;
    if !(t0.is_finite() && t1.is_finite()) || t1 <= t0 {
        return Vec::new();
    }
    let rates = [ctx.n1(), ctx.n2()];
    let phase = [ctx.dep.m0, ctx.arr.m0];
    let angle = |k: usize, t: f64| rates[k] * t + phase[k];
    let mut cuts = vec![t0, t1];
    for k in 0..2 {
        let (a, b) = (angle(k, t0), angle(k, t1));
        let first = (a / TAU).floor() as i64 + 1;
        let last = (b / TAU).ceil() as i64 - 1;
        for m in first..=last {
            cuts.push((m as f64 * TAU - phase[k]) / rates[k]);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let base = [wrap_2pi(angle(0, w[0])), wrap_2pi(angle(1, w[0]))];
            let span = [rates[0] * (w[1] - w[0]), rates[1] * (w[1] - w[0])];
            // snap the start of a piece that begins exactly on a seam
            let start = base.map(|v| if TAU - v < 1e-12 { 0.0 } else { v });
            TimelineSegment { t0: w[0], t1: w[1], start, end: [start[0] + span[0], start[1] + span[1]] }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    /// [s]
    pub t_dep: f64,
    /// [s]
    pub tof: f64,
    pub family_index: usize,
    pub d1: BranchFlag,
    /// Family point before re-convergence.
    pub member_interp: DesignPoint,
    /// Re-converged stationary point.
    pub x: DesignPoint,
    pub j: f64,
    pub hclass: StationaryClass,
    pub pvt_ok: Option<bool>,
    /// Temporal gradient norm at `x` [km/s per scaled time].
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventCatalog {
    pub events: Vec<TimelineEvent>,
    /// Candidates whose re-convergence failed.
    pub dropped: usize,
}

/// Raw crossings of one family with the time-lines over `t_range`:
/// `(T, interpolated point)`.
pub fn family_crossings(f: &Family, ctx: &ScenarioContext, t_range: (f64, f64)) -> Vec<(f64, DesignPoint)> {
    let (n1, n2) = (ctx.n1(), ctx.n2());
    let (m10, m20) = (ctx.dep.m0, ctx.arr.m0);
    let mut out = Vec::new();
    let n = f.members.len();
    let cycle = f.end1 == TerminationReason::CycleClosed && f.end2 == TerminationReason::CycleClosed;
    // a closed family also gets the segment from its last member back to the first
    let n_seg = if cycle { n } else { n.saturating_sub(1) };
    for i in 0..n_seg {
        let (a, b) = (&f.members[i].x, &f.members[(i + 1) % n].x);
        let m1a = wrap_2pi(a.m1);
        let dm1 = angle_diff(b.m1, a.m1);
        let dt = b.tof - a.tof;
        let dm2 = angle_diff(b.m2, a.m2);
        // T(l) = (m1a + l dm1 - M1_0 + 2 pi k1) / n1
        // H(l) = M2_dep(l) - n2 T(l) - M2_0, zero modulo 2 pi on a time-line
        let (lo, hi) = (m1a.min(m1a + dm1), m1a.max(m1a + dm1));
        let k1_min = ((n1 * t_range.0 - hi + m10) / TAU).floor() as i64;
        let k1_max = ((n1 * t_range.1 - lo + m10) / TAU).ceil() as i64;
        for k1 in k1_min..=k1_max {
            let shift = TAU * k1 as f64;
            let t_of = |l: f64| (m1a + l * dm1 - m10 + shift) / n1;
            let h0 = a.m2 - n2 * a.tof - n2 * t_of(0.0) - m20;
            let dh = dm2 - n2 * dt - n2 * dm1 / n1;
            if dh == 0.0 {
                continue;
            }
            let (ha, hb) = (h0.min(h0 + dh), h0.max(h0 + dh));
            for k2 in (ha / TAU).ceil() as i64..=(hb / TAU).floor() as i64 {
                let l = (TAU * k2 as f64 - h0) / dh;
                let closed = if !cycle && i + 1 == n_seg { l <= 1.0 } else { l < 1.0 };
                if !(l >= 0.0 && closed) {
                    continue;
                }
                let t_dep = t_of(l);
                if t_dep < t_range.0 || t_dep > t_range.1 {
                    continue;
                }
                let x = DesignPoint::new(a.m1 + l * dm1, a.m2 + l * dm2, a.tof + l * dt);
                out.push((t_dep, x));
            }
        }
    }
    out
}

/// Crossings of temporal-domain atlas families with the time-lines over
/// `t_range`, each re-converged by temporal Newton. Events inside
/// `tof_range` are kept; duplicates (adjacent segments, overlapping
/// families) are merged with the lowest family index.
pub fn intersect_families(
    entries: &[AtlasEntry],
    ctx: &ScenarioContext,
    t_range: (f64, f64),
    tof_range: (f64, f64),
    with_pvt: bool,
) -> Result<EventCatalog> {
    let window = SeedWindow::Temporal { t_dep: t_range, tof: tof_range };
    window.validate()?;
    let ts = ctx.time_scale;
    let per_family: Vec<(Vec<TimelineEvent>, usize)> = entries
        .par_iter()
        .filter(|e| e.family.domain == DerivDomain::Temporal)
        .map(|e| {
            let c = ctx.with_branch(e.family.d1);
            let mut events = Vec::new();
            let mut dropped = 0;
            for (t_dep, xi) in family_crossings(&e.family, &c, t_range) {
                match event_at(&c, &window, t_dep, &xi, e.index, with_pvt) {
                    Ok(Some(ev)) => events.push(ev),
                    Ok(None) => {}
                    Err(_) => dropped += 1,
                }
            }
            (events, dropped)
        })
        .collect();
    let mut all: Vec<TimelineEvent> = Vec::new();
    let mut dropped = 0;
    for (ev, d) in per_family {
        all.extend(ev);
        dropped += d;
    }
    all.sort_by(|a, b| {
        a.d1.cmp(&b.d1)
            .then(a.family_index.cmp(&b.family_index))
            .then(a.t_dep.total_cmp(&b.t_dep))
            .then(a.tof.total_cmp(&b.tof))
    });
    let mut events: Vec<TimelineEvent> = Vec::new();
    for ev in all {
        let dup = events.iter().any(|e| {
            e.d1 == ev.d1 && ((e.t_dep - ev.t_dep) / ts).hypot((e.tof - ev.tof) / ts) < EVENT_DEDUP
        });
        if !dup {
            events.push(ev);
        }
    }
    events.sort_by(|a, b| a.t_dep.total_cmp(&b.t_dep).then(a.tof.total_cmp(&b.tof)).then(a.d1.cmp(&b.d1)));
    Ok(EventCatalog { events, dropped })
}

fn event_at(
    ctx: &ScenarioContext,
    window: &SeedWindow,
    t_dep: f64,
    xi: &DesignPoint,
    family_index: usize,
    with_pvt: bool,
) -> Result<Option<TimelineEvent>> {
    let ts = ctx.time_scale;
    let (p, h) = refine_in_window(ctx, window, [t_dep / ts, xi.tof / ts], EVENT_MAX_STEP)?;
    let x = window.design(&p, ctx);
    if !window.contains(&x, ctx) {
        return Ok(None);
    }
    let m = member_at(&x, ctx, DerivDomain::Temporal)?;
    let g = m.cost.domain_gradient(DerivDomain::Temporal);
    let pvt_ok = if with_pvt {
        primer_history(&m, ctx, DEFAULT_SAMPLES).ok().map(|h| check_pvt(&h, DEFAULT_PVT_TOL))
    } else {
        None
    };
    Ok(Some(TimelineEvent {
        t_dep: p[0] * ts,
        tof: p[1] * ts,
        family_index,
        d1: ctx.d1,
        member_interp: *xi,
        x,
        j: m.cost.j,
        hclass: classify_stationary(&h),
        pvt_ok,
        grad_norm: g[0].hypot(g[1]),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kepler::{ClassicalElements, GravModel};

    fn ctx() -> ScenarioContext {
        let d = std::f64::consts::PI / 180.0;
        ScenarioContext::new(
            ClassicalElements::new(10000.0, 0.1, 0.0, 0.0, 135.0 * d, 0.3).unwrap(),
            ClassicalElements::new(8000.0, 0.1, 30.0 * d, 0.0, 225.0 * d, 1.1).unwrap(),
            GravModel::earth(),
            BranchFlag::Long,
        )
        .unwrap()
    }

    #[test]
    fn time_line_segments_have_constant_slope() {
        let c = ctx();
        let segs = time_line(&c, (0.0, 5.0 * c.synodic_period()));
        assert!(segs.len() > 10);
        let slope = c.n2() / c.n1();
        for s in &segs {
            assert!((s.slope() - slope).abs() < 1e-9 * slope, "{}", s.slope());
            for k in 0..2 {
                assert!(s.start[k] >= 0.0 && s.end[k] <= TAU + 1e-9);
            }
        }
        // contiguous in time
        for w in segs.windows(2) {
            assert_eq!(w[0].t1, w[1].t0);
        }
    }

    #[test]
    fn crossing_on_a_straight_family() {
        // synthetic family along tof at fixed angles
        let c = ctx();
        let t_dep = 3000.0;
        let x0 = c.design_at(t_dep, 9000.0);
        let members: Vec<_> = (0..5)
            .map(|k| {
                let mut m = member_at(&x0, &c, DerivDomain::Temporal).unwrap_or_else(|_| panic!());
                m.x = DesignPoint::new(x0.m1, x0.m2 + 0.01 * (k as f64 - 2.0), 9000.0);
                m
            })
            .collect();
        let f = Family {
            members,
            end1: TerminationReason::StepCap,
            end2: TerminationReason::StepCap,
            domain: DerivDomain::Temporal,
            d1: BranchFlag::Long,
            seed_id: String::new(),
            halvings: vec![],
        };
        let hits = family_crossings(&f, &c, (0.0, 2.0 * c.synodic_period()));
        assert!(hits.iter().any(|(t, x)| (t - t_dep).abs() < 1e-6 && (x.m2 - x0.m2).abs() < 1e-9));
    }
}
