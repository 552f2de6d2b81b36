use std::f64::consts::TAU;
use std::sync::OnceLock;

use tiot_core::cost::*;
use tiot_core::lambert::BranchFlag;
use tiot_core::pipeline::{run_pipeline, RunOutput, Stage};
use tiot_core::porkchop::*;
use tiot_core::scenario::{baseline, Scenario};
use tiot_core::seeds::SeedWindow;

fn run() -> &'static (Scenario, RunOutput) {
    static RUN: OnceLock<(Scenario, RunOutput)> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut scn = baseline();
        scn.porkchop.grid = [60, 30];
        let out = run_pipeline(&scn, &[Stage::Atlas, Stage::Project, Stage::Porkchop]).unwrap();
        (scn, out)
    })
}

#[test]
fn time_line_pieces_have_the_mean_motion_slope() {
    let ctx = baseline().context(BranchFlag::Long).unwrap();
    let p = 3.0 * ctx.synodic_period();
    let segs = time_line(&ctx, (0.0, p));
    assert!(segs.len() > 3);
    assert_eq!(segs[0].t0, 0.0);
    assert!((segs.last().unwrap().t1 - p).abs() < 1e-9);
    for w in segs.windows(2) {
        assert!((w[0].t1 - w[1].t0).abs() < 1e-9);
    }
    for s in &segs {
        assert!((s.slope() - ctx.n2() / ctx.n1()).abs() < 1e-9);
        for v in s.start.iter().chain(s.end.iter()) {
            assert!((0.0..=TAU + 1e-12).contains(v));
        }
    }
    assert!(time_line(&ctx, (5.0, 1.0)).is_empty());
}

#[test]
fn grid_cells_are_cost_evaluations() {
    let (scn, out) = run();
    for (d1, g) in &out.porkchop {
        let ctx = scn.context(*d1).unwrap();
        assert_eq!(g.j.len(), 60);
        for i in (0..60).step_by(7) {
            for k in (0..30).step_by(5) {
                let want = evaluate_j(&ctx.design_at(g.t_dep[i], g.tof[k]), &ctx).ok().map(|c| c.j);
                assert_eq!(g.j[i][k], want);
            }
        }
    }
}

// The lowest interior dip of the grid sits above the best minimum event.
#[test]
fn grid_dips_lie_above_minimum_events() {
    let (_, out) = run();
    let events = &out.events.as_ref().unwrap().events;
    for (d1, g) in &out.porkchop {
        let mut dip = f64::INFINITY;
        for i in 1..g.t_dep.len() - 1 {
            for k in 1..g.tof.len() - 1 {
                let Some(v) = g.j[i][k] else { continue };
                let mut nb = (0..9).filter(|n| *n != 4).map(|n| g.j[i + n / 3 - 1][k + n % 3 - 1]);
                if nb.all(|u| u.is_some_and(|u| u > v)) {
                    dip = dip.min(v);
                }
            }
        }
        let best = events
            .iter()
            .filter(|e| e.d1 == *d1 && e.hclass == StationaryClass::Minimum)
            .map(|e| e.j)
            .fold(f64::INFINITY, f64::min);
        assert!(dip.is_finite() && best <= dip, "{d1:?}: event {best} grid {dip}");
    }
}

#[test]
fn events_are_stationary_and_reproducible() {
    let (scn, out) = run();
    let cat = out.events.as_ref().unwrap();
    assert!(cat.events.len() > 10);
    for e in &cat.events {
        let ctx = scn.context(e.d1).unwrap();
        assert!(e.grad_norm < 1e-8, "{}", e.grad_norm);
        let c = evaluate_cost(&e.x, &ctx).unwrap();
        assert!((c.j - e.j).abs() < 1e-6);
        let g = c.domain_gradient(DerivDomain::Temporal);
        assert!(g[0].hypot(g[1]) < 1e-8);
        assert!((ctx.departure_epoch(&e.x) - e.t_dep).abs() < 1e-6);
        assert!((e.x.tof - e.tof).abs() < 1e-9);
    }
}

#[test]
fn events_shift_with_the_initial_phase() {
    let (scn, out) = run();
    // a full turn of the departure phase leaves the problem unchanged
    let mut shifted = scn.clone();
    shifted.departure.m0 += 360.0;
    let ctx = shifted.context(BranchFlag::Long).unwrap();
    let SeedWindow::Temporal { t_dep, tof } = SeedWindow::default_temporal(&ctx) else { unreachable!() };
    let again = intersect_families(&out.atlas, &ctx, t_dep, tof, false).unwrap();
    let base = out.events.as_ref().unwrap();
    assert_eq!(again.events.len(), base.events.len());
    for (a, b) in again.events.iter().zip(&base.events) {
        assert_eq!(a.hclass, b.hclass);
        assert!((a.t_dep - b.t_dep).abs() < 1e-3 && (a.tof - b.tof).abs() < 1e-3);
    }
}

#[test]
fn grids_reject_angular_windows() {
    let ctx = baseline().context(BranchFlag::Short).unwrap();
    assert!(porkchop_grid(&ctx, &SeedWindow::default_angular(1e4), [10, 10]).is_err());
    assert!(porkchop_grid(&ctx, &SeedWindow::default_temporal(&ctx), [1, 10]).is_err());
}
