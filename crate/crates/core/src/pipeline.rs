//! Stage orchestration: seeds, trace, analyze, atlas, porkchop, project.

use std::collections::BTreeMap;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atlas::{build_atlas, AtlasEntry, MinJFilter, SeedCatalog, TracedFamily};
use crate::continuation::{trace_family_tagged, wrapped_distance, Family, TerminationReason};
use crate::cost::{evaluate_j, DerivDomain, ScenarioContext};
use crate::error::{Error, Result};
use crate::lambert::BranchFlag;
use crate::porkchop::{intersect_families, porkchop_grid, EventCatalog, PorkchopGrid};
use crate::pvt::annotate_members;
use crate::scenario::Scenario;
use crate::seeds::{
    asymptotic_seeds_inf, asymptotic_seeds_zero, grid_seeds, Seed, SeedLabel, SeedOrigin, SeedSearch, SeedWindow,
};

/// Seeds closer than this (scaled) to an already traced family are skipped.
pub const SEED_SKIP_TOL: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Seeds,
    Trace,
    Analyze,
    Atlas,
    Porkchop,
    Project,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Seeds, Stage::Trace, Stage::Analyze, Stage::Atlas, Stage::Porkchop, Stage::Project];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Seeds => "seeds",
            Stage::Trace => "trace",
            Stage::Analyze => "analyze",
            Stage::Atlas => "atlas",
            Stage::Porkchop => "porkchop",
            Stage::Project => "project",
        }
    }

    fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Seeds | Stage::Porkchop => &[],
            Stage::Trace => &[Stage::Seeds],
            Stage::Analyze | Stage::Atlas => &[Stage::Trace],
            Stage::Project => &[Stage::Atlas],
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown stage {s:?}")))
    }
}

/// Requested stages closed under their prerequisites, in run order.
pub fn resolve_stages(requested: &[Stage]) -> Vec<Stage> {
    let mut set = std::collections::BTreeSet::new();
    let mut stack: Vec<Stage> = requested.to_vec();
    while let Some(s) = stack.pop() {
        if set.insert(s) {
            stack.extend_from_slice(s.requires());
        }
    }
    set.into_iter().collect()
}

pub fn parse_stages(list: &str) -> Result<Vec<Stage>> {
    if list.trim() == "all" {
        return Ok(Stage::ALL.to_vec());
    }
    list.split(',').map(|s| s.trim().parse()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub completed: bool,
    pub error: Option<String>,
    pub wall_seconds: f64,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the canonical scenario text.
    pub scenario_hash: String,
    pub scenario: Scenario,
    pub stages: Vec<StageReport>,
}

impl RunManifest {
    pub fn stage(&self, s: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|r| r.stage == s)
    }

    pub fn completed(&self, s: Stage) -> bool {
        self.stage(s).is_some_and(|r| r.completed)
    }
}

pub fn scenario_hash(s: &Scenario) -> Result<String> {
    Ok(hex::encode(Sha256::digest(s.to_toml()?.as_bytes())))
}

/// Seeds of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSeeds {
    pub d1: BranchFlag,
    pub inf: SeedSearch,
    pub zero: SeedSearch,
    pub grid: Vec<SeedSearch>,
    pub manual: Vec<Seed>,
}

impl BranchSeeds {
    /// Continuation starts in tracing order.
    pub fn starts(&self) -> impl Iterator<Item = &Seed> {
        self.inf.seeds.iter().chain(self.grid.iter().flat_map(|g| g.seeds.iter())).chain(self.manual.iter())
    }

    pub fn grid_seeds(&self) -> impl Iterator<Item = &Seed> {
        self.grid.iter().flat_map(|g| g.seeds.iter())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub domain: DerivDomain,
    pub seeds: Vec<BranchSeeds>,
    pub traced: Vec<TracedFamily>,
    pub atlas: Vec<AtlasEntry>,
    pub porkchop: Vec<(BranchFlag, PorkchopGrid)>,
    pub events: Option<EventCatalog>,
    pub manifest: RunManifest,
}

fn seeds_for(scn: &Scenario, ctx: &ScenarioContext) -> Result<BranchSeeds> {
    let dom = scn.domain;
    let s = &scn.seeds;
    let inf = asymptotic_seeds_inf(ctx, dom, s.asymptote_grid, s.t_seed)?;
    let zero = asymptotic_seeds_zero(ctx, s.asymptote_grid)?;
    let windows: Vec<SeedWindow> = match dom {
        DerivDomain::Temporal => vec![scn.seed_window(ctx)],
        DerivDomain::Angular => scn.angular_windows(),
    };
    let grid = windows.iter().map(|w| grid_seeds(ctx, w, s.grid)).collect::<Result<Vec<_>>>()?;
    let manual = s
        .manual
        .iter()
        .filter(|m| m.branch == ctx.d1)
        .enumerate()
        .map(|(k, m)| {
            let x = m.design();
            let label = SeedLabel { origin: SeedOrigin::Manual, d1: ctx.d1, hclass: crate::cost::StationaryClass::Degenerate, index: k + 1 };
            Seed { x, label, hclass: label.hclass, source: [x.m1, x.m2] }
        })
        .collect();
    Ok(BranchSeeds { d1: ctx.d1, inf, zero, grid, manual })
}

/// Traces every seed not already lying on a family of its branch.
pub fn trace_seeds(scn: &Scenario, seeds: &[BranchSeeds]) -> Result<(Vec<TracedFamily>, usize)> {
    let mut traced: Vec<TracedFamily> = Vec::new();
    let mut failures = 0;
    for bs in seeds {
        let ctx = scn.context(bs.d1)?;
        let ts = ctx.time_scale;
        for sd in bs.starts() {
            let p = sd.x.scaled(ts);
            let covered = traced.iter().filter(|t| t.family.d1 == bs.d1).any(|t| {
                t.family.members.iter().any(|m| wrapped_distance(&m.scaled(ts), &p) < SEED_SKIP_TOL)
            });
            if covered {
                continue;
            }
            match trace_family_tagged(&sd.x, &ctx, scn.domain, &scn.continuation, &sd.label.name()) {
                Ok(family) => traced.push(TracedFamily { family, seed: sd.label }),
                Err(e) => {
                    warn!("seed {} not traced: {e}", sd.label.name());
                    failures += 1;
                }
            }
        }
    }
    Ok((traced, failures))
}

fn count(map: &mut BTreeMap<String, usize>, key: impl Into<String>, n: usize) {
    *map.entry(key.into()).or_default() += n;
}

/// Runs the requested stages (plus prerequisites). A failing stage stops
/// everything downstream; the manifest records how far the run got.
pub fn run_pipeline(scn: &Scenario, requested: &[Stage]) -> Result<RunOutput> {
    scn.validate()?;
    let stages = resolve_stages(requested);
    let flags = scn.branches.flags();
    let mut out = RunOutput {
        domain: scn.domain,
        seeds: Vec::new(),
        traced: Vec::new(),
        atlas: Vec::new(),
        porkchop: Vec::new(),
        events: None,
        manifest: RunManifest { scenario_hash: scenario_hash(scn)?, scenario: scn.clone(), stages: Vec::new() },
    };
    for stage in stages {
        if stage.requires().iter().any(|r| !out.manifest.completed(*r)) {
            out.manifest.stages.push(StageReport {
                stage,
                completed: false,
                error: Some("prerequisite stage did not complete".into()),
                wall_seconds: 0.0,
                counts: BTreeMap::new(),
            });
            continue;
        }
        let t0 = Instant::now();
        let mut counts = BTreeMap::new();
        let res = run_stage(stage, scn, &flags, &mut out, &mut counts);
        let wall_seconds = t0.elapsed().as_secs_f64();
        info!("stage {} done in {wall_seconds:.2} s", stage.as_str());
        let error = res.err().map(|e| {
            warn!("stage {} failed: {e}", stage.as_str());
            e.to_string()
        });
        out.manifest.stages.push(StageReport { stage, completed: error.is_none(), error, wall_seconds, counts });
    }
    Ok(out)
}

fn run_stage(
    stage: Stage,
    scn: &Scenario,
    flags: &[BranchFlag],
    out: &mut RunOutput,
    counts: &mut BTreeMap<String, usize>,
) -> Result<()> {
    match stage {
        Stage::Seeds => {
            out.seeds = flags.iter().map(|&d1| seeds_for(scn, &scn.context(d1)?)).collect::<Result<_>>()?;
            for bs in &out.seeds {
                let b = bs.d1.as_str();
                count(counts, format!("{b}.inf"), bs.inf.seeds.len());
                count(counts, format!("{b}.zero"), bs.zero.seeds.len());
                count(counts, format!("{b}.manual"), bs.manual.len());
                for s in bs.grid_seeds() {
                    count(counts, format!("{b}.grid.{}", s.hclass.as_str()), 1);
                }
                let dropped = bs.inf.dropped + bs.zero.dropped + bs.grid.iter().map(|g| g.dropped).sum::<usize>();
                count(counts, format!("{b}.dropped"), dropped);
            }
        }
        Stage::Trace => {
            let (traced, failures) = trace_seeds(scn, &out.seeds)?;
            count(counts, "families", traced.len());
            count(counts, "failures", failures);
            out.traced = traced;
        }
        Stage::Analyze => {
            out.traced.par_iter_mut().for_each(|t| {
                if let Ok(ctx) = scn.context(t.family.d1) {
                    annotate_members(&mut t.family.members, &ctx, scn.pvt.samples, scn.pvt.tol);
                }
            });
            for t in &out.traced {
                for m in &t.family.members {
                    let key = match m.pvt_ok {
                        Some(true) => "pvt_ok",
                        Some(false) => "pvt_violated",
                        None => "pvt_failed",
                    };
                    count(counts, key, 1);
                }
            }
        }
        Stage::Atlas => {
            let mut catalog = SeedCatalog::default();
            for bs in &out.seeds {
                catalog.inf.extend(bs.inf.seeds.iter().copied());
                catalog.zero.extend(bs.zero.seeds.iter().copied());
            }
            let filter = MinJFilter {
                require_pvt: out.manifest.completed(Stage::Analyze),
                elliptic_only: false,
            };
            let base = scn.context(BranchFlag::Long)?;
            let ctx_for = |d1| base.with_branch(d1);
            out.atlas = build_atlas(out.traced.clone(), &catalog, ctx_for, &scn.atlas, filter);
            count(counts, "families", out.atlas.len());
            count(counts, "cycles", out.atlas.iter().filter(|e| is_cycle(&e.family)).count());
            count(counts, "connections", out.atlas.iter().map(|e| e.connections.len()).sum::<usize>() / 2);
        }
        Stage::Porkchop => {
            out.porkchop = flags
                .iter()
                .map(|&d1| {
                    let ctx = scn.context(d1)?;
                    Ok((d1, porkchop_grid(&ctx, &scn.porkchop_window(&ctx), scn.porkchop.grid)?))
                })
                .collect::<Result<_>>()?;
            for (d1, g) in &out.porkchop {
                count(counts, format!("{}.cells", d1.as_str()), g.t_dep.len() * g.tof.len());
                count(counts, format!("{}.failures", d1.as_str()), g.failures);
            }
        }
        Stage::Project => {
            if scn.domain != DerivDomain::Temporal {
                return Err(Error::InvalidConfig("time-line projection needs temporal-domain families".into()));
            }
            let ctx = scn.context(BranchFlag::Long)?;
            let SeedWindow::Temporal { t_dep, tof } = scn.seed_window(&ctx) else {
                return Err(Error::InvalidConfig("projection window must be temporal".into()));
            };
            let with_pvt = out.manifest.completed(Stage::Analyze);
            let cat = intersect_families(&out.atlas, &ctx, t_dep, tof, with_pvt)?;
            count(counts, "events", cat.events.len());
            count(counts, "dropped", cat.dropped);
            out.events = Some(cat);
        }
    }
    Ok(())
}

pub fn is_cycle(f: &Family) -> bool {
    f.end1 == TerminationReason::CycleClosed && f.end2 == TerminationReason::CycleClosed
}

/// Branch flag under which `ctx_to` reproduces the transfer arc found at
/// `x` under `ctx_from`. Coplanar contexts select the sense of motion,
/// inclined ones the side of `r1 x r2`.
pub fn matching_branch(x: &crate::cost::DesignPoint, ctx_from: &ScenarioContext, ctx_to: &ScenarioContext) -> Result<BranchFlag> {
    let c = evaluate_j(x, ctx_from)?;
    let (s1, _) = ctx_from.endpoints(x)?;
    let n_arc = s1.r.cross(&c.lambert.v1g);
    let same = |v: nalgebra::Vector3<f64>| if n_arc.dot(&v) > 0.0 { BranchFlag::Short } else { BranchFlag::Long };
    Ok(match ctx_to.coplanar_normal() {
        // long is prograde about h1
        Some(h) => match same(h) {
            BranchFlag::Short => BranchFlag::Long,
            BranchFlag::Long => BranchFlag::Short,
        },
        None => {
            let (a, b) = ctx_to.endpoints(x)?;
            same(a.r.cross(&b.r))
        }
    })
}

/// A family of one sweep value continued into the next value's geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowedFamily {
    pub from_value: f64,
    pub to_value: f64,
    pub family_index: usize,
    pub was_cycle: bool,
    pub d1: BranchFlag,
    pub end1: TerminationReason,
    pub end2: TerminationReason,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub families: usize,
    pub cycles: Vec<usize>,
    /// Per family: index, branch, end labels.
    pub end_labels: Vec<(usize, BranchFlag, String, String)>,
    /// Per family: lowest reported min-J value [km/s].
    pub min_j: Vec<(usize, Option<f64>)>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub element: String,
    pub points: Vec<SweepPoint>,
    /// Cycle-closed families continued into the next value.
    pub followed: Vec<FollowedFamily>,
    /// Family count change between consecutive values.
    pub count_changes: Vec<(f64, f64, i64)>,
}

pub struct SweepOutput {
    pub runs: Vec<(f64, Result<RunOutput>)>,
    pub report: SweepReport,
}

/// Runs the pipeline once per sweep value, isolating failures, and follows
/// each cycle-closed family into the next value.
pub fn sweep(scn: &Scenario, element: &str, values: &[f64], stages: &[Stage]) -> Result<SweepOutput> {
    let mut runs = Vec::new();
    for &v in values {
        let r = scn.with_element(element, v).and_then(|s| run_pipeline(&s, stages));
        runs.push((v, r));
    }
    let mut points = Vec::new();
    for (v, r) in &runs {
        points.push(match r {
            Ok(o) => SweepPoint {
                value: *v,
                families: o.atlas.len(),
                cycles: o.atlas.iter().filter(|e| is_cycle(&e.family)).map(|e| e.index).collect(),
                end_labels: o
                    .atlas
                    .iter()
                    .map(|e| (e.index, e.family.d1, e.end_labels[0].name(), e.end_labels[1].name()))
                    .collect(),
                min_j: o.atlas.iter().map(|e| (e.index, e.min_j_members.first().map(|m| m.cost.j))).collect(),
                error: None,
            },
            Err(e) => SweepPoint {
                value: *v,
                families: 0,
                cycles: vec![],
                end_labels: vec![],
                min_j: vec![],
                error: Some(e.to_string()),
            },
        });
    }
    let mut followed = Vec::new();
    for w in runs.windows(2) {
        let ((va, Ok(a)), (vb, _)) = (&w[0], &w[1]) else { continue };
        let (Ok(sa), Ok(sb)) = (scn.with_element(element, *va), scn.with_element(element, *vb)) else { continue };
        for e in a.atlas.iter().filter(|e| is_cycle(&e.family)) {
            match follow_family(e, &sa, &sb) {
                Ok(f) => followed.push(FollowedFamily {
                    from_value: *va,
                    to_value: *vb,
                    family_index: e.index,
                    was_cycle: true,
                    d1: f.d1,
                    end1: f.end1,
                    end2: f.end2,
                    members: f.members.len(),
                }),
                Err(err) => warn!("family {} not followed to {vb}: {err}", e.index),
            }
        }
    }
    let count_changes = points
        .windows(2)
        .map(|w| (w[0].value, w[1].value, w[1].families as i64 - w[0].families as i64))
        .collect();
    Ok(SweepOutput { runs, report: SweepReport { element: element.to_string(), points, followed, count_changes } })
}

/// Continues a family of scenario `from` in the geometry of `to`, starting
/// from its lowest-cost member.
pub fn follow_family(e: &AtlasEntry, from: &Scenario, to: &Scenario) -> Result<Family> {
    let start = e
        .family
        .members
        .iter()
        .min_by(|a, b| a.cost.j.total_cmp(&b.cost.j))
        .ok_or(Error::InvalidConfig("empty family".into()))?;
    let ctx_from = from.context(e.family.d1)?;
    let d1 = matching_branch(&start.x, &ctx_from, &to.context(BranchFlag::Long)?)?;
    let ctx_to = to.context(d1)?;
    trace_family_tagged(&start.x, &ctx_to, e.family.domain, &to.continuation, &format!("followed_{}", e.index))
}
