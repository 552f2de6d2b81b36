//! Family catalog: duplicate removal, indexing, end-point labels,
//! connections and min-J members.

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::continuation::{wrapped_distance, Family, FamilyMember, TerminationReason};
use crate::cost::{ScenarioContext, StationaryClass};
use crate::error::Result;
use crate::kepler::{angle_diff, elements_to_state, perifocal_rotation, wrap_2pi};
use crate::lambert::{BranchFlag, Conic};
use crate::seeds::{Seed, SeedLabel, SeedOrigin};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtlasConfig {
    /// Duplicate tolerance, scaled units.
    pub dedup_tol: f64,
    /// Members within `dedup_tol` needed to call two traces duplicates.
    pub dedup_overlap: usize,
    /// End point to asymptote matching radius [rad].
    pub match_radius: f64,
    /// Singularity tolerance used by continuation [rad].
    pub sing_tol: f64,
    pub connect_angle: f64,
    pub connect_tof_rel: f64,
    /// Two ends join only if their outward tangents satisfy
    /// `t_a . t_b <= -connect_alignment`.
    pub connect_alignment: f64,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        Self {
            dedup_tol: 0.02,
            dedup_overlap: 10,
            match_radius: 0.3,
            sing_tol: 0.01,
            connect_angle: 0.1,
            connect_tof_rel: 0.1,
            connect_alignment: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "seed", rename_all = "snake_case")]
pub enum EndpointLabel {
    InfAsymptote(SeedLabel),
    ZeroAsymptote(SeedLabel),
    Pi1,
    Pi2,
    Cycle,
    Cap,
    Unidentified,
}

impl EndpointLabel {
    pub fn name(&self) -> String {
        match self {
            EndpointLabel::InfAsymptote(l) | EndpointLabel::ZeroAsymptote(l) => l.name(),
            EndpointLabel::Pi1 => "pi1".into(),
            EndpointLabel::Pi2 => "pi2".into(),
            EndpointLabel::Cycle => "cycle".into(),
            EndpointLabel::Cap => "cap".into(),
            EndpointLabel::Unidentified => "unidentified".into(),
        }
    }

    pub fn pi_index(&self) -> Option<u8> {
        match self {
            EndpointLabel::Pi1 => Some(1),
            EndpointLabel::Pi2 => Some(2),
            _ => None,
        }
    }
}

/// A traced family with the seed it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedFamily {
    pub family: Family,
    pub seed: SeedLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub other: usize,
    pub label: EndpointLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtlasEntry {
    pub index: usize,
    pub family: Family,
    pub seed: SeedLabel,
    pub end_labels: [EndpointLabel; 2],
    pub connections: Vec<Connection>,
    pub min_j_members: Vec<FamilyMember>,
}

/// Asymptote seeds used to name end points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeedCatalog {
    pub inf: Vec<Seed>,
    pub zero: Vec<Seed>,
}

type Cell = (i64, i64, i64);

/// Spatial hash of scaled member coordinates with angles wrapped.
struct MemberIndex {
    h: f64,
    n_ang: i64,
    cells: HashMap<Cell, Vec<[f64; 3]>>,
}

impl MemberIndex {
    fn new(members: &[FamilyMember], ts: f64, h: f64) -> Self {
        let n_ang = (std::f64::consts::TAU / h).floor().max(1.0) as i64;
        let mut idx = Self { h, n_ang, cells: HashMap::new() };
        for m in members {
            let p = Self::wrapped(&m.scaled(ts));
            idx.cells.entry(idx.cell(&p)).or_default().push(p);
        }
        idx
    }

    fn wrapped(p: &[f64; 3]) -> [f64; 3] {
        [wrap_2pi(p[0]), wrap_2pi(p[1]), p[2]]
    }

    fn cell(&self, p: &[f64; 3]) -> Cell {
        let a = std::f64::consts::TAU / self.n_ang as f64;
        (
            ((p[0] / a).floor() as i64).rem_euclid(self.n_ang),
            ((p[1] / a).floor() as i64).rem_euclid(self.n_ang),
            (p[2] / self.h).floor() as i64,
        )
    }

    fn min_distance(&self, p: &[f64; 3]) -> f64 {
        let p = Self::wrapped(p);
        let (i, j, k) = self.cell(&p);
        let mut best = f64::INFINITY;
        for di in -1..=1 {
            for dj in -1..=1 {
                for dk in -1..=1 {
                    let c = ((i + di).rem_euclid(self.n_ang), (j + dj).rem_euclid(self.n_ang), k + dk);
                    if let Some(v) = self.cells.get(&c) {
                        for q in v {
                            best = best.min(wrapped_distance(&p, q));
                        }
                    }
                }
            }
        }
        best
    }
}

/// Members of `a` lying within `tol` of some member of `b`.
fn overlap_count(a: &Family, b: &MemberIndex, ts: f64, tol: f64) -> usize {
    a.members.iter().filter(|m| b.min_distance(&m.scaled(ts)) < tol).count()
}

/// Largest distance from a member of `a` to the members of `set`, in scaled
/// units (directed Hausdorff distance).
pub fn directed_hausdorff(a: &Family, set: &[&Family], ts: f64, tol_hint: f64) -> f64 {
    let all: Vec<FamilyMember> = set.iter().flat_map(|f| f.members.iter().copied()).collect();
    let idx = MemberIndex::new(&all, ts, tol_hint);
    a.members
        .iter()
        .map(|m| {
            let d = idx.min_distance(&m.scaled(ts));
            if d.is_finite() {
                d
            } else {
                let p = m.scaled(ts);
                all.iter().map(|q| wrapped_distance(&p, &q.scaled(ts))).fold(f64::INFINITY, f64::min)
            }
        })
        .fold(0.0, f64::max)
}

/// Removes duplicate traces, keeping the longest representative.
pub fn dedup(families: Vec<TracedFamily>, ts: f64, tol: f64, min_overlap: usize) -> Vec<TracedFamily> {
    let mut order: Vec<usize> = (0..families.len()).collect();
    order.sort_by(|&a, &b| families[b].family.members.len().cmp(&families[a].family.members.len()).then(a.cmp(&b)));
    let mut kept: Vec<(usize, MemberIndex)> = Vec::new();
    for i in order {
        let f = &families[i].family;
        let dup = kept.iter().any(|(k, idx)| {
            let g = &families[*k].family;
            g.d1 == f.d1 && g.domain == f.domain && overlap_count(f, idx, ts, tol) > min_overlap
        });
        if !dup {
            kept.push((i, MemberIndex::new(&f.members, ts, tol)));
        }
    }
    let mut keep: Vec<usize> = kept.into_iter().map(|(i, _)| i).collect();
    keep.sort_unstable();
    let mut families: Vec<Option<TracedFamily>> = families.into_iter().map(Some).collect();
    keep.into_iter().map(|i| families[i].take().expect("kept once")).collect()
}

/// Which nodal-line configuration a near-pi transfer approaches: 2 when the
/// departure point lies along `h1 x h2`, 1 when opposite. For coplanar orbits
/// the departure eccentricity direction stands in for the node.
pub fn pi_configuration(x: &crate::cost::DesignPoint, ctx: &ScenarioContext) -> Result<u8> {
    let (s1, _) = ctx.endpoints(x)?;
    let h1 = perifocal_rotation(&ctx.dep) * Vector3::z();
    let h2 = perifocal_rotation(&ctx.arr) * Vector3::z();
    let mut node = h1.cross(&h2);
    if node.norm() < 1e-9 {
        node = perifocal_rotation(&ctx.dep) * Vector3::x();
    }
    Ok(if s1.r.dot(&node) > 0.0 { 2 } else { 1 })
}

fn nearest_seed(m: &FamilyMember, seeds: &[Seed], d1: BranchFlag, radius: f64) -> Option<SeedLabel> {
    seeds
        .iter()
        .filter(|s| s.label.d1 == d1)
        .map(|s| {
            let d = angle_diff(m.x.m1, s.source[0]).hypot(angle_diff(m.x.m2, s.source[1]));
            (d, s.label)
        })
        .filter(|(d, _)| *d <= radius)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, l)| l)
}

fn label_end(
    reason: TerminationReason,
    m: &FamilyMember,
    d1: BranchFlag,
    catalog: &SeedCatalog,
    ctx: &ScenarioContext,
    cfg: &AtlasConfig,
) -> EndpointLabel {
    let near_pi = (m.theta - std::f64::consts::PI).abs() < 2.0 * cfg.sing_tol;
    let pi_label = || match pi_configuration(&m.x, ctx) {
        Ok(1) => EndpointLabel::Pi1,
        Ok(_) => EndpointLabel::Pi2,
        Err(_) => EndpointLabel::Unidentified,
    };
    match reason {
        TerminationReason::CycleClosed => EndpointLabel::Cycle,
        TerminationReason::StepCap => EndpointLabel::Cap,
        TerminationReason::TofAboveMax => nearest_seed(m, &catalog.inf, d1, cfg.match_radius)
            .map(EndpointLabel::InfAsymptote)
            .unwrap_or(EndpointLabel::Unidentified),
        TerminationReason::TofBelowMin => {
            if near_pi {
                pi_label()
            } else {
                nearest_seed(m, &catalog.zero, d1, cfg.match_radius)
                    .map(EndpointLabel::ZeroAsymptote)
                    .unwrap_or(EndpointLabel::Unidentified)
            }
        }
        TerminationReason::SingularityPi => pi_label(),
        TerminationReason::CorrectorFailure => {
            if near_pi {
                pi_label()
            } else {
                EndpointLabel::Unidentified
            }
        }
    }
}

/// Labels the two ends of a family, `end1` first.
pub fn label_endpoints(
    f: &Family,
    catalog: &SeedCatalog,
    ctx: &ScenarioContext,
    cfg: &AtlasConfig,
) -> [EndpointLabel; 2] {
    let (Some(first), Some(last)) = (f.members.first(), f.members.last()) else {
        return [EndpointLabel::Unidentified; 2];
    };
    [
        label_end(f.end1, first, f.d1, catalog, ctx, cfg),
        label_end(f.end2, last, f.d1, catalog, ctx, cfg),
    ]
}

/// End member of a family and its outward unit tangent.
fn end_of(f: &Family, which: usize) -> (&FamilyMember, [f64; 3]) {
    if which == 0 {
        let m = &f.members[0];
        (m, m.tangent.map(|t| -t))
    } else {
        let m = f.members.last().expect("nonempty");
        (m, m.tangent)
    }
}

fn ends_meet(a: (&FamilyMember, [f64; 3]), b: (&FamilyMember, [f64; 3]), cfg: &AtlasConfig) -> bool {
    let ((ma, ta), (mb, tb)) = (a, b);
    let da = angle_diff(ma.x.m1, mb.x.m1).hypot(angle_diff(ma.x.m2, mb.x.m2));
    let dt = (ma.x.tof - mb.x.tof).abs() / ma.x.tof.max(mb.x.tof);
    let align: f64 = (0..3).map(|k| ta[k] * tb[k]).sum();
    da <= cfg.connect_angle && dt <= cfg.connect_tof_rel && align <= -cfg.connect_alignment
}

/// Fills symmetric `connections` between entries sharing a pi end point.
pub fn detect_connections(entries: &mut [AtlasEntry], cfg: &AtlasConfig) {
    for e in entries.iter_mut() {
        e.connections.clear();
    }
    let n = entries.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&entries[i], &entries[j]);
            if a.family.members.is_empty() || b.family.members.is_empty() {
                continue;
            }
            let mut found = None;
            for ea in 0..2 {
                for eb in 0..2 {
                    let (la, lb) = (a.end_labels[ea], b.end_labels[eb]);
                    if found.is_none()
                        && la.pi_index().is_some()
                        && la == lb
                        && ends_meet(end_of(&a.family, ea), end_of(&b.family, eb), cfg)
                    {
                        found = Some(la);
                    }
                }
            }
            if let Some(label) = found {
                let (ia, ib) = (entries[i].index, entries[j].index);
                entries[i].connections.push(Connection { other: ib, label });
                entries[j].connections.push(Connection { other: ia, label });
            }
        }
    }
}

/// Connected components of the connection graph, as sorted index lists.
pub fn connection_components(entries: &[AtlasEntry]) -> Vec<Vec<usize>> {
    let pos: HashMap<usize, usize> = entries.iter().enumerate().map(|(k, e)| (e.index, k)).collect();
    let mut seen = vec![false; entries.len()];
    let mut out = Vec::new();
    for s in 0..entries.len() {
        if seen[s] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(k) = stack.pop() {
            comp.push(entries[k].index);
            for c in &entries[k].connections {
                let o = pos[&c.other];
                if !seen[o] {
                    seen[o] = true;
                    stack.push(o);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MinJFilter {
    pub require_pvt: bool,
    /// Drop members whose transfer arc is not elliptic.
    pub elliptic_only: bool,
}

/// Lowest-cost member of each contiguous run of eligible members (Hessian
/// minima, optionally PVT-satisfying and elliptic), sorted by cost.
pub fn min_j_members(f: &Family, filter: MinJFilter) -> Vec<FamilyMember> {
    let ok = |m: &FamilyMember| {
        m.hclass == StationaryClass::Minimum
            && (!filter.require_pvt || m.pvt_ok == Some(true))
            && (!filter.elliptic_only || m.cost.lambert.conic == Conic::Elliptic)
    };
    let mut out: Vec<FamilyMember> = Vec::new();
    let mut best: Option<FamilyMember> = None;
    for m in &f.members {
        if ok(m) {
            if best.is_none_or(|b| m.cost.j < b.cost.j) {
                best = Some(*m);
            }
        } else if let Some(b) = best.take() {
            out.push(b);
        }
    }
    out.extend(best);
    out.sort_by(|a, b| a.cost.j.total_cmp(&b.cost.j));
    out
}

/// Burn components along (radial, tangential, normal) of the local orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurnComponents {
    pub magnitude: f64,
    pub radial: f64,
    pub tangential: f64,
    pub normal: f64,
}

impl BurnComponents {
    fn project(dv: &Vector3<f64>, r: &Vector3<f64>, v: &Vector3<f64>) -> Self {
        let rh = r.normalize();
        let hh = r.cross(v).normalize();
        let th = hh.cross(&rh);
        Self { magnitude: dv.norm(), radial: dv.dot(&rh), tangential: dv.dot(&th), normal: dv.dot(&hh) }
    }

    /// `| |dv|^2 - (r^2 + t^2 + h^2) |`.
    pub fn closure_error(&self) -> f64 {
        (self.magnitude.powi(2) - (self.radial.powi(2) + self.tangential.powi(2) + self.normal.powi(2))).abs()
    }
}

/// Both burns in the frame of the orbit they are applied on: the departure
/// orbit for the first, the arrival orbit for the second.
pub fn burn_decomposition(m: &FamilyMember, ctx: &ScenarioContext) -> Result<[BurnComponents; 2]> {
    let s1 = elements_to_state(&ctx.dep, m.x.m1, ctx.g)?;
    let s2 = elements_to_state(&ctx.arr, m.x.m2, ctx.g)?;
    Ok([
        BurnComponents::project(&m.cost.dv1, &s1.r, &s1.v),
        BurnComponents::project(&m.cost.dv2, &s2.r, &s2.v),
    ])
}

fn origin_rank(o: SeedOrigin) -> u8 {
    match o {
        SeedOrigin::AsymptoteInf => 0,
        SeedOrigin::AsymptoteZero => 1,
        SeedOrigin::Grid => 2,
        SeedOrigin::Manual => 3,
    }
}

/// Deduplicates, orders by seed provenance then starting member, labels and
/// connects.
pub fn build_atlas(
    traced: Vec<TracedFamily>,
    catalog: &SeedCatalog,
    ctx_for: impl Fn(BranchFlag) -> ScenarioContext,
    cfg: &AtlasConfig,
    filter: MinJFilter,
) -> Vec<AtlasEntry> {
    let ts = ctx_for(BranchFlag::Long).time_scale;
    let mut fams = dedup(traced, ts, cfg.dedup_tol, cfg.dedup_overlap);
    fams.sort_by(|a, b| {
        let key = |t: &TracedFamily| {
            (origin_rank(t.seed.origin), t.seed.d1 == BranchFlag::Short, t.seed.hclass, t.seed.index)
        };
        key(a).cmp(&key(b)).then_with(|| {
            let (pa, pb) = (a.family.members[0].x, b.family.members[0].x);
            pa.m1.total_cmp(&pb.m1).then(pa.m2.total_cmp(&pb.m2)).then(pa.tof.total_cmp(&pb.tof))
        })
    });
    let mut entries: Vec<AtlasEntry> = fams
        .into_iter()
        .enumerate()
        .map(|(k, t)| {
            let ctx = ctx_for(t.family.d1);
            let end_labels = label_endpoints(&t.family, catalog, &ctx, cfg);
            let min_j_members = min_j_members(&t.family, filter);
            AtlasEntry { index: k + 1, family: t.family, seed: t.seed, end_labels, connections: Vec::new(), min_j_members }
        })
        .collect();
    detect_connections(&mut entries, cfg);
    entries
}
