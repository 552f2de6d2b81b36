//! Flat-file exports. Floats are written with 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atlas::{burn_decomposition, connection_components, AtlasEntry, BurnComponents};
use crate::continuation::Family;
use crate::cost::ScenarioContext;
use crate::error::Result;
use crate::lambert::BranchFlag;
use crate::pipeline::{RunOutput, SweepOutput};
use crate::porkchop::{PorkchopGrid, TimelineEvent};
use crate::scenario::Scenario;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_bool(b: Option<bool>) -> String {
    b.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub index: usize,
    pub m1: f64,
    pub m2: f64,
    pub tof: f64,
    pub j: f64,
    pub class: String,
    pub pvt: Option<bool>,
    pub theta: f64,
    pub tangent_m1: f64,
    pub tangent_m2: f64,
    pub tangent_t: f64,
}

pub fn family_rows(f: &Family) -> Vec<FamilyRow> {
    f.members
        .iter()
        .enumerate()
        .map(|(k, m)| FamilyRow {
            index: k,
            m1: m.x.m1,
            m2: m.x.m2,
            tof: m.x.tof,
            j: m.cost.j,
            class: m.hclass.as_str().into(),
            pvt: m.pvt_ok,
            theta: m.theta,
            tangent_m1: m.tangent[0],
            tangent_m2: m.tangent[1],
            tangent_t: m.tangent[2],
        })
        .collect()
}

pub fn write_family_rows<W: Write>(w: W, rows: &[FamilyRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index", "m1", "m2", "tof", "j", "class", "pvt", "theta", "tangent_m1", "tangent_m2", "tangent_t"])?;
    for r in rows {
        wr.write_record([
            r.index.to_string(),
            fmt_f64(r.m1),
            fmt_f64(r.m2),
            fmt_f64(r.tof),
            fmt_f64(r.j),
            r.class.clone(),
            opt_bool(r.pvt),
            fmt_f64(r.theta),
            fmt_f64(r.tangent_m1),
            fmt_f64(r.tangent_m2),
            fmt_f64(r.tangent_t),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_family_rows<R: std::io::Read>(r: R) -> Result<Vec<FamilyRow>> {
    let mut rd = csv::Reader::from_reader(r);
    Ok(rd.deserialize().collect::<std::result::Result<Vec<FamilyRow>, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub t_dep: f64,
    pub tof: f64,
    pub branch: BranchFlag,
    pub family: usize,
    pub class: String,
    pub pvt: Option<bool>,
    pub j: f64,
    pub m1: f64,
    pub m2: f64,
    pub grad_norm: f64,
}

impl From<&TimelineEvent> for EventRow {
    fn from(e: &TimelineEvent) -> Self {
        Self {
            t_dep: e.t_dep,
            tof: e.tof,
            branch: e.d1,
            family: e.family_index,
            class: e.hclass.as_str().into(),
            pvt: e.pvt_ok,
            j: e.j,
            m1: e.x.m1,
            m2: e.x.m2,
            grad_norm: e.grad_norm,
        }
    }
}

pub fn write_event_rows<W: Write>(w: W, rows: &[EventRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t_dep", "tof", "branch", "family", "class", "pvt", "j", "m1", "m2", "grad_norm"])?;
    for r in rows {
        wr.write_record([
            fmt_f64(r.t_dep),
            fmt_f64(r.tof),
            r.branch.as_str().into(),
            r.family.to_string(),
            r.class.clone(),
            opt_bool(r.pvt),
            fmt_f64(r.j),
            fmt_f64(r.m1),
            fmt_f64(r.m2),
            fmt_f64(r.grad_norm),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_event_rows<R: std::io::Read>(r: R) -> Result<Vec<EventRow>> {
    let mut rd = csv::Reader::from_reader(r);
    Ok(rd.deserialize().collect::<std::result::Result<Vec<EventRow>, _>>()?)
}

pub fn write_porkchop<W: Write>(w: W, g: &PorkchopGrid) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t_dep", "tof", "j"])?;
    for (i, row) in g.j.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            wr.write_record([fmt_f64(g.t_dep[i]), fmt_f64(g.tof[k]), v.map(fmt_f64).unwrap_or_default()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EndJson {
    label: String,
    termination: String,
    m1: f64,
    m2: f64,
    tof: f64,
    theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct MinJJson {
    m1: f64,
    m2: f64,
    tof: f64,
    j: f64,
    pvt: Option<bool>,
    burns: Option<[BurnComponents; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct FamilyJson {
    index: usize,
    branch: BranchFlag,
    domain: String,
    seed: String,
    members: usize,
    ends: [EndJson; 2],
    connections: Vec<(usize, String)>,
    min_j: Vec<MinJJson>,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct AtlasJson {
    scenario_hash: String,
    families: Vec<FamilyJson>,
    components: Vec<Vec<usize>>,
}

pub fn family_file_name(e: &AtlasEntry) -> String {
    format!("family_{:02}.csv", e.index)
}

fn atlas_json(entries: &[AtlasEntry], hash: &str, ctx_for: impl Fn(BranchFlag) -> ScenarioContext) -> AtlasJson {
    let families = entries
        .iter()
        .map(|e| {
            let f = &e.family;
            let ctx = ctx_for(f.d1);
            let end = |k: usize| {
                let (m, t) = if k == 0 { (&f.members[0], f.end1) } else { (f.members.last().unwrap(), f.end2) };
                EndJson {
                    label: e.end_labels[k].name(),
                    termination: t.as_str().into(),
                    m1: m.x.m1,
                    m2: m.x.m2,
                    tof: m.x.tof,
                    theta: m.theta,
                }
            };
            FamilyJson {
                index: e.index,
                branch: f.d1,
                domain: f.domain.as_str().into(),
                seed: e.seed.name(),
                members: f.members.len(),
                ends: [end(0), end(1)],
                connections: e.connections.iter().map(|c| (c.other, c.label.name())).collect(),
                min_j: e
                    .min_j_members
                    .iter()
                    .map(|m| MinJJson {
                        m1: m.x.m1,
                        m2: m.x.m2,
                        tof: m.x.tof,
                        j: m.cost.j,
                        pvt: m.pvt_ok,
                        burns: burn_decomposition(m, &ctx).ok(),
                    })
                    .collect(),
                file: format!("families/{}", family_file_name(e)),
            }
        })
        .collect();
    AtlasJson { scenario_hash: hash.into(), families, components: connection_components(entries) }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Writes everything a run produced into `dir`.
pub fn export_run(dir: &Path, scn: &Scenario, run: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    if !run.seeds.is_empty() {
        let mut wr = csv::Writer::from_writer(fs::File::create(dir.join("seeds.csv"))?);
        wr.write_record(["branch", "origin", "label", "class", "m1", "m2", "tof", "source_1", "source_2"])?;
        for bs in &run.seeds {
            let all = bs.inf.seeds.iter().chain(bs.zero.seeds.iter()).chain(bs.grid_seeds()).chain(bs.manual.iter());
            for s in all {
                wr.write_record([
                    bs.d1.as_str().to_string(),
                    s.label.origin.as_str().into(),
                    s.label.name(),
                    s.hclass.as_str().into(),
                    fmt_f64(s.x.m1),
                    fmt_f64(s.x.m2),
                    fmt_f64(s.x.tof),
                    fmt_f64(s.source[0]),
                    fmt_f64(s.source[1]),
                ])?;
            }
        }
        wr.flush()?;
    }
    if !run.atlas.is_empty() {
        let fam_dir = dir.join("families");
        fs::create_dir_all(&fam_dir)?;
        for e in &run.atlas {
            let f = fs::File::create(fam_dir.join(family_file_name(e)))?;
            write_family_rows(std::io::BufWriter::new(f), &family_rows(&e.family))?;
        }
        let base = scn.context(BranchFlag::Long)?;
        let doc = atlas_json(&run.atlas, &run.manifest.scenario_hash, |d1| base.with_branch(d1));
        write_json(&dir.join("atlas.json"), &doc)?;
    }
    for (d1, g) in &run.porkchop {
        let f = fs::File::create(dir.join(format!("porkchop_{}.csv", d1.as_str())))?;
        write_porkchop(std::io::BufWriter::new(f), g)?;
    }
    if let Some(cat) = &run.events {
        let rows: Vec<EventRow> = cat.events.iter().map(EventRow::from).collect();
        write_event_rows(fs::File::create(dir.join("events.csv"))?, &rows)?;
    }
    write_json(&dir.join("manifest.json"), &run.manifest)?;
    Ok(())
}

/// Per-value directories `sweep/<element>=<value>/` plus `sweep_report.json`.
pub fn export_sweep(dir: &Path, scn: &Scenario, element: &str, sw: &SweepOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (v, r) in &sw.runs {
        if let Ok(run) = r {
            let sub = dir.join("sweep").join(format!("{element}={v}"));
            export_run(&sub, &scn.with_element(element, *v)?, run)?;
        }
    }
    write_json(&dir.join("sweep_report.json"), &sw.report)
}
