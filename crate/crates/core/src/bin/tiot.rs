use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use tiot_core::cost::DerivDomain;
use tiot_core::io::{export_run, export_sweep};
use tiot_core::pipeline::{parse_stages, run_pipeline, sweep, RunOutput, Stage};
use tiot_core::scenario::{baseline, Branches, Scenario};

#[derive(Parser)]
#[command(name = "tiot", version, about = "Families of two-impulse optimal transfers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario TOML; the bundled baseline when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    domain: Option<DerivDomain>,
    /// short, long or both.
    #[arg(long)]
    branch: Option<Branches>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; all cores by default.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Asymptote and grid seeds.
    Seeds(Common),
    /// Seeds and continuation.
    Trace(Common),
    /// Primer-vector check on traced members.
    Analyze(Common),
    /// Deduplicated, labelled and connected families.
    Atlas(Common),
    /// Porkchop grid only.
    Porkchop(Common),
    /// Atlas plus time-line intersection events.
    Project(Common),
    /// One run per value of a scenario element.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// e.g. arrival.i; defaults to the scenario's sweep block.
        #[arg(long)]
        element: Option<String>,
        /// Comma-separated values in scenario units.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, default_value = "all")]
        stages: String,
    },
    /// Full pipeline; sweeps when the scenario has a sweep block.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "all")]
        stages: String,
    },
}

fn load(c: &Common) -> anyhow::Result<Scenario> {
    let mut s = match &c.scenario {
        Some(p) => Scenario::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => baseline(),
    };
    if let Some(d) = c.domain {
        s.domain = d;
    }
    if let Some(b) = c.branch {
        s.branches = b;
    }
    s.validate()?;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(s)
}

fn report(run: &RunOutput) {
    for st in &run.manifest.stages {
        let status = if st.completed { "ok" } else { "FAILED" };
        let counts: Vec<String> = st.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{:<9} {:<6} {:>7.2}s  {}", st.stage.as_str(), status, st.wall_seconds, counts.join(" "));
        if let Some(e) = &st.error {
            println!("          {e}");
        }
    }
}

fn single(c: &Common, s: &Scenario, stages: &[Stage]) -> anyhow::Result<()> {
    let s = s.clone();
    let run = run_pipeline(&s, stages)?;
    export_run(&c.out, &s, &run)?;
    report(&run);
    if run.manifest.stages.iter().any(|r| !r.completed) {
        bail!("run incomplete, see {}", c.out.join("manifest.json").display());
    }
    Ok(())
}

fn do_sweep(c: &Common, s: &Scenario, element: &str, values: &[f64], stages: &[Stage]) -> anyhow::Result<()> {
    let sw = sweep(s, element, values, stages)?;
    export_sweep(&c.out, s, element, &sw)?;
    for p in &sw.report.points {
        match &p.error {
            None => println!("{element} = {}: {} families, cycles {:?}", p.value, p.families, p.cycles),
            Some(e) => println!("{element} = {}: failed: {e}", p.value),
        }
    }
    for f in &sw.report.followed {
        println!(
            "family {} at {} continued to {}: {} / {} ({} members)",
            f.family_index,
            f.from_value,
            f.to_value,
            f.end1.as_str(),
            f.end2.as_str(),
            f.members
        );
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Seeds(c) => single(&c, &load(&c)?, &[Stage::Seeds]),
        Cmd::Trace(c) => single(&c, &load(&c)?, &[Stage::Trace]),
        Cmd::Analyze(c) => single(&c, &load(&c)?, &[Stage::Analyze]),
        Cmd::Atlas(c) => single(&c, &load(&c)?, &[Stage::Analyze, Stage::Atlas]),
        Cmd::Porkchop(c) => single(&c, &load(&c)?, &[Stage::Porkchop]),
        Cmd::Project(c) => single(&c, &load(&c)?, &[Stage::Analyze, Stage::Project]),
        Cmd::Sweep { common, element, values, stages } => {
            let s = load(&common)?;
            let (element, values) = match (element, s.sweep.clone()) {
                (Some(e), _) if !values.is_empty() => (e, values),
                (None, Some(sw)) if values.is_empty() => (sw.element, sw.values),
                _ => bail!("give --element and --values, or a [sweep] block in the scenario"),
            };
            do_sweep(&common, &s, &element, &values, &parse_stages(&stages)?)
        }
        Cmd::Run { common, stages } => {
            let stages = parse_stages(&stages)?;
            let s = load(&common)?;
            match s.sweep.clone() {
                Some(sw) if !sw.values.is_empty() => do_sweep(&common, &s, &sw.element, &sw.values, &stages),
                _ => single(&common, &s, &stages),
            }
        }
    }
}
