//! Scenario files: orbits, solver settings and sweep definitions in TOML.
//!
//! Input angles are in degrees, lengths in km, times in s.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atlas::AtlasConfig;
use crate::continuation::ContinuationConfig;
use crate::cost::{DerivDomain, DesignPoint, ScenarioContext};
use crate::error::{Error, Result};
use crate::kepler::{ClassicalElements, GravModel};
use crate::lambert::BranchFlag;
use crate::seeds::SeedWindow;

/// Orbital elements with angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSpec {
    /// [km]
    pub a: f64,
    pub e: f64,
    pub i: f64,
    pub raan: f64,
    pub argp: f64,
    #[serde(default)]
    pub m0: f64,
}

impl OrbitSpec {
    pub fn elements(&self) -> Result<ClassicalElements> {
        let d = f64::to_radians;
        ClassicalElements::new(self.a, self.e, d(self.i), d(self.raan), d(self.argp), d(self.m0))
    }

    fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "a" => &mut self.a,
            "e" => &mut self.e,
            "i" => &mut self.i,
            "raan" => &mut self.raan,
            "argp" => &mut self.argp,
            "m0" => &mut self.m0,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branches {
    Short,
    Long,
    #[default]
    Both,
}

impl Branches {
    pub fn flags(self) -> Vec<BranchFlag> {
        match self {
            Branches::Short => vec![BranchFlag::Short],
            Branches::Long => vec![BranchFlag::Long],
            Branches::Both => vec![BranchFlag::Long, BranchFlag::Short],
        }
    }
}

impl std::str::FromStr for Branches {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(Branches::Short),
            "long" => Ok(Branches::Long),
            "both" => Ok(Branches::Both),
            _ => Err(Error::InvalidConfig(format!("unknown branch selection {s:?}"))),
        }
    }
}

/// A seed given by hand, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualSeed {
    pub m1: f64,
    pub m2: f64,
    /// [s]
    pub tof: f64,
    pub branch: BranchFlag,
}

impl ManualSeed {
    pub fn design(&self) -> DesignPoint {
        DesignPoint::new(self.m1.to_radians(), self.m2.to_radians(), self.tof)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedSettings {
    /// Nodes per side of the asymptote landscapes.
    pub asymptote_grid: usize,
    /// Time of flight at which asymptote seeds are re-converged [s].
    pub t_seed: f64,
    /// Grid search resolution over the seed window.
    pub grid: [usize; 2],
    /// Temporal window; defaults to `0 <= T <= 2 P_syn`, `0.2 P2 <= t <= 2 P2`.
    pub window: Option<SeedWindow>,
    /// Angular-domain grid search slices [s]; defaults to `t_seed`.
    pub angular_tofs: Vec<f64>,
    pub manual: Vec<ManualSeed>,
}

impl Default for SeedSettings {
    fn default() -> Self {
        Self {
            asymptote_grid: 64,
            t_seed: 2.5e4,
            grid: [200, 100],
            window: None,
            angular_tofs: Vec::new(),
            manual: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvtSettings {
    pub samples: usize,
    pub tol: f64,
}

impl Default for PvtSettings {
    fn default() -> Self {
        Self { samples: crate::pvt::DEFAULT_SAMPLES, tol: crate::pvt::DEFAULT_PVT_TOL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PorkchopSettings {
    pub grid: [usize; 2],
    /// Defaults to the seed window.
    pub window: Option<SeedWindow>,
}

impl Default for PorkchopSettings {
    fn default() -> Self {
        Self { grid: [200, 100], window: None }
    }
}

/// One element varied over a list of values, e.g. `element = "arrival.i"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub element: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub departure: OrbitSpec,
    pub arrival: OrbitSpec,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default)]
    pub branches: Branches,
    #[serde(default = "default_domain")]
    pub domain: DerivDomain,
    #[serde(default)]
    pub continuation: ContinuationConfig,
    #[serde(default)]
    pub seeds: SeedSettings,
    #[serde(default)]
    pub pvt: PvtSettings,
    #[serde(default)]
    pub atlas: AtlasConfig,
    #[serde(default)]
    pub porkchop: PorkchopSettings,
    pub sweep: Option<SweepSpec>,
}

fn default_mu() -> f64 {
    GravModel::earth().mu
}

fn default_domain() -> DerivDomain {
    DerivDomain::Temporal
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.departure.elements()?;
        self.arrival.elements()?;
        GravModel::new(self.mu)?;
        self.continuation.validate()?;
        let s = &self.seeds;
        if s.asymptote_grid < 32 {
            return Err(Error::Scenario(format!("asymptote_grid = {} < 32", s.asymptote_grid)));
        }
        if !(s.t_seed > 0.0 && s.t_seed.is_finite()) {
            return Err(Error::Scenario(format!("t_seed = {}", s.t_seed)));
        }
        if s.grid.iter().any(|&n| n < 2) || self.porkchop.grid.iter().any(|&n| n < 2) {
            return Err(Error::Scenario("grid resolution below 2".into()));
        }
        for w in s.window.iter().chain(self.porkchop.window.iter()) {
            w.validate()?;
            if w.domain() != DerivDomain::Temporal {
                return Err(Error::Scenario("seed and porkchop windows are temporal".into()));
            }
        }
        if s.angular_tofs.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::Scenario("angular_tofs must be positive".into()));
        }
        if s.manual.iter().any(|m| !(m.tof > 0.0 && m.m1.is_finite() && m.m2.is_finite())) {
            return Err(Error::Scenario("manual seed needs finite angles and tof > 0".into()));
        }
        if !(self.pvt.samples >= 2 && self.pvt.tol >= 0.0) {
            return Err(Error::Scenario("pvt samples >= 2 and tol >= 0".into()));
        }
        if let Some(sw) = &self.sweep {
            let mut probe = self.clone();
            probe.element_mut(&sw.element)?;
            if sw.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Scenario("sweep values must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn context(&self, d1: BranchFlag) -> Result<ScenarioContext> {
        ScenarioContext::new(self.departure.elements()?, self.arrival.elements()?, GravModel::new(self.mu)?, d1)
    }

    /// Element addressed as `departure.<name>` / `arrival.<name>`, or the
    /// shorthand `<name>1` / `<name>2`.
    pub fn element_mut(&mut self, path: &str) -> Result<&mut f64> {
        let (orbit, name) = match path.split_once('.') {
            Some((o, n)) => (o, n),
            None if path.ends_with('1') => ("departure", &path[..path.len() - 1]),
            None if path.ends_with('2') => ("arrival", &path[..path.len() - 1]),
            None => ("", path),
        };
        let spec = match orbit {
            "departure" => &mut self.departure,
            "arrival" => &mut self.arrival,
            _ => return Err(Error::Scenario(format!("unknown element {path:?}"))),
        };
        spec.field_mut(name).ok_or_else(|| Error::Scenario(format!("unknown element {path:?}")))
    }

    /// Copy with one element replaced.
    pub fn with_element(&self, path: &str, value: f64) -> Result<Self> {
        let mut s = self.clone();
        *s.element_mut(path)? = value;
        s.sweep = None;
        s.validate()?;
        Ok(s)
    }

    pub fn seed_window(&self, ctx: &ScenarioContext) -> SeedWindow {
        self.seeds.window.unwrap_or_else(|| SeedWindow::default_temporal(ctx))
    }

    pub fn porkchop_window(&self, ctx: &ScenarioContext) -> SeedWindow {
        self.porkchop.window.unwrap_or_else(|| self.seed_window(ctx))
    }

    /// Angular-domain grid slices.
    pub fn angular_windows(&self) -> Vec<SeedWindow> {
        let tofs = if self.seeds.angular_tofs.is_empty() { vec![self.seeds.t_seed] } else { self.seeds.angular_tofs.clone() };
        tofs.into_iter().map(SeedWindow::default_angular).collect()
    }
}

/// The reconstructed baseline scenario shipped with the crate.
pub const BASELINE_TOML: &str = include_str!("../scenarios/baseline.toml");

pub fn baseline() -> Scenario {
    Scenario::from_toml(BASELINE_TOML).expect("bundled baseline parses")
}
