//! Scenario files and the bundled IEEE-13-like test network.
//!
//! A scenario is one TOML document:
//!
//! ```toml
//! schema = "pevgrid-scenario v1"
//! horizon = 24
//!
//! [[network]]
//! id = "632"
//! capacity = 181.5        # kW; `parent` omitted for the substation feeder
//!
//! [[network]]
//! id = "634"
//! parent = "632"
//! capacity = 24.0
//!
//! [base_load]             # leaf feeders only, `horizon` values in kW
//! "634" = [9.1, 8.7, ...]
//!
//! [[fleet]]
//! id = "ev-634-1"
//! feeder = "634"          # a leaf
//! start = 1               # first and last slot, 1-based, inclusive
//! finish = 24
//! demand = 10.0           # kWh
//! rate_cap = 1.96         # kW, or a list of `horizon` values
//!
//! [method]                # optional run settings, see `MethodSection`
//! name = "primal-dual"
//! alpha = 0.005
//! ```
//!
//! Unknown keys are rejected everywhere. A PEV may also carry
//! `battery_capacity`, `efficiency` and `initial_soc`; when present the
//! demand must equal `battery_capacity * (1 - initial_soc) / efficiency`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{self, BatterySpec, FeasibilityReport, FeederSpec, PevSpec, RateCap, Scenario};

pub const SCENARIO_SCHEMA: &str = "pevgrid-scenario v1";

/// The bundled desk-scale scenario (seed 13, scale 0.1).
pub const DESK13_TOML: &str = include_str!("../scenarios/desk13.toml");
pub const DESK13_SEED: u64 = 13;
pub const DESK13_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: String,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub network: Vec<FeederEntry>,
    pub base_load: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub fleet: Vec<PevEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    // Optional here so a missing value can be reported with the feeder's id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateCapEntry {
    Scalar(f64),
    Series(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PevEntry {
    pub id: String,
    pub feeder: String,
    pub start: usize,
    pub finish: usize,
    pub demand: f64,
    pub rate_cap: RateCapEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery_capacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_soc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Penalty,
    PrimalDual,
    Unconstrained,
}

impl std::fmt::Display for MethodName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MethodName::Penalty => "penalty",
            MethodName::PrimalDual => "primal-dual",
            MethodName::Unconstrained => "unconstrained",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaEntry {
    Uniform(f64),
    PerFeeder(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionName {
    Exact,
    Bisection,
}

/// Optional run settings. Anything left out falls back to the method's
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<MethodName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Penalty step as a fraction of the descent bound, when `alpha` is unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent_offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bisection_tolerance: Option<f64>,
    /// Slater slack behind the multiplier cap (kW).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
    /// Capacity rule used when the scenario was generated; informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))?;
        if file.schema != SCENARIO_SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported schema `{}`, expected `{SCENARIO_SCHEMA}`",
                file.schema
            )));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("cannot serialize scenario: {e}")))
    }

    pub fn feeder_specs(&self) -> Result<Vec<FeederSpec>> {
        self.network
            .iter()
            .map(|f| {
                let capacity = f
                    .capacity
                    .ok_or_else(|| Error::Parse(format!("feeder `{}`: missing field `capacity`", f.id)))?;
                Ok(FeederSpec {
                    id: f.id.clone(),
                    parent: f.parent.clone(),
                    capacity,
                })
            })
            .collect()
    }

    pub fn pev_specs(&self) -> Result<Vec<PevSpec>> {
        self.fleet
            .iter()
            .map(|p| {
                let battery = match (p.battery_capacity, p.efficiency, p.initial_soc) {
                    (None, None, None) => None,
                    (Some(capacity_kwh), Some(efficiency), Some(initial_soc)) => Some(BatterySpec {
                        capacity_kwh,
                        efficiency,
                        initial_soc,
                    }),
                    _ => {
                        return Err(Error::Parse(format!(
                            "pev `{}`: battery_capacity, efficiency and initial_soc go together",
                            p.id
                        )))
                    }
                };
                Ok(PevSpec {
                    id: p.id.clone(),
                    feeder: p.feeder.clone(),
                    start: p.start,
                    finish: p.finish,
                    demand: p.demand,
                    rate_cap: match &p.rate_cap {
                        RateCapEntry::Scalar(c) => RateCap::Constant(*c),
                        RateCapEntry::Series(v) => RateCap::PerSlot(v.clone()),
                    },
                    battery,
                })
            })
            .collect()
    }

    pub fn build(&self) -> Result<Scenario> {
        Scenario::build(&self.feeder_specs()?, &self.base_load, &self.pev_specs()?, self.horizon)
    }
}

/// A parsed, built and screened scenario.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub scenario: Scenario,
    pub report: FeasibilityReport,
}

pub fn parse_scenario(text: &str) -> Result<LoadedScenario> {
    let file = ScenarioFile::parse(text)?;
    let scenario = file.build()?;
    let report = network::validate_feasibility(&scenario)?;
    Ok(LoadedScenario {
        file,
        scenario,
        report,
    })
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_scenario(file: &ScenarioFile, path: &Path) -> Result<()> {
    std::fs::write(path, file.to_toml()?)?;
    Ok(())
}

pub const PROJECTION_SCHEMA: &str = "pevgrid-projection v1";

/// A single projection problem, for ad-hoc runs of the kernel. Give either
/// `offsets` or all of `previous`, `gradient` and `alpha`, in which case the
/// offsets are `alpha * gradient - previous`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionFile {
    pub schema: String,
    pub caps: Vec<f64>,
    pub demand: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<ProjectionName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl ProjectionFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ProjectionFile =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))?;
        if file.schema != PROJECTION_SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported schema `{}`, expected `{PROJECTION_SCHEMA}`",
                file.schema
            )));
        }
        Ok(file)
    }

    pub fn resolved_offsets(&self) -> Result<Vec<f64>> {
        let n = self.caps.len();
        let offsets = match (&self.offsets, &self.previous, &self.gradient, self.alpha) {
            (Some(b), None, None, None) => b.clone(),
            (None, Some(p), Some(q), Some(a)) => {
                if p.len() != n || q.len() != n {
                    return Err(Error::Parse("previous and gradient must match caps in length".into()));
                }
                q.iter().zip(p).map(|(q, p)| a * q - p).collect()
            }
            _ => {
                return Err(Error::Parse(
                    "give either `offsets` or all of `previous`, `gradient` and `alpha`".into(),
                ))
            }
        };
        if offsets.len() != n {
            return Err(Error::Parse(format!("{} offsets for {n} caps", offsets.len())));
        }
        Ok(offsets)
    }
}

pub fn bundled_desk13() -> LoadedScenario {
    parse_scenario(DESK13_TOML).expect("bundled scenario is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LoadShape {
    Residential,
    Commercial,
    NightIndustrial,
}

impl LoadShape {
    /// Hourly profile normalized to a peak of 1, hour 0 = midnight.
    fn hourly(self) -> [f64; 24] {
        match self {
            LoadShape::Residential => [
                0.50, 0.45, 0.42, 0.41, 0.42, 0.48, 0.62, 0.74, 0.70, 0.62, 0.58, 0.57, 0.58, 0.56,
                0.56, 0.60, 0.70, 0.85, 0.97, 1.00, 0.96, 0.86, 0.72, 0.58,
            ],
            LoadShape::Commercial => [
                0.36, 0.34, 0.33, 0.33, 0.34, 0.38, 0.48, 0.64, 0.82, 0.93, 0.98, 1.00, 0.99, 1.00,
                0.98, 0.95, 0.90, 0.80, 0.64, 0.52, 0.46, 0.42, 0.39, 0.37,
            ],
            LoadShape::NightIndustrial => [
                0.96, 0.99, 1.00, 1.00, 0.98, 0.94, 0.80, 0.62, 0.52, 0.48, 0.46, 0.46, 0.47, 0.46,
                0.46, 0.48, 0.50, 0.52, 0.56, 0.62, 0.72, 0.82, 0.90, 0.94,
            ],
        }
    }
}

/// Feeder tree of the desk scenario: (feeder, parent). Each feeder is named
/// after the bus at its downstream end; `L` marks a short spur carrying the
/// spot load of a bus that also feeds further buses.
const DESK13_TREE: [(&str, Option<&str>); 15] = [
    ("632", None),
    ("633", Some("632")),
    ("634", Some("633")),
    ("645", Some("632")),
    ("645L", Some("645")),
    ("646", Some("645")),
    ("670", Some("632")),
    ("671", Some("632")),
    ("671L", Some("671")),
    ("684", Some("671")),
    ("611", Some("684")),
    ("652", Some("684")),
    ("692", Some("671")),
    ("692L", Some("692")),
    ("675", Some("692")),
];

/// Load points: (leaf feeder, peak kW at scale 1, shape).
const DESK13_LOADS: [(&str, f64, LoadShape); 9] = [
    ("634", 160.0, LoadShape::Residential),
    ("645L", 90.0, LoadShape::Residential),
    ("646", 110.0, LoadShape::Commercial),
    ("670", 100.0, LoadShape::Residential),
    ("671L", 420.0, LoadShape::Commercial),
    ("611", 80.0, LoadShape::NightIndustrial),
    ("652", 70.0, LoadShape::NightIndustrial),
    ("692L", 90.0, LoadShape::Commercial),
    ("675", 300.0, LoadShape::Residential),
];

pub const DESK13_NU: f64 = 1.5;
pub const DESK13_PEVS_PER_LOAD_POINT: f64 = 50.0;
pub const DESK13_DEMAND: f64 = 10.0;
pub const DESK13_RATE_CAP: f64 = 1.96;
/// Relative amplitude of the seeded per-slot base-load jitter.
const DESK13_JITTER: f64 = 0.05;

/// Builds the desk scenario. `scale` shrinks both the PEV count per load
/// point (rounded, at least one) and the base loads, so the PEV share of the
/// energy stays the same at every scale.
pub fn generate_desk13(seed: u64, scale: f64) -> Result<ScenarioFile> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::Config(format!("scale must lie in (0, 1], got {scale}")));
    }
    let horizon = network::DEFAULT_HORIZON;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base_load = BTreeMap::new();
    for (id, peak, shape) in DESK13_LOADS {
        let series: Vec<f64> = shape
            .hourly()
            .iter()
            .map(|x| {
                let jitter = 1.0 + DESK13_JITTER * rng.random_range(-1.0..1.0);
                round3(peak * scale * x * jitter)
            })
            .collect();
        base_load.insert(id.to_string(), series);
    }

    // aggregate upward to size capacities by the nu rule
    let mut aggregate: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (id, _) in DESK13_TREE.iter().rev() {
        let own = base_load.get(*id).cloned().unwrap_or_else(|| vec![0.0; horizon]);
        let mut total = own;
        for (child, parent) in DESK13_TREE {
            if parent == Some(*id) {
                for (a, b) in total.iter_mut().zip(&aggregate[child]) {
                    *a += b;
                }
            }
        }
        aggregate.insert(id, total);
    }
    let network = DESK13_TREE
        .iter()
        .map(|(id, parent)| {
            let peak = aggregate[id].iter().copied().fold(0.0, f64::max);
            FeederEntry {
                id: id.to_string(),
                parent: parent.map(str::to_string),
                capacity: Some(round3(DESK13_NU * peak)),
            }
        })
        .collect();

    let per_point = ((DESK13_PEVS_PER_LOAD_POINT * scale).round() as usize).max(1);
    let mut fleet = Vec::new();
    for (id, _, _) in DESK13_LOADS {
        for i in 1..=per_point {
            fleet.push(PevEntry {
                id: format!("ev-{id}-{i}"),
                feeder: id.to_string(),
                start: 1,
                finish: horizon,
                demand: DESK13_DEMAND,
                rate_cap: RateCapEntry::Scalar(DESK13_RATE_CAP),
                battery_capacity: None,
                efficiency: None,
                initial_soc: None,
            });
        }
    }
    Ok(ScenarioFile {
        schema: SCENARIO_SCHEMA.to_string(),
        horizon,
        seed: Some(seed),
        network,
        base_load,
        fleet,
        method: Some(MethodSection {
            nu: Some(DESK13_NU),
            ..MethodSection::default()
        }),
        output: None,
    })
}

// Through a decimal string so the file shows short literals.
fn round3(x: f64) -> f64 {
    format!("{x:.3}").parse().expect("formatted float parses")
}
