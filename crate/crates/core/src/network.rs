//! Distribution tree, PEV fleet, charging profiles and the feeder constraint
//! bookkeeping shared by every optimizer.
//!
//! The network is a rooted tree of feeders. Base (non-PEV) load is given per
//! leaf feeder and aggregated upward, so an interior feeder always carries
//! exactly the sum of what hangs below it. PEVs attach to leaves only; the
//! feeders on the way from the substation to a PEV form its path, and the
//! PEVs below a feeder form its membership set.
//!
//! Slots are one hour long, so kW and kWh-per-slot coincide numerically.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::ops::Range;

use crate::error::{Error, Result};

/// Horizon used by the generated scenarios.
pub const DEFAULT_HORIZON: usize = 24;

/// Absolute tolerance (kW / kWh) used when screening demands against caps.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FeederSpec {
    pub id: String,
    /// `None` for the feeder leaving the substation.
    pub parent: Option<String>,
    /// Thermal rating in kW.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateCap {
    Constant(f64),
    PerSlot(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatterySpec {
    pub capacity_kwh: f64,
    pub efficiency: f64,
    pub initial_soc: f64,
}

impl BatterySpec {
    /// Energy drawn from the grid to bring the battery to full charge.
    pub fn required_energy(&self) -> f64 {
        self.capacity_kwh * (1.0 - self.initial_soc) / self.efficiency
    }
}

/// A PEV as described in a scenario file. Window bounds are 1-based and
/// inclusive, `1 <= start < finish <= horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct PevSpec {
    pub id: String,
    pub feeder: String,
    pub start: usize,
    pub finish: usize,
    pub demand: f64,
    pub rate_cap: RateCap,
    pub battery: Option<BatterySpec>,
}

/// A validated PEV. `caps` spans the whole horizon and is zero outside the
/// charging window.
#[derive(Debug, Clone, PartialEq)]
pub struct Pev {
    pub id: String,
    pub leaf: usize,
    pub window: Range<usize>,
    pub caps: Vec<f64>,
    pub demand: f64,
}

impl Pev {
    pub fn deliverable_energy(&self) -> f64 {
        self.caps.iter().sum()
    }

    pub fn peak_cap(&self) -> f64 {
        self.caps.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    ids: Vec<String>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    capacity: Vec<f64>,
    horizon: usize,
    /// d_l(t), row-major L x T.
    base: Vec<f64>,
    /// rho_l - d_l(t), row-major L x T.
    headroom: Vec<f64>,
    total_base: Vec<f64>,
    attachments: Vec<usize>,
    paths: Vec<Vec<usize>>,
    members: Vec<Vec<usize>>,
    depth_max: usize,
}

impl Network {
    /// Builds the tree and every derived set.
    ///
    /// `leaf_base` must hold a `horizon`-long series for every leaf and
    /// nothing else; `attachments[k]` names the leaf PEV `k` hangs from.
    pub fn build(
        feeders: &[FeederSpec],
        leaf_base: &BTreeMap<String, Vec<f64>>,
        attachments: &[String],
        horizon: usize,
    ) -> Result<Self> {
        if feeders.is_empty() {
            return Err(Error::MalformedTopology("no feeders".into()));
        }
        if horizon == 0 {
            return Err(Error::MalformedTopology("horizon must be positive".into()));
        }
        let mut index = HashMap::with_capacity(feeders.len());
        for (i, f) in feeders.iter().enumerate() {
            if index.insert(f.id.as_str(), i).is_some() {
                return Err(Error::MalformedTopology(format!("duplicate feeder `{}`", f.id)));
            }
        }
        let mut parent = Vec::with_capacity(feeders.len());
        let mut roots = Vec::new();
        for (i, f) in feeders.iter().enumerate() {
            match &f.parent {
                None => {
                    roots.push(i);
                    parent.push(None);
                }
                Some(p) => {
                    let &pi = index.get(p.as_str()).ok_or_else(|| {
                        Error::MalformedTopology(format!("feeder `{}` has unknown parent `{p}`", f.id))
                    })?;
                    if pi == i {
                        return Err(Error::MalformedTopology(format!(
                            "feeder `{}` is its own parent",
                            f.id
                        )));
                    }
                    parent.push(Some(pi));
                }
            }
        }
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(Error::MalformedTopology("no root feeder (cycle?)".into())),
            many => {
                let names: Vec<_> = many.iter().map(|&i| feeders[i].id.as_str()).collect();
                return Err(Error::MalformedTopology(format!(
                    "multiple root feeders: {}",
                    names.join(", ")
                )));
            }
        };
        let mut children = vec![Vec::new(); feeders.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }

        // Breadth-first from the root; anything unreached sits on a cycle.
        let mut order = Vec::with_capacity(feeders.len());
        let mut depth = vec![0usize; feeders.len()];
        let mut queue = VecDeque::from([root]);
        depth[root] = 1;
        while let Some(l) = queue.pop_front() {
            order.push(l);
            for &c in &children[l] {
                depth[c] = depth[l] + 1;
                queue.push_back(c);
            }
        }
        if order.len() != feeders.len() {
            let stray: Vec<_> = (0..feeders.len())
                .filter(|i| depth[*i] == 0)
                .map(|i| feeders[i].id.as_str())
                .collect();
            return Err(Error::MalformedTopology(format!(
                "feeders not reachable from the root: {}",
                stray.join(", ")
            )));
        }

        for name in leaf_base.keys() {
            match index.get(name.as_str()) {
                None => {
                    return Err(Error::MalformedTopology(format!(
                        "base load given for unknown feeder `{name}`"
                    )))
                }
                Some(&i) if !children[i].is_empty() => {
                    return Err(Error::MalformedTopology(format!(
                        "base load given for interior feeder `{name}`; interior loads are aggregated"
                    )))
                }
                _ => {}
            }
        }
        let mut base = vec![0.0; feeders.len() * horizon];
        for &l in order.iter().rev() {
            if children[l].is_empty() {
                let series = leaf_base.get(&feeders[l].id).ok_or_else(|| {
                    Error::MalformedTopology(format!("leaf feeder `{}` has no base load", feeders[l].id))
                })?;
                if series.len() != horizon {
                    return Err(Error::MalformedTopology(format!(
                        "base load of `{}` has {} slots, expected {horizon}",
                        feeders[l].id,
                        series.len()
                    )));
                }
                if series.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::MalformedTopology(format!(
                        "base load of `{}` must be finite and nonnegative",
                        feeders[l].id
                    )));
                }
                base[l * horizon..(l + 1) * horizon].copy_from_slice(series);
            } else {
                for &c in &children[l] {
                    for t in 0..horizon {
                        base[l * horizon + t] += base[c * horizon + t];
                    }
                }
            }
        }

        let mut headroom = vec![0.0; feeders.len() * horizon];
        for (l, f) in feeders.iter().enumerate() {
            let row = &base[l * horizon..(l + 1) * horizon];
            let peak = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !f.capacity.is_finite() || f.capacity <= peak {
                return Err(Error::CapacityInfeasible {
                    feeder: f.id.clone(),
                    capacity: f.capacity,
                    peak,
                });
            }
            for t in 0..horizon {
                headroom[l * horizon + t] = f.capacity - row[t];
            }
        }
        let total_base = base[root * horizon..(root + 1) * horizon].to_vec();

        let mut attach_idx = Vec::with_capacity(attachments.len());
        let mut paths = Vec::with_capacity(attachments.len());
        let mut members = vec![Vec::new(); feeders.len()];
        for (k, leaf) in attachments.iter().enumerate() {
            let &l = index.get(leaf.as_str()).ok_or_else(|| {
                Error::MalformedTopology(format!("pev #{k} attached to unknown feeder `{leaf}`"))
            })?;
            if !children[l].is_empty() {
                return Err(Error::MalformedTopology(format!(
                    "pev #{k} attached to interior feeder `{leaf}`; PEVs attach to leaves only"
                )));
            }
            let mut path = vec![l];
            let mut cur = l;
            while let Some(p) = parent[cur] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            for &f in &path {
                members[f].push(k);
            }
            attach_idx.push(l);
            paths.push(path);
        }
        let depth_max = depth.iter().copied().max().unwrap_or(0);

        Ok(Self {
            ids: feeders.iter().map(|f| f.id.clone()).collect(),
            parent,
            children,
            root,
            capacity: feeders.iter().map(|f| f.capacity).collect(),
            horizon,
            base,
            headroom,
            total_base,
            attachments: attach_idx,
            paths,
            members,
            depth_max,
        })
    }

    pub fn num_feeders(&self) -> usize {
        self.ids.len()
    }

    pub fn num_pevs(&self) -> usize {
        self.paths.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn feeder_id(&self, l: usize) -> &str {
        &self.ids[l]
    }

    pub fn feeder_index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn parent(&self, l: usize) -> Option<usize> {
        self.parent[l]
    }

    pub fn children(&self, l: usize) -> &[usize] {
        &self.children[l]
    }

    pub fn is_leaf(&self, l: usize) -> bool {
        self.children[l].is_empty()
    }

    pub fn capacity(&self, l: usize) -> f64 {
        self.capacity[l]
    }

    pub fn base_load(&self, l: usize) -> &[f64] {
        &self.base[l * self.horizon..(l + 1) * self.horizon]
    }

    /// P_l^max(t) for every slot.
    pub fn headroom(&self, l: usize) -> &[f64] {
        &self.headroom[l * self.horizon..(l + 1) * self.horizon]
    }

    /// The feeder headroom at one slot, `rho_l - d_l(t)`.
    pub fn feeder_headroom(&self, l: usize, t: usize) -> f64 {
        self.headroom[l * self.horizon + t]
    }

    /// D(t), the base load seen at the substation.
    pub fn total_base(&self) -> &[f64] {
        &self.total_base
    }

    /// Leaf feeder of PEV `k`.
    pub fn attachment(&self, k: usize) -> usize {
        self.attachments[k]
    }

    /// Feeders from the substation down to PEV `k`, root first.
    pub fn path(&self, k: usize) -> &[usize] {
        &self.paths[k]
    }

    /// PEVs downstream of feeder `l`, in increasing index order.
    pub fn members(&self, l: usize) -> &[usize] {
        &self.members[l]
    }

    pub fn depth_max(&self) -> usize {
        self.depth_max
    }
}

/// A network together with the fleet charging over it.
#[derive(Debug, Clone)]
pub struct Scenario {
    network: Network,
    pevs: Vec<Pev>,
}

impl Scenario {
    pub fn build(
        feeders: &[FeederSpec],
        leaf_base: &BTreeMap<String, Vec<f64>>,
        pevs: &[PevSpec],
        horizon: usize,
    ) -> Result<Self> {
        let mut seen = HashMap::with_capacity(pevs.len());
        let mut built = Vec::with_capacity(pevs.len());
        for spec in pevs {
            if seen.insert(spec.id.as_str(), ()).is_some() {
                return Err(Error::InvalidPev {
                    pev: spec.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
            built.push(validate_pev(spec, horizon)?);
        }
        let attachments: Vec<String> = pevs.iter().map(|p| p.feeder.clone()).collect();
        let network = Network::build(feeders, leaf_base, &attachments, horizon).map_err(|e| match e {
            Error::MalformedTopology(msg) if msg.starts_with("pev #") => {
                let k: usize = msg[5..].split_whitespace().next().and_then(|s| s.parse().ok()).unwrap_or(0);
                Error::InvalidPev {
                    pev: pevs[k].id.clone(),
                    reason: msg.split_once(' ').map(|x| x.1).unwrap_or_default().to_string(),
                }
            }
            other => other,
        })?;
        for (k, pev) in built.iter_mut().enumerate() {
            pev.leaf = network.attachment(k);
        }
        Ok(Self { network, pevs: built })
    }

    pub fn from_parts(network: Network, pevs: Vec<Pev>) -> Result<Self> {
        if network.num_pevs() != pevs.len() {
            return Err(Error::Config(format!(
                "network has {} attachments but fleet has {} PEVs",
                network.num_pevs(),
                pevs.len()
            )));
        }
        Ok(Self { network, pevs })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn pevs(&self) -> &[Pev] {
        &self.pevs
    }

    pub fn num_pevs(&self) -> usize {
        self.pevs.len()
    }

    pub fn horizon(&self) -> usize {
        self.network.horizon
    }

    /// P^max(t) = sum over the fleet of per-slot rate caps.
    pub fn fleet_cap(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.horizon()];
        for pev in &self.pevs {
            for (o, c) in out.iter_mut().zip(&pev.caps) {
                *o += c;
            }
        }
        out
    }

    /// Same scenario with every PEV's demand replaced.
    pub fn with_demands(&self, demand: impl Fn(usize, &Pev) -> f64) -> Self {
        let mut out = self.clone();
        for (k, pev) in out.pevs.iter_mut().enumerate() {
            pev.demand = demand(k, &self.pevs[k]);
        }
        out
    }
}

fn validate_pev(spec: &PevSpec, horizon: usize) -> Result<Pev> {
    let invalid = |reason: String| Error::InvalidPev {
        pev: spec.id.clone(),
        reason,
    };
    if spec.start < 1 || spec.start >= spec.finish || spec.finish > horizon {
        return Err(Error::InvalidWindow {
            pev: spec.id.clone(),
            start: spec.start,
            finish: spec.finish,
            horizon,
        });
    }
    let window = spec.start - 1..spec.finish;
    let mut caps = vec![0.0; horizon];
    match &spec.rate_cap {
        RateCap::Constant(c) => caps[window.clone()].fill(*c),
        RateCap::PerSlot(v) => {
            if v.len() != horizon {
                return Err(invalid(format!(
                    "rate cap has {} slots, expected {horizon}",
                    v.len()
                )));
            }
            caps[window.clone()].copy_from_slice(&v[window.clone()]);
        }
    }
    if caps.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(invalid("rate caps must be finite and nonnegative".into()));
    }
    if !spec.demand.is_finite() || spec.demand < 0.0 {
        return Err(invalid(format!("demand {} must be finite and nonnegative", spec.demand)));
    }
    let deliverable: f64 = caps.iter().sum();
    if spec.demand > deliverable + FEASIBILITY_TOLERANCE {
        return Err(invalid(format!(
            "demand {} kWh exceeds deliverable energy {deliverable} kWh inside the window",
            spec.demand
        )));
    }
    if let Some(b) = &spec.battery {
        if !(b.efficiency > 0.0 && b.efficiency <= 1.0) || !(0.0..=1.0).contains(&b.initial_soc) {
            return Err(invalid("battery efficiency must be in (0, 1] and soc in [0, 1]".into()));
        }
        let expected = b.required_energy();
        if (expected - spec.demand).abs() > 1e-6 * expected.max(1.0) {
            return Err(invalid(format!(
                "demand {} kWh inconsistent with battery ({expected} kWh)",
                spec.demand
            )));
        }
    }
    Ok(Pev {
        id: spec.id.clone(),
        leaf: usize::MAX,
        window,
        caps,
        demand: spec.demand,
    })
}

/// Charging powers p_k(t) for every PEV, one `horizon`-long row per PEV.
#[derive(Debug, Clone, PartialEq)]
pub struct Profiles {
    horizon: usize,
    data: Vec<f64>,
}

impl Profiles {
    pub fn zeros(num_pevs: usize, horizon: usize) -> Self {
        Self {
            horizon,
            data: vec![0.0; num_pevs * horizon],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let horizon = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == horizon), "ragged profile rows");
        Self {
            horizon,
            data: rows.concat(),
        }
    }

    pub fn num_pevs(&self) -> usize {
        self.data.len().checked_div(self.horizon).unwrap_or(0)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.horizon..(k + 1) * self.horizon]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.horizon..(k + 1) * self.horizon]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.horizon.max(1))
    }

    pub fn get(&self, k: usize, t: usize) -> f64 {
        self.data[k * self.horizon + t]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Infinity-norm distance.
    pub fn max_abs_diff(&self, other: &Profiles) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn squared_distance(&self, other: &Profiles) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// P(t) = sum_k p_k(t), accumulated in increasing PEV order.
pub fn aggregate_load(profiles: &Profiles) -> Vec<f64> {
    let mut out = vec![0.0; profiles.horizon()];
    for row in profiles.rows() {
        for (o, p) in out.iter_mut().zip(row) {
            *o += p;
        }
    }
    out
}

/// P_l(t) for every feeder, row-major L x T, accumulated over members in
/// increasing PEV order.
pub fn feeder_loads(profiles: &Profiles, network: &Network) -> Vec<f64> {
    let horizon = network.horizon();
    let mut out = vec![0.0; network.num_feeders() * horizon];
    for l in 0..network.num_feeders() {
        let acc = &mut out[l * horizon..(l + 1) * horizon];
        for &k in network.members(l) {
            for (o, p) in acc.iter_mut().zip(profiles.row(k)) {
                *o += p;
            }
        }
    }
    out
}

/// PEV load carried by feeder `l` at slot `t`.
pub fn feeder_pev_load(profiles: &Profiles, network: &Network, l: usize, t: usize) -> f64 {
    network.members(l).iter().map(|&k| profiles.get(k, t)).sum()
}

/// Sum over slots of (D(t) + P(t))^2.
pub fn variance_objective(profiles: &Profiles, network: &Network) -> f64 {
    objective_from_load(network.total_base(), &aggregate_load(profiles))
}

pub(crate) fn objective_from_load(base: &[f64], pev: &[f64]) -> f64 {
    compensated_sum(base.iter().zip(pev).map(|(d, p)| (d + p) * (d + p)))
}

/// g_{l,t}(p) = P_l(t) - P_l^max(t); positive means overload.
pub fn constraint_value(profiles: &Profiles, network: &Network, l: usize, t: usize) -> f64 {
    feeder_pev_load(profiles, network, l, t) - network.feeder_headroom(l, t)
}

/// max over feeders of (P_l(t) - P_l^max(t)) / P_l^max(t).
pub fn normalized_max_overload(profiles: &Profiles, network: &Network, t: usize) -> f64 {
    (0..network.num_feeders())
        .map(|l| constraint_value(profiles, network, l, t) / network.feeder_headroom(l, t))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Normalized max overload for every slot, from precomputed feeder loads.
pub fn overload_series(network: &Network, loads: &[f64]) -> Vec<f64> {
    let horizon = network.horizon();
    (0..horizon)
        .map(|t| {
            (0..network.num_feeders())
                .map(|l| {
                    let h = network.feeder_headroom(l, t);
                    (loads[l * horizon + t] - h) / h
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Largest g_{l,t} over all feeders and slots, from precomputed feeder loads.
pub fn max_violation(network: &Network, loads: &[f64]) -> f64 {
    let horizon = network.horizon();
    loads
        .iter()
        .enumerate()
        .map(|(i, x)| x - network.feeder_headroom(i / horizon, i % horizon))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Euclidean norm of the positive part of g.
pub fn violation_norm(network: &Network, loads: &[f64]) -> f64 {
    let horizon = network.horizon();
    loads
        .iter()
        .enumerate()
        .map(|(i, x)| (x - network.feeder_headroom(i / horizon, i % horizon)).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Population variance of a load series.
pub fn load_variance(load: &[f64]) -> f64 {
    if load.is_empty() {
        return 0.0;
    }
    let n = load.len() as f64;
    let mean = load.iter().sum::<f64>() / n;
    load.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// D(t) + P(t).
pub fn total_load(profiles: &Profiles, network: &Network) -> Vec<f64> {
    network
        .total_base()
        .iter()
        .zip(aggregate_load(profiles))
        .map(|(d, p)| d + p)
        .collect()
}

/// Largest |sum_t p_k(t) - U_k| and largest box excursion over the fleet.
pub fn feasibility_residuals(profiles: &Profiles, scenario: &Scenario) -> (f64, f64) {
    let mut energy = 0.0f64;
    let mut boxes = 0.0f64;
    for (k, pev) in scenario.pevs().iter().enumerate() {
        let row = profiles.row(k);
        energy = energy.max((row.iter().sum::<f64>() - pev.demand).abs());
        for (p, c) in row.iter().zip(&pev.caps) {
            boxes = boxes.max(-p).max(p - c);
        }
    }
    (energy, boxes)
}

/// p_k(t) = U_k * cap_k(t) / sum_s cap_k(s). Always inside the feasible set.
pub fn proportional_fill(scenario: &Scenario) -> Profiles {
    let mut out = Profiles::zeros(scenario.num_pevs(), scenario.horizon());
    for (k, pev) in scenario.pevs().iter().enumerate() {
        let total = pev.deliverable_energy();
        if total > 0.0 {
            for (o, c) in out.row_mut(k).iter_mut().zip(&pev.caps) {
                *o = pev.demand * c / total;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederEnergyCheck {
    pub feeder: String,
    /// sum_t P_l^max(t)
    pub headroom_energy: f64,
    /// sum over members of U_k
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feeders: Vec<FeederEnergyCheck>,
    /// min over (l, t) of -g_{l,t} at the proportional fill.
    pub slater_slack: f64,
    /// Feeder and slot where the slack estimate is attained.
    pub tightest: (String, usize),
    pub warnings: Vec<String>,
}

impl FeasibilityReport {
    pub fn slater_verified(&self) -> bool {
        self.slater_slack > 0.0
    }
}

/// Screens necessary feasibility conditions and estimates a Slater slack.
///
/// Per-PEV energy versus caps is enforced when the scenario is built; here
/// each feeder must be able to carry the combined demand of its members over
/// the horizon. The slack estimate comes from the proportional fill.
pub fn validate_feasibility(scenario: &Scenario) -> Result<FeasibilityReport> {
    let net = scenario.network();
    let mut feeders = Vec::with_capacity(net.num_feeders());
    for l in 0..net.num_feeders() {
        let headroom_energy: f64 = net.headroom(l).iter().sum();
        let demand: f64 = net.members(l).iter().map(|&k| scenario.pevs()[k].demand).sum();
        if demand > headroom_energy + FEASIBILITY_TOLERANCE {
            return Err(Error::InfeasibleScenario(format!(
                "feeder `{}` can carry {headroom_energy} kWh over the horizon but its PEVs request {demand} kWh",
                net.feeder_id(l)
            )));
        }
        feeders.push(FeederEnergyCheck {
            feeder: net.feeder_id(l).to_string(),
            headroom_energy,
            demand,
        });
    }
    let fill = proportional_fill(scenario);
    let loads = feeder_loads(&fill, net);
    let horizon = net.horizon();
    let mut slack = f64::INFINITY;
    let mut tightest = (net.feeder_id(net.root()).to_string(), 0);
    for (i, x) in loads.iter().enumerate() {
        let (l, t) = (i / horizon, i % horizon);
        let s = net.feeder_headroom(l, t) - x;
        if s < slack {
            slack = s;
            tightest = (net.feeder_id(l).to_string(), t);
        }
    }
    let mut warnings = Vec::new();
    if slack <= 0.0 {
        warnings.push(format!(
            "Slater unverified: proportional fill leaves slack {slack} kW at feeder `{}` slot {}",
            tightest.0,
            tightest.1 + 1
        ));
    }
    Ok(FeasibilityReport {
        feeders,
        slater_slack: slack,
        tightest,
        warnings,
    })
}
