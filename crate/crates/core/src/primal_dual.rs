//! Primal-dual subgradient optimizer. Feeder multipliers live in a box
//! `[0, mu_max]`; the primal step is the same per-PEV projection as the
//! penalty method with multipliers in place of penalty slopes, and the answer
//! is the running mean of the primal iterates.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::kernel::{self, FeasibilityAudit};
use crate::network::{self, Network, Profiles, Scenario};
use crate::par::Execution;
use crate::penalty::summary_metrics;
use crate::projection::ProjectionMethod;
use crate::trace::{RunSummary, RunTrace};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
/// Upper bound on the number of trace rows.
pub const TRACE_ROWS: usize = 10_000;
/// Slack used for the multiplier cap when no positive slack can be verified.
pub const FALLBACK_SLACK: f64 = 1e-3;

/// Multipliers, one per feeder and slot, row-major L x T.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub mu: Vec<f64>,
    pub mu_max: f64,
    horizon: usize,
}

impl DualState {
    pub fn new(num_feeders: usize, horizon: usize, mu_max: f64, initial: f64) -> Self {
        Self {
            mu: vec![initial.clamp(0.0, mu_max); num_feeders * horizon],
            mu_max,
            horizon,
        }
    }

    pub fn get(&self, l: usize, t: usize) -> f64 {
        self.mu[l * self.horizon + t]
    }

    pub fn set(&mut self, l: usize, t: usize, value: f64) {
        self.mu[l * self.horizon + t] = value;
    }

    pub fn max(&self) -> f64 {
        self.mu.iter().copied().fold(0.0, f64::max)
    }
}

/// sum_t (2 D(t) + P^max(t)) P^max(t) / (eps L T) + 1 / (L T).
pub fn compute_mu_max(scenario: &Scenario, slack: f64) -> Result<f64> {
    if !slack.is_finite() || slack <= 0.0 {
        return Err(Error::Config(format!("slack must be positive, got {slack}")));
    }
    let net = scenario.network();
    let lt = (net.num_feeders() * net.horizon()) as f64;
    let numerator: f64 = net
        .total_base()
        .iter()
        .zip(scenario.fleet_cap())
        .map(|(d, p)| (2.0 * d + p) * p)
        .sum();
    Ok(numerator / (slack * lt) + 1.0 / lt)
}

/// Per-slot partial subgradient of the Lagrangian with respect to PEV `k`.
pub fn primal_subgradient(profiles: &Profiles, dual: &DualState, network: &Network, k: usize) -> Vec<f64> {
    let horizon = network.horizon();
    let mut total = vec![0.0; horizon];
    let mut loads = vec![0.0; network.num_feeders() * horizon];
    kernel::refresh_loads(network, profiles, &mut total, &mut loads);
    let mut seed = vec![0.0; horizon];
    kernel::seed_feedback(network.total_base(), &total, &mut seed);
    let mut q = vec![0.0; horizon];
    kernel::assemble_gradient(network, k, &seed, &dual.mu, &mut q);
    q
}

/// f(p) + sum_{l,t} mu_{l,t} g_{l,t}(p).
pub fn lagrangian(profiles: &Profiles, dual: &DualState, network: &Network) -> f64 {
    let loads = network::feeder_loads(profiles, network);
    let horizon = network.horizon();
    network::variance_objective(profiles, network)
        + network::compensated_sum(
            loads
                .iter()
                .enumerate()
                .map(|(i, x)| dual.mu[i] * (x - network.feeder_headroom(i / horizon, i % horizon))),
        )
}

pub(crate) fn dual_update_from_loads(mu: &mut [f64], mu_max: f64, network: &Network, loads: &[f64], alpha: f64) {
    let horizon = network.horizon();
    for (i, (m, x)) in mu.iter_mut().zip(loads).enumerate() {
        let g = x - network.feeder_headroom(i / horizon, i % horizon);
        *m = (*m + alpha * g).min(mu_max).max(0.0);
    }
}

/// mu' = [min(mu + alpha g(p), mu_max)]^+ elementwise.
pub fn dual_update(dual: &DualState, profiles: &Profiles, network: &Network, alpha: f64) -> DualState {
    let loads = network::feeder_loads(profiles, network);
    let mut next = dual.clone();
    dual_update_from_loads(&mut next.mu, dual.mu_max, network, &loads, alpha);
    next
}

/// Running arithmetic mean of profiles. Each PEV's mean is kept inside its
/// box; the true mean always is, so this only trims rounding.
#[derive(Debug, Clone)]
pub struct RunningMean {
    count: usize,
    mean: Profiles,
}

impl RunningMean {
    pub fn new(num_pevs: usize, horizon: usize) -> Self {
        Self {
            count: 0,
            mean: Profiles::zeros(num_pevs, horizon),
        }
    }

    pub fn push(&mut self, p: &Profiles, scenario: &Scenario) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        let horizon = p.horizon();
        for (k, pev) in scenario.pevs().iter().enumerate() {
            let row = &mut self.mean.as_mut_slice()[k * horizon..(k + 1) * horizon];
            for ((m, x), c) in row.iter_mut().zip(p.row(k)).zip(&pev.caps) {
                *m = (*m + (x - *m) * w).max(0.0).min(*c);
            }
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &Profiles {
        &self.mean
    }
}

/// Mean of a sequence of profiles; `history` must be nonempty.
pub fn averaged_iterate(history: &[Profiles], scenario: &Scenario) -> Profiles {
    let first = &history[0];
    let mut mean = RunningMean::new(first.num_pevs(), first.horizon());
    for p in history {
        mean.push(p, scenario);
    }
    mean.mean
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientBounds {
    pub l1: f64,
    pub l2: f64,
    pub n: f64,
}

/// L1 = K(2 sum_t (D + P^max) + L T mu_max),
/// L2 = sum_{l,t} max(sum_{k in members} p_k^max(t) - P_l^max(t), P_l^max(t)),
/// N = max(L1, L2).
pub fn subgradient_bounds(scenario: &Scenario, mu_max: f64) -> SubgradientBounds {
    let net = scenario.network();
    let horizon = net.horizon();
    let k = scenario.num_pevs() as f64;
    let lt = (net.num_feeders() * horizon) as f64;
    let sum_dp: f64 = net.total_base().iter().zip(scenario.fleet_cap()).map(|(d, p)| d + p).sum();
    let l1 = k * (2.0 * sum_dp + lt * mu_max);
    let mut l2 = 0.0;
    for l in 0..net.num_feeders() {
        for t in 0..horizon {
            let cap: f64 = net.members(l).iter().map(|&i| scenario.pevs()[i].caps[t]).sum();
            let h = net.feeder_headroom(l, t);
            l2 += (cap - h).max(h);
        }
    }
    SubgradientBounds {
        l1,
        l2,
        n: l1.max(l2),
    }
}

/// Asymptotic guarantees for the averaged iterate at a constant step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremBounds {
    /// alpha N^2 / 2, bound on ||[g(p_hat)]^+||.
    pub violation: f64,
    /// alpha N^2, f(p_hat) <= f* + this.
    pub cost_above: f64,
    /// alpha L T mu_max N^2, f(p_hat) >= f* - this.
    pub cost_below: f64,
    /// False when the slack behind mu_max could not be verified.
    pub guaranteed: bool,
}

impl TheoremBounds {
    pub fn new(scenario: &Scenario, alpha: f64, mu_max: f64, n: f64, guaranteed: bool) -> Self {
        let lt = (scenario.network().num_feeders() * scenario.horizon()) as f64;
        Self {
            violation: alpha * n * n / 2.0,
            cost_above: alpha * n * n,
            cost_below: alpha * lt * mu_max * n * n,
            guaranteed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialProfile {
    Zero,
    /// The proportional fill, which lies in the feasible set so every
    /// averaged iterate does too.
    ProportionalFill,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualConfig {
    pub alpha: f64,
    pub max_iterations: usize,
    /// Slater slack behind mu_max; estimated from the proportional fill when
    /// absent.
    pub slack: Option<f64>,
    pub initial_mu: f64,
    pub initial_profile: InitialProfile,
    pub projection: ProjectionMethod,
    pub execution: Execution,
    /// Defaults to ceil(M / 10^4).
    pub record_every: Option<usize>,
    /// Measure subgradient norms on every iteration instead of on recorded
    /// rows only.
    pub instrument: bool,
}

impl Default for PrimalDualConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_STEP,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            slack: None,
            initial_mu: 0.0,
            initial_profile: InitialProfile::ProportionalFill,
            projection: ProjectionMethod::Exact,
            execution: Execution::default(),
            record_every: None,
            instrument: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrimalDualRun {
    /// The averaged iterate p_hat^M.
    pub profiles: Profiles,
    pub last_iterate: Profiles,
    pub dual: DualState,
    pub trace: RunTrace,
    pub slack: f64,
    pub mu_max: f64,
    pub bounds: SubgradientBounds,
    pub theorem: TheoremBounds,
    /// Largest measured Euclidean norms of the primal and dual subgradients.
    pub max_primal_norm: f64,
    pub max_dual_norm: f64,
}

pub const PRIMAL_DUAL_COLUMNS: [&str; 8] = [
    "iteration",
    "objective",
    "averaged_objective",
    "averaged_violation_norm",
    "averaged_max_normalized_overload",
    "max_mu",
    "primal_subgradient_norm",
    "dual_subgradient_norm",
];

/// Resolves the slack and multiplier cap the way `run_primal_dual` does.
pub fn resolve_slack(scenario: &Scenario, slack: Option<f64>) -> Result<(f64, bool, Vec<String>)> {
    let mut warnings = Vec::new();
    let report = network::validate_feasibility(scenario)?;
    let verified = report.slater_verified();
    let slack = match slack {
        Some(s) => s,
        None if verified => report.slater_slack,
        None => {
            warnings.extend(report.warnings.iter().cloned());
            warnings.push(format!(
                "using fallback slack {FALLBACK_SLACK} kW; primal-dual bounds are not guaranteed"
            ));
            FALLBACK_SLACK
        }
    };
    Ok((slack, verified, warnings))
}

fn subgradient_norms(
    scenario: &Scenario,
    seed: &[f64],
    mu: &[f64],
    loads: &[f64],
    scratch: &mut [f64],
) -> (f64, f64) {
    let net = scenario.network();
    let mut primal = 0.0;
    for k in 0..scenario.num_pevs() {
        kernel::assemble_gradient(net, k, seed, mu, scratch);
        primal += scratch.iter().map(|x| x * x).sum::<f64>();
    }
    let horizon = net.horizon();
    let dual: f64 = loads
        .iter()
        .enumerate()
        .map(|(i, x)| (x - net.feeder_headroom(i / horizon, i % horizon)).powi(2))
        .sum();
    (primal.sqrt(), dual.sqrt())
}

pub fn run_primal_dual(scenario: &Scenario, config: &PrimalDualConfig) -> Result<PrimalDualRun> {
    let started = Instant::now();
    let net = scenario.network();
    let alpha = config.alpha;
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::Config(format!("step size must be positive, got {alpha}")));
    }
    if config.max_iterations == 0 {
        return Err(Error::Config("at least one iteration is required".into()));
    }
    let (slack, verified, warnings) = resolve_slack(scenario, config.slack)?;
    let mu_max = compute_mu_max(scenario, slack)?;
    let bounds = subgradient_bounds(scenario, mu_max);
    let theorem = TheoremBounds::new(scenario, alpha, mu_max, bounds.n, verified || config.slack.is_some());
    let record_every = config
        .record_every
        .unwrap_or_else(|| config.max_iterations.div_ceil(TRACE_ROWS))
        .max(1);

    let mut trace = RunTrace::new("primal-dual", &PRIMAL_DUAL_COLUMNS);
    trace.set_meta("alpha", alpha);
    trace.set_meta("max_iterations", config.max_iterations);
    trace.set_meta("slack", slack);
    trace.set_meta("slack_verified", verified);
    trace.set_meta("mu_max", mu_max);
    trace.set_meta("initial_mu", config.initial_mu);
    trace.set_meta("initial_profile", format!("{:?}", config.initial_profile));
    trace.set_meta("L1", bounds.l1);
    trace.set_meta("L2", bounds.l2);
    trace.set_meta("N", bounds.n);
    trace.set_meta("violation_bound", theorem.violation);
    trace.set_meta("cost_bound_above", theorem.cost_above);
    trace.set_meta("cost_bound_below", theorem.cost_below);
    trace.set_meta("bounds_guaranteed", theorem.guaranteed);
    trace.set_meta("record_every", record_every);
    trace.set_meta("projection", format!("{:?}", config.projection));

    let horizon = net.horizon();
    let n_feeders = net.num_feeders();
    let mut current = match config.initial_profile {
        InitialProfile::Zero => Profiles::zeros(scenario.num_pevs(), horizon),
        InitialProfile::ProportionalFill => network::proportional_fill(scenario),
    };
    let mut next = current.clone();
    let mut dual = DualState::new(n_feeders, horizon, mu_max, config.initial_mu);
    let mut mean = RunningMean::new(scenario.num_pevs(), horizon);
    let mut total = vec![0.0; horizon];
    let mut loads = vec![0.0; n_feeders * horizon];
    let mut seed = vec![0.0; horizon];
    let mut scratch = vec![0.0; horizon];
    kernel::refresh_loads(net, &current, &mut total, &mut loads);

    let mut audit = FeasibilityAudit::default();
    audit.observe(scenario, &current);
    let mut max_primal: f64 = 0.0;
    let mut max_dual: f64 = 0.0;

    for m in 0..config.max_iterations {
        mean.push(&current, scenario);
        kernel::seed_feedback(net.total_base(), &total, &mut seed);
        let record = m % record_every == 0;
        if config.instrument || record {
            let (a, b) = subgradient_norms(scenario, &seed, &dual.mu, &loads, &mut scratch);
            max_primal = max_primal.max(a);
            max_dual = max_dual.max(b);
            if record {
                record_row(&mut trace, m, scenario, &total, mean.mean(), &dual, a, b);
            }
        }
        kernel::projected_step(
            config.execution,
            scenario,
            &current,
            &seed,
            &dual.mu,
            alpha,
            config.projection,
            &mut next,
        )?;
        dual_update_from_loads(&mut dual.mu, mu_max, net, &loads, alpha);
        audit.observe(scenario, &next);
        std::mem::swap(&mut current, &mut next);
        kernel::refresh_loads(net, &current, &mut total, &mut loads);
    }
    kernel::seed_feedback(net.total_base(), &total, &mut seed);
    let (a, b) = subgradient_norms(scenario, &seed, &dual.mu, &loads, &mut scratch);
    max_primal = max_primal.max(a);
    max_dual = max_dual.max(b);
    let m = config.max_iterations;
    record_row(&mut trace, m, scenario, &total, mean.mean(), &dual, a, b);

    let averaged = mean.mean().clone();
    audit.observe(scenario, &averaged);
    let mut avg_total = vec![0.0; horizon];
    let mut avg_loads = vec![0.0; n_feeders * horizon];
    kernel::refresh_loads(net, &averaged, &mut avg_total, &mut avg_loads);
    let (objective, max_overload, max_violation) = summary_metrics(net, &avg_total, &avg_loads);
    let mut warnings = warnings;
    if max_primal > bounds.n || max_dual > bounds.n {
        warnings.push(format!(
            "measured subgradient norms ({max_primal:e}, {max_dual:e}) exceed N = {:e}",
            bounds.n
        ));
    }
    trace.summary = RunSummary {
        iterations: m,
        converged: false,
        objective,
        final_value: objective,
        max_normalized_overload: max_overload,
        max_violation,
        max_energy_residual: audit.max_energy_residual,
        max_box_violation: audit.max_box_violation,
        wall_time: started.elapsed(),
        messages: None,
        warnings,
    };
    Ok(PrimalDualRun {
        profiles: averaged,
        last_iterate: current,
        dual,
        trace,
        slack,
        mu_max,
        bounds,
        theorem,
        max_primal_norm: max_primal,
        max_dual_norm: max_dual,
    })
}

#[allow(clippy::too_many_arguments)]
fn record_row(
    trace: &mut RunTrace,
    m: usize,
    scenario: &Scenario,
    total: &[f64],
    mean: &Profiles,
    dual: &DualState,
    primal_norm: f64,
    dual_norm: f64,
) {
    let net = scenario.network();
    let objective = network::objective_from_load(net.total_base(), total);
    let avg_loads = network::feeder_loads(mean, net);
    let avg_total = network::aggregate_load(mean);
    let avg_objective = network::objective_from_load(net.total_base(), &avg_total);
    let violation = network::violation_norm(net, &avg_loads);
    let overload = network::overload_series(net, &avg_loads)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    trace.push(vec![
        m as f64,
        objective,
        avg_objective,
        violation,
        overload,
        dual.max(),
        primal_norm,
        dual_norm,
    ]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::*;
    use crate::network::{feasibility_residuals, variance_objective};
    use crate::penalty::{run_penalty, OverloadCost, PenaltyConfig};
    use proptest::prelude::*;


    #[test]
    fn mu_max_examples() {
        // D = (1), P^max = (2), L = T = 1: (2 + 2) * 2 / eps + 1
        let numerator = (2.0 * 1.0 + 2.0) * 2.0;
        let f = |eps: f64| numerator / eps + 1.0;
        assert_eq!(f(1.0), 9.0);
        assert_eq!(f(2.0), 5.0);
        let s = star();
        let no_pevs = Scenario::build(
            &[feeder("l", None, 3.0)],
            &base(&[("l", &[1.0, 1.0])]),
            &[],
            2,
        )
        .unwrap();
        assert_eq!(compute_mu_max(&no_pevs, 1.0).unwrap(), 0.5);
        assert!(compute_mu_max(&s, 0.0).is_err());
    }

    #[test]
    fn mu_max_matches_formula_on_scenario() {
        let s = star();
        // D = (3, 6), P^max = (6, 6), L = 4, T = 2
        let expected = ((6.0 + 6.0) * 6.0 + (12.0 + 6.0) * 6.0) / (0.5 * 8.0) + 1.0 / 8.0;
        assert!((compute_mu_max(&s, 0.5).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn subgradient_with_zero_and_unit_multipliers() {
        let feeders = [feeder("r", None, 20.0), feeder("a", Some("r"), 10.0)];
        let s = Scenario::build(
            &feeders,
            &base(&[("a", &[1.0, 2.0])]),
            &[pev("k", "a", 2, 1.0, 2.0)],
            2,
        )
        .unwrap();
        let p = Profiles::from_rows(&[vec![0.5, 0.5]]);
        let zero = DualState::new(2, 2, 10.0, 0.0);
        assert_eq!(primal_subgradient(&p, &zero, s.network(), 0), vec![3.0, 5.0]);
        let one = DualState::new(2, 2, 10.0, 1.0);
        assert_eq!(primal_subgradient(&p, &one, s.network(), 0), vec![5.0, 7.0]);
    }

    #[test]
    fn dual_update_examples() {
        let clip = |mu: f64, step: f64, cap: f64| (mu + step).min(cap).max(0.0);
        assert!((clip(0.0, 0.1 * 2.0, 9.0) - 0.2).abs() < 1e-15);
        assert_eq!(clip(8.9, 0.2, 9.0), 9.0);
        assert_eq!(clip(0.1, -0.2, 9.0), 0.0);

        let s = Scenario::build(
            &[feeder("l", None, 7.0)],
            &base(&[("l", &[5.0, 2.0])]),
            &[pev("k", "l", 2, 2.0, 6.0)],
            2,
        )
        .unwrap();
        // headroom (2, 5); load (4, 3) gives g = (2, -2)
        let p = Profiles::from_rows(&[vec![4.0, 3.0]]);
        let mut dual = DualState::new(1, 2, 9.0, 0.0);
        dual.set(0, 1, 0.1);
        let next = dual_update(&dual, &p, s.network(), 0.1);
        assert!((next.get(0, 0) - 0.2).abs() < 1e-15);
        assert_eq!(next.get(0, 1), 0.0);
    }

    #[test]
    fn averaging_examples() {
        let s = star();
        let a = network::proportional_fill(&s);
        assert_eq!(averaged_iterate(std::slice::from_ref(&a), &s), a);
        assert_eq!(averaged_iterate(&[a.clone(), a.clone(), a.clone()], &s), a);
        let b = Profiles::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.25, 0.75]]);
        let mean = averaged_iterate(&[a, b], &s);
        let (e, bx) = feasibility_residuals(&mean, &s);
        assert!(e < 1e-15 && bx <= 0.0);
    }

    #[test]
    fn bounds_example() {
        // K = L = T = 1, D = 1, p^max = 2, headroom 2, mu_max = 9
        let k = 1.0;
        let l1: f64 = k * (2.0 * (1.0 + 2.0) + 9.0);
        let l2: f64 = f64::max(2.0 - 2.0, 2.0);
        assert_eq!((l1, l2, l1.max(l2)), (15.0, 2.0, 15.0));

        let s = Scenario::build(
            &[feeder("l", None, 3.0)],
            &base(&[("l", &[1.0, 1.0])]),
            &[pev("k", "l", 2, 1.0, 2.0)],
            2,
        )
        .unwrap();
        let b = subgradient_bounds(&s, 9.0);
        assert_eq!(b.l1, 2.0 * 6.0 + 2.0 * 9.0);
        assert_eq!(b.l2, 4.0);
        assert_eq!(b.n, b.l1);

        let empty = Scenario::build(&[feeder("l", None, 3.0)], &base(&[("l", &[1.0, 1.0])]), &[], 2).unwrap();
        assert_eq!(subgradient_bounds(&empty, 9.0).l1, 0.0);
    }

    #[test]
    fn uncongested_matches_penalty() {
        let feeders = [feeder("r", None, 1e6), feeder("a", Some("r"), 1e6), feeder("b", Some("r"), 1e6)];
        let b = base(&[("a", &[3.0, 1.0, 2.0, 5.0]), ("b", &[2.0, 2.0, 1.0, 4.0])]);
        let pevs = [pev("x", "a", 4, 4.0, 3.0), pev("y", "b", 4, 3.0, 2.0)];
        let s = Scenario::build(&feeders, &b, &pevs, 4).unwrap();
        let pd = run_primal_dual(
            &s,
            &PrimalDualConfig {
                alpha: 0.05,
                max_iterations: 20_000,
                ..PrimalDualConfig::default()
            },
        )
        .unwrap();
        assert_eq!(pd.dual.max(), 0.0);
        let pen = run_penalty(&s, &OverloadCost::zero(3), &PenaltyConfig::default()).unwrap();
        // f is flat along redistributions between PEVs; compare total loads
        let a = network::aggregate_load(&pd.profiles);
        let b = network::aggregate_load(&pen.profiles);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-3, "{a:?} vs {b:?}");
        }
        let fa = variance_objective(&pd.profiles, s.network());
        let fb = variance_objective(&pen.profiles, s.network());
        assert!((fa - fb).abs() <= 1e-3 * fb);
    }

    #[test]
    fn run_keeps_invariants() {
        let feeders = [feeder("r", None, 40.0), feeder("a", Some("r"), 9.0), feeder("b", Some("r"), 12.0)];
        let b = base(&[("a", &[2.0, 3.0, 6.0, 7.0]), ("b", &[4.0, 3.0, 2.0, 8.0])]);
        let pevs = [pev("x", "a", 4, 6.0, 3.0), pev("y", "a", 4, 4.0, 2.0), pev("z", "b", 4, 5.0, 3.0)];
        let s = Scenario::build(&feeders, &b, &pevs, 4).unwrap();
        let run = run_primal_dual(
            &s,
            &PrimalDualConfig {
                alpha: 0.01,
                max_iterations: 5000,
                instrument: true,
                ..PrimalDualConfig::default()
            },
        )
        .unwrap();
        assert!(run.dual.mu.iter().all(|m| (0.0..=run.mu_max).contains(m)));
        assert!(run.trace.summary.max_energy_residual <= 1e-9);
        assert!(run.trace.summary.max_box_violation <= 0.0);
        assert!(run.max_primal_norm <= run.bounds.n && run.max_dual_norm <= run.bounds.n);
        let rows = run.trace.rows.len();
        assert!(rows > 1 && rows <= TRACE_ROWS + 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn subgradient_matches_finite_differences(
            seed in prop::collection::vec(0.0f64..1.0, 8),
            mus in prop::collection::vec(0.0f64..5.0, 12),
        ) {
            let feeders = [feeder("r", None, 40.0), feeder("a", Some("r"), 9.0), feeder("b", Some("r"), 12.0)];
            let b = base(&[("a", &[2.0, 3.0, 6.0, 7.0]), ("b", &[4.0, 3.0, 2.0, 8.0])]);
            let pevs = [pev("x", "a", 4, 6.0, 3.0), pev("z", "b", 4, 5.0, 3.0)];
            let s = Scenario::build(&feeders, &b, &pevs, 4).unwrap();
            let mut p = Profiles::zeros(2, 4);
            p.as_mut_slice().copy_from_slice(&seed.iter().map(|x| 3.0 * x).collect::<Vec<_>>());
            let mut dual = DualState::new(3, 4, 10.0, 0.0);
            dual.mu.copy_from_slice(&mus);
            let h = 1e-4;
            for k in 0..2 {
                let q = primal_subgradient(&p, &dual, s.network(), k);
                for (t, &qt) in q.iter().enumerate() {
                    let mut plus = p.clone();
                    plus.row_mut(k)[t] += h;
                    let mut minus = p.clone();
                    minus.row_mut(k)[t] -= h;
                    let fd = (lagrangian(&plus, &dual, s.network()) - lagrangian(&minus, &dual, s.network())) / (2.0 * h);
                    prop_assert!((qt - fd).abs() <= 1e-5 * qt.abs().max(1.0));
                }
            }
        }
    }
}
