//! Overload-cost optimizer: projected gradient on the variance objective plus
//! a convex penalty on every feeder's overload.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::kernel::{self, FeasibilityAudit};
use crate::network::{self, Network, Profiles, Scenario};
use crate::par::Execution;
use crate::projection::ProjectionMethod;
use crate::trace::{RunSummary, RunTrace};

pub const DEFAULT_EXPONENT_OFFSET: f64 = 0.01;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
pub const DEFAULT_STEP_TOLERANCE: f64 = 1e-9;
/// Default step as a fraction of the largest step with guaranteed descent.
pub const DEFAULT_STEP_FRACTION: f64 = 0.9;
/// Absolute slack on the per-iteration descent check.
pub const DESCENT_SLACK: f64 = 1e-9;

/// C_l(x) = beta_l * x^(2 + eps) for x >= 0 and 0 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct OverloadCost {
    pub beta: Vec<f64>,
    pub exponent_offset: f64,
}

impl OverloadCost {
    pub fn new(beta: Vec<f64>, exponent_offset: f64) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::Config("penalty coefficients must be finite and nonnegative".into()));
        }
        if !exponent_offset.is_finite() || exponent_offset < 0.0 {
            return Err(Error::Config(format!(
                "exponent offset must be nonnegative, got {exponent_offset}"
            )));
        }
        Ok(Self {
            beta,
            exponent_offset,
        })
    }

    /// The cost used for the uncontrolled baseline.
    pub fn zero(num_feeders: usize) -> Self {
        Self {
            beta: vec![0.0; num_feeders],
            exponent_offset: DEFAULT_EXPONENT_OFFSET,
        }
    }

    /// Picks beta_l so that the penalty slope at a 10% overload of the
    /// feeder's tightest headroom is ten times the largest variance gradient
    /// 2 max_t (D(t) + P^max(t)).
    pub fn default_for(scenario: &Scenario, exponent_offset: f64) -> Self {
        let net = scenario.network();
        let grad_max = net
            .total_base()
            .iter()
            .zip(scenario.fleet_cap())
            .map(|(d, p)| 2.0 * (d + p))
            .fold(0.0, f64::max);
        let beta = (0..net.num_feeders())
            .map(|l| {
                let h = net.headroom(l).iter().copied().fold(f64::INFINITY, f64::min);
                let x = 0.1 * h;
                10.0 * grad_max / ((2.0 + exponent_offset) * x.powf(1.0 + exponent_offset))
            })
            .collect();
        Self {
            beta,
            exponent_offset,
        }
    }

    pub fn value_and_derivative(&self, l: usize, x: f64) -> (f64, f64) {
        cost_and_derivative(self.beta[l], self.exponent_offset, x)
    }

    pub fn second_derivative(&self, l: usize, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let e = self.exponent_offset;
        self.beta[l] * (2.0 + e) * (1.0 + e) * x.powf(e)
    }

    pub fn is_zero(&self) -> bool {
        self.beta.iter().all(|b| *b == 0.0)
    }
}

/// (C(x), C'(x)) for a single feeder.
pub fn cost_and_derivative(beta: f64, exponent_offset: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 || beta == 0.0 {
        return (0.0, 0.0);
    }
    let e = exponent_offset;
    let d = beta * (2.0 + e) * x.powf(1.0 + e);
    (d * x / (2.0 + e), d)
}

/// max_l sup C_l'' over the range the overload argument can take. With a
/// positive exponent offset C'' grows with x, so the sup sits at
/// x_max = sum over members of each PEV's largest rate cap.
pub fn effective_curvature_bound(scenario: &Scenario, cost: &OverloadCost) -> f64 {
    let net = scenario.network();
    let e = cost.exponent_offset;
    (0..net.num_feeders())
        .map(|l| {
            let x_max: f64 = net.members(l).iter().map(|&k| scenario.pevs()[k].peak_cap()).sum();
            if cost.beta[l] == 0.0 {
                0.0
            } else if e == 0.0 {
                2.0 * cost.beta[l]
            } else {
                cost.beta[l] * (2.0 + e) * (1.0 + e) * x_max.max(0.0).powf(e)
            }
        })
        .fold(0.0, f64::max)
}

/// 1 / (2K(1 + d_max B / 2)).
pub fn max_step_size(num_pevs: usize, depth_max: usize, curvature: f64) -> f64 {
    1.0 / (2.0 * num_pevs.max(1) as f64 * (1.0 + depth_max as f64 * curvature / 2.0))
}

fn penalty_total(network: &Network, cost: &OverloadCost, feeder_loads: &[f64]) -> f64 {
    let horizon = network.horizon();
    network::compensated_sum(feeder_loads.iter().enumerate().map(|(i, x)| {
        let l = i / horizon;
        cost.value_and_derivative(l, x - network.feeder_headroom(l, i % horizon)).0
    }))
}

/// f(p) + sum_{l,t} C_l(P_l(t) - P_l^max(t)).
pub fn augmented_objective(profiles: &Profiles, network: &Network, cost: &OverloadCost) -> f64 {
    let loads = network::feeder_loads(profiles, network);
    network::variance_objective(profiles, network) + penalty_total(network, cost, &loads)
}

fn feeder_slopes(network: &Network, cost: &OverloadCost, feeder_loads: &[f64], out: &mut [f64]) {
    let horizon = network.horizon();
    for (i, (o, x)) in out.iter_mut().zip(feeder_loads).enumerate() {
        let l = i / horizon;
        *o = cost.value_and_derivative(l, x - network.feeder_headroom(l, i % horizon)).1;
    }
}

/// Per-slot partial derivatives of the augmented objective with respect to
/// PEV `k`'s profile.
pub fn penalty_gradient(profiles: &Profiles, network: &Network, cost: &OverloadCost, k: usize) -> Vec<f64> {
    let horizon = network.horizon();
    let mut total = vec![0.0; horizon];
    let mut loads = vec![0.0; network.num_feeders() * horizon];
    kernel::refresh_loads(network, profiles, &mut total, &mut loads);
    let mut seed = vec![0.0; horizon];
    kernel::seed_feedback(network.total_base(), &total, &mut seed);
    let mut slopes = vec![0.0; loads.len()];
    feeder_slopes(network, cost, &loads, &mut slopes);
    let mut q = vec![0.0; horizon];
    kernel::assemble_gradient(network, k, &seed, &slopes, &mut q);
    q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// A fraction of the largest step with guaranteed descent.
    Fraction(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub step: StepSize,
    pub max_iterations: usize,
    /// Stop once the infinity-norm step drops below this (kW).
    pub tolerance: f64,
    pub curvature_override: Option<f64>,
    /// Reject steps at or above the descent bound.
    pub safeguard: bool,
    pub projection: ProjectionMethod,
    pub execution: Execution,
    /// Record a trace row every this many iterations (the descent check still
    /// runs on every iteration).
    pub record_every: usize,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            step: StepSize::Fraction(DEFAULT_STEP_FRACTION),
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_STEP_TOLERANCE,
            curvature_override: None,
            safeguard: true,
            projection: ProjectionMethod::Exact,
            execution: Execution::default(),
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PenaltyRun {
    pub profiles: Profiles,
    pub trace: RunTrace,
    pub alpha: f64,
    pub alpha_max: f64,
    pub curvature: f64,
    /// Largest observed L(p') - L(p) - (K(1 + d B/2) - 1/alpha)||p' - p||^2.
    pub descent_gap: f64,
    /// Largest observed L(p^{m+1}) - L(p^m) for m >= 1.
    pub max_increase: f64,
}

pub const PENALTY_COLUMNS: [&str; 7] = [
    "iteration",
    "lagrangian",
    "objective",
    "max_violation",
    "max_normalized_overload",
    "step_norm",
    "lagrangian_change",
];

/// Synchronous projected gradient from p = 0.
///
/// p^0 = 0 is outside the feasible set unless every demand is zero, so the
/// descent check starts with the move from p^1 to p^2.
pub fn run_penalty(scenario: &Scenario, cost: &OverloadCost, config: &PenaltyConfig) -> Result<PenaltyRun> {
    let started = Instant::now();
    let net = scenario.network();
    if cost.beta.len() != net.num_feeders() {
        return Err(Error::Config(format!(
            "{} penalty coefficients for {} feeders",
            cost.beta.len(),
            net.num_feeders()
        )));
    }
    if config.record_every == 0 {
        return Err(Error::Config("record_every must be positive".into()));
    }
    let k_count = scenario.num_pevs();
    let curvature = config
        .curvature_override
        .unwrap_or_else(|| effective_curvature_bound(scenario, cost));
    let alpha_max = max_step_size(k_count, net.depth_max(), curvature);
    let alpha = match config.step {
        StepSize::Fraction(f) => f * alpha_max,
        StepSize::Fixed(a) => a,
    };
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::Config(format!("step size must be positive, got {alpha}")));
    }
    if config.safeguard && alpha >= alpha_max {
        return Err(Error::Config(format!(
            "step size {alpha:e} is not below the descent bound {alpha_max:e}"
        )));
    }
    let lipschitz_half = k_count as f64 * (1.0 + net.depth_max() as f64 * curvature / 2.0);

    let horizon = net.horizon();
    let n_feeders = net.num_feeders();
    let mut trace = RunTrace::new("penalty", &PENALTY_COLUMNS);
    trace.set_meta("alpha", alpha);
    trace.set_meta("alpha_max", alpha_max);
    trace.set_meta("curvature_bound", curvature);
    trace.set_meta("exponent_offset", cost.exponent_offset);
    trace.set_meta("beta_max", cost.beta.iter().copied().fold(0.0, f64::max));
    trace.set_meta("max_iterations", config.max_iterations);
    trace.set_meta("tolerance", config.tolerance);
    trace.set_meta("projection", format!("{:?}", config.projection));
    trace.set_meta("num_pevs", k_count);
    trace.set_meta("depth_max", net.depth_max());
    trace.set_meta(
        "descent_guarantee",
        if alpha < alpha_max { "holds" } else { "void (safeguard off)" },
    );

    let mut current = Profiles::zeros(k_count, horizon);
    let mut next = current.clone();
    let mut total = vec![0.0; horizon];
    let mut loads = vec![0.0; n_feeders * horizon];
    let mut next_total = total.clone();
    let mut next_loads = loads.clone();
    let mut seed = vec![0.0; horizon];
    let mut slopes = vec![0.0; n_feeders * horizon];
    kernel::refresh_loads(net, &current, &mut total, &mut loads);
    let mut lagrangian = lagrangian_from_loads(net, cost, &total, &loads);

    let mut audit = FeasibilityAudit::default();
    let mut descent_gap = f64::NEG_INFINITY;
    let mut max_increase = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_step = 0.0;
    let mut last_change = 0.0;
    record_row(&mut trace, 0, net, cost, &total, &loads, lagrangian, 0.0, 0.0);

    for m in 0..config.max_iterations {
        kernel::seed_feedback(net.total_base(), &total, &mut seed);
        feeder_slopes(net, cost, &loads, &mut slopes);
        kernel::projected_step(
            config.execution,
            scenario,
            &current,
            &seed,
            &slopes,
            alpha,
            config.projection,
            &mut next,
        )?;
        audit.observe(scenario, &next);
        kernel::refresh_loads(net, &next, &mut next_total, &mut next_loads);
        let (step_inf, step_sq) = kernel::step_norms(&current, &next);
        let change = kernel::objective_change(net.total_base(), &total, &next_total)
            + penalty_change(net, cost, &loads, &next_loads);
        let next_lagrangian = lagrangian_from_loads(net, cost, &next_total, &next_loads);
        if m >= 1 {
            max_increase = max_increase.max(change);
            descent_gap = descent_gap.max(change - (lipschitz_half - 1.0 / alpha) * step_sq);
            if alpha < alpha_max && change > DESCENT_SLACK {
                return Err(Error::Internal(format!(
                    "augmented objective rose by {change:e} at iteration {} with alpha {alpha:e} < {alpha_max:e}",
                    m + 1
                )));
            }
        }
        std::mem::swap(&mut current, &mut next);
        std::mem::swap(&mut total, &mut next_total);
        std::mem::swap(&mut loads, &mut next_loads);
        lagrangian = next_lagrangian;
        iterations = m + 1;
        last_step = step_inf;
        last_change = change;
        let done = step_inf < config.tolerance;
        if iterations % config.record_every == 0 || done {
            record_row(&mut trace, iterations, net, cost, &total, &loads, lagrangian, step_inf, change);
        }
        if done {
            converged = true;
            break;
        }
    }
    if iterations % config.record_every != 0 && !converged {
        record_row(&mut trace, iterations, net, cost, &total, &loads, lagrangian, last_step, last_change);
    }

    let (objective, max_overload, max_violation) = summary_metrics(net, &total, &loads);
    trace.summary = RunSummary {
        iterations,
        converged,
        objective,
        final_value: lagrangian,
        max_normalized_overload: max_overload,
        max_violation,
        max_energy_residual: audit.max_energy_residual,
        max_box_violation: audit.max_box_violation,
        wall_time: started.elapsed(),
        messages: None,
        warnings: Vec::new(),
    };
    Ok(PenaltyRun {
        profiles: current,
        trace,
        alpha,
        alpha_max,
        curvature,
        descent_gap,
        max_increase,
    })
}

fn lagrangian_from_loads(net: &Network, cost: &OverloadCost, total: &[f64], loads: &[f64]) -> f64 {
    network::objective_from_load(net.total_base(), total) + penalty_total(net, cost, loads)
}

fn penalty_change(net: &Network, cost: &OverloadCost, before: &[f64], after: &[f64]) -> f64 {
    if cost.is_zero() {
        return 0.0;
    }
    let horizon = net.horizon();
    network::compensated_sum(before.iter().zip(after).enumerate().map(|(i, (x0, x1))| {
        let (l, t) = (i / horizon, i % horizon);
        let h = net.feeder_headroom(l, t);
        cost.value_and_derivative(l, x1 - h).0 - cost.value_and_derivative(l, x0 - h).0
    }))
}

/// (f, max_t normalized overload, max g) from cached loads.
pub(crate) fn summary_metrics(net: &Network, total: &[f64], loads: &[f64]) -> (f64, f64, f64) {
    let objective = network::objective_from_load(net.total_base(), total);
    let overload = network::overload_series(net, loads)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    (objective, overload, network::max_violation(net, loads))
}

#[allow(clippy::too_many_arguments)]
fn record_row(
    trace: &mut RunTrace,
    iteration: usize,
    net: &Network,
    cost: &OverloadCost,
    total: &[f64],
    loads: &[f64],
    lagrangian: f64,
    step: f64,
    change: f64,
) {
    let _ = cost;
    let (objective, overload, violation) = summary_metrics(net, total, loads);
    trace.push(vec![
        iteration as f64,
        lagrangian,
        objective,
        violation,
        overload,
        step,
        change,
    ]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::*;
    use crate::network::{feasibility_residuals, variance_objective};
    use proptest::prelude::*;

    #[test]
    fn cost_examples() {
        assert_eq!(cost_and_derivative(1.0, 0.01, -1.0), (0.0, 0.0));
        assert_eq!(cost_and_derivative(1.0, 0.01, 0.0), (0.0, 0.0));
        let (c, d) = cost_and_derivative(1.0, 0.01, 1.0);
        assert_eq!(c, 1.0);
        assert!((d - 2.01).abs() < 1e-15);
    }

    fn one_feeder_with_cap(cap: f64) -> Scenario {
        Scenario::build(
            &[feeder("l", None, 100.0)],
            &base(&[("l", &[1.0, 2.0])]),
            &[pev("k", "l", 2, 1.0, cap)],
            2,
        )
        .unwrap()
    }

    #[test]
    fn curvature_examples() {
        let s = one_feeder_with_cap(10.0);
        let quad = OverloadCost::new(vec![1.0], 0.0).unwrap();
        assert_eq!(effective_curvature_bound(&s, &quad), 2.0);
        let c = OverloadCost::new(vec![1.0], 0.01).unwrap();
        let expected = 2.01 * 1.01 * 10f64.powf(0.01);
        assert!((effective_curvature_bound(&s, &c) - expected).abs() < 1e-12);
        assert!((expected - 2.077).abs() < 1e-3);

        let star = star();
        let c = OverloadCost::new(vec![0.0, 1.0, 3.0, 2.0], 0.0).unwrap();
        assert_eq!(effective_curvature_bound(&star, &c), 6.0);
    }

    #[test]
    fn step_size_examples() {
        assert_eq!(max_step_size(1, 1, 0.0), 0.5);
        assert!((max_step_size(2, 2, 4.0) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn augmented_equals_variance_without_overload() {
        let s = star();
        let p = crate::network::proportional_fill(&s);
        let cost = OverloadCost::new(vec![5.0; 4], 0.01).unwrap();
        assert_eq!(
            augmented_objective(&p, s.network(), &cost),
            variance_objective(&p, s.network())
        );
        let zero = Profiles::zeros(3, 2);
        assert_eq!(augmented_objective(&zero, s.network(), &cost), 9.0 + 36.0);
    }

    #[test]
    fn gradient_at_zero_is_twice_base() {
        let s = star();
        let cost = OverloadCost::new(vec![5.0; 4], 0.01).unwrap();
        let q = penalty_gradient(&Profiles::zeros(3, 2), s.network(), &cost, 1);
        assert_eq!(q, vec![6.0, 12.0]);
    }

    #[test]
    fn shared_feeder_term_is_identical() {
        let feeders = [feeder("r", None, 20.0), feeder("a", Some("r"), 3.0)];
        let b = base(&[("a", &[1.0, 1.5])]);
        let pevs = [pev("x", "a", 2, 2.0, 2.0), pev("y", "a", 2, 2.0, 2.0)];
        let s = Scenario::build(&feeders, &b, &pevs, 2).unwrap();
        let p = Profiles::from_rows(&[vec![2.0, 0.0], vec![1.5, 0.5]]);
        let cost = OverloadCost::new(vec![1.0, 4.0], 0.01).unwrap();
        assert_eq!(penalty_gradient(&p, s.network(), &cost, 0), penalty_gradient(&p, s.network(), &cost, 1));
    }

    #[test]
    fn zero_demand_stays_put() {
        let s = star().with_demands(|_, _| 0.0);
        let cost = OverloadCost::new(vec![1.0; 4], 0.01).unwrap();
        let run = run_penalty(&s, &cost, &PenaltyConfig::default()).unwrap();
        assert!(run.profiles.as_slice().iter().all(|x| *x == 0.0));
        assert!(run.trace.column("lagrangian").iter().all(|l| *l == 45.0));
    }

    #[test]
    fn single_pev_reaches_valley_fill() {
        let s = Scenario::build(
            &[feeder("l", None, 1000.0)],
            &base(&[("l", &[5.0, 1.0, 2.0, 4.0])]),
            &[pev("k", "l", 4, 4.0, 3.0)],
            4,
        )
        .unwrap();
        let run = run_penalty(&s, &OverloadCost::zero(1), &PenaltyConfig::default()).unwrap();
        assert!(run.trace.summary.converged);
        // fill level 3.5 over base (5, 1, 2, 4)
        let expected = [0.0, 2.5, 1.5, 0.0];
        for (a, b) in run.profiles.row(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-7, "{:?}", run.profiles.row(0));
        }
    }

    #[test]
    fn safeguard_rejects_large_step() {
        let s = star();
        let cost = OverloadCost::zero(4);
        let config = PenaltyConfig {
            step: StepSize::Fixed(1.0),
            ..PenaltyConfig::default()
        };
        assert!(matches!(run_penalty(&s, &cost, &config), Err(Error::Config(_))));
        let unchecked = PenaltyConfig {
            safeguard: false,
            max_iterations: 3,
            ..config
        };
        let run = run_penalty(&s, &cost, &unchecked).unwrap();
        assert!(run.trace.meta("descent_guarantee").unwrap().starts_with("void"));
    }

    fn congested() -> Scenario {
        let feeders = [
            feeder("r", None, 40.0),
            feeder("a", Some("r"), 9.0),
            feeder("b", Some("r"), 12.0),
        ];
        let b = base(&[("a", &[2.0, 3.0, 6.0, 7.0]), ("b", &[4.0, 3.0, 2.0, 8.0])]);
        let pevs = [
            pev("x", "a", 4, 6.0, 3.0),
            pev("y", "a", 4, 4.0, 2.0),
            pev("z", "b", 4, 5.0, 3.0),
        ];
        Scenario::build(&feeders, &b, &pevs, 4).unwrap()
    }

    #[test]
    fn iterates_stay_feasible_and_descend() {
        let s = congested();
        let cost = OverloadCost::default_for(&s, DEFAULT_EXPONENT_OFFSET);
        let config = PenaltyConfig {
            max_iterations: 2000,
            ..PenaltyConfig::default()
        };
        let run = run_penalty(&s, &cost, &config).unwrap();
        assert!(run.trace.summary.max_energy_residual <= 1e-9);
        assert!(run.trace.summary.max_box_violation <= 0.0);
        assert!(run.max_increase <= DESCENT_SLACK);
        assert!(run.descent_gap <= 1e-9, "gap {}", run.descent_gap);
        let (e, b) = feasibility_residuals(&run.profiles, &s);
        assert!(e <= 1e-9 && b <= 0.0);
    }

    #[test]
    fn fixed_point_is_stable() {
        let s = congested();
        let cost = OverloadCost::new(vec![0.5; 3], 0.01).unwrap();
        let run = run_penalty(&s, &cost, &PenaltyConfig::default()).unwrap();
        assert!(run.trace.summary.converged);
        let again = run_penalty(
            &s,
            &cost,
            &PenaltyConfig {
                max_iterations: run.trace.summary.iterations + 20,
                tolerance: 0.0,
                ..PenaltyConfig::default()
            },
        )
        .unwrap();
        assert!(run.profiles.max_abs_diff(&again.profiles) < 1e-8);
    }

    fn state(s: &Scenario, seed: &[f64]) -> Profiles {
        let mut p = Profiles::zeros(s.num_pevs(), s.horizon());
        for (k, pev) in s.pevs().iter().enumerate() {
            for (t, c) in pev.caps.iter().enumerate() {
                p.row_mut(k)[t] = c * seed[(k * s.horizon() + t) % seed.len()];
            }
        }
        p
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradient_matches_finite_differences(seed in prop::collection::vec(0.0f64..1.0, 12)) {
            let s = congested();
            let cost = OverloadCost::new(vec![2.0, 3.0, 1.5], 0.01).unwrap();
            let p = state(&s, &seed);
            let h = 1e-4;
            for k in 0..s.num_pevs() {
                let q = penalty_gradient(&p, s.network(), &cost, k);
                for (t, &qt) in q.iter().enumerate() {
                    let mut plus = p.clone();
                    plus.row_mut(k)[t] += h;
                    let mut minus = p.clone();
                    minus.row_mut(k)[t] -= h;
                    let fd = (augmented_objective(&plus, s.network(), &cost)
                        - augmented_objective(&minus, s.network(), &cost)) / (2.0 * h);
                    prop_assert!((qt - fd).abs() <= 1e-5 * qt.abs().max(1.0), "{} vs {}", qt, fd);
                }
            }
        }

        #[test]
        fn gradient_is_lipschitz(a in prop::collection::vec(0.0f64..1.0, 12), b in prop::collection::vec(0.0f64..1.0, 12)) {
            let s = congested();
            let cost = OverloadCost::new(vec![2.0, 3.0, 1.5], 0.01).unwrap();
            let (p, r) = (state(&s, &a), state(&s, &b));
            let curvature = effective_curvature_bound(&s, &cost);
            let bound = 2.0 * s.num_pevs() as f64 * (1.0 + s.network().depth_max() as f64 * curvature / 2.0);
            let mut diff = 0.0;
            for k in 0..s.num_pevs() {
                let g1 = penalty_gradient(&p, s.network(), &cost, k);
                let g2 = penalty_gradient(&r, s.network(), &cost, k);
                diff += g1.iter().zip(&g2).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            }
            prop_assert!(diff.sqrt() <= bound * p.squared_distance(&r).sqrt() + 1e-9);
        }

        #[test]
        fn penalty_adds_to_variance(seed in prop::collection::vec(0.0f64..1.0, 12)) {
            let s = congested();
            let cost = OverloadCost::new(vec![2.0, 3.0, 1.5], 0.01).unwrap();
            let p = state(&s, &seed);
            let net = s.network();
            let mut penalties = 0.0;
            for l in 0..net.num_feeders() {
                for t in 0..net.horizon() {
                    penalties += cost.value_and_derivative(l, crate::network::constraint_value(&p, net, l, t)).0;
                }
            }
            let direct = variance_objective(&p, net) + penalties;
            prop_assert!((augmented_objective(&p, net, &cost) - direct).abs() <= 1e-9 * direct.max(1.0));
        }
    }
}
