//! Slow reference solvers for cross-checking on small instances.
//!
//! Nothing here calls into the projection module or the optimizer kernels:
//! fills, projections, gradients and objectives are re-derived with plain
//! per-slot loops so that agreement means something.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{Profiles, Scenario};
use crate::penalty::OverloadCost;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Level resolution of the projection sweep (kW).
    pub resolution: f64,
    /// Outer multiplier updates for the constrained solve.
    pub max_outer: usize,
    /// Projected-gradient iterations per inner solve.
    pub max_inner: usize,
    /// Inner solves stop when the infinity-norm step falls below this.
    pub step_tolerance: f64,
    /// Target for max g after the solve, before repair (kW).
    pub feasibility_tolerance: f64,
    /// Grid spacing for the exhaustive search (kW).
    pub grid: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            resolution: 1e-6,
            max_outer: 400,
            max_inner: 200_000,
            step_tolerance: 1e-12,
            feasibility_tolerance: 1e-10,
            grid: 0.05,
        }
    }
}

fn clamp_fill(level: f64, b: &[f64], caps: &[f64]) -> Vec<f64> {
    b.iter()
        .zip(caps)
        .map(|(bt, c)| {
            if *c <= 0.0 {
                0.0
            } else {
                let x = level - bt;
                if x <= 0.0 {
                    0.0
                } else if x >= *c {
                    *c
                } else {
                    x
                }
            }
        })
        .collect()
}

fn fill_total(level: f64, b: &[f64], caps: &[f64]) -> f64 {
    clamp_fill(level, b, caps).iter().sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleProjection {
    pub profile: Vec<f64>,
    pub level: f64,
}

/// Multi-level sweep of the water level. Each pass evaluates the fill on an
/// even grid over the current interval and zooms in around the grid point
/// whose total is closest to `demand`, until the grid spacing is a quarter of
/// `resolution`.
pub fn oracle_project(b: &[f64], caps: &[f64], demand: f64, resolution: f64) -> OracleProjection {
    const POINTS: usize = 512;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (bt, c) in b.iter().zip(caps) {
        if *c > 0.0 {
            lo = lo.min(*bt);
            hi = hi.max(bt + c);
        }
    }
    if lo > hi {
        return OracleProjection {
            profile: vec![0.0; b.len()],
            level: 0.0,
        };
    }
    let mut best = lo;
    loop {
        let spacing = (hi - lo) / (POINTS - 1) as f64;
        let mut best_err = f64::INFINITY;
        let mut best_i = 0;
        for i in 0..POINTS {
            let x = lo + spacing * i as f64;
            let err = (fill_total(x, b, caps) - demand).abs();
            if err < best_err {
                best_err = err;
                best_i = i;
                best = x;
            }
        }
        if spacing <= resolution / 4.0 || spacing == 0.0 {
            break;
        }
        let center = lo + spacing * best_i as f64;
        lo = center - spacing;
        hi = center + spacing;
    }
    OracleProjection {
        profile: clamp_fill(best, b, caps),
        level: best,
    }
}

/// Exact projection by enumerating every breakpoint of the fill total and
/// interpolating on the piece that crosses `demand`. O(T^2).
pub fn oracle_project_exact(b: &[f64], caps: &[f64], demand: f64) -> OracleProjection {
    let capacity: f64 = caps.iter().filter(|c| **c > 0.0).sum();
    let mut knots = Vec::with_capacity(2 * b.len());
    for (bt, c) in b.iter().zip(caps) {
        if *c > 0.0 {
            knots.push(*bt);
            knots.push(bt + c);
        }
    }
    if knots.is_empty() || demand <= 0.0 {
        let level = knots.iter().copied().fold(f64::INFINITY, f64::min);
        return OracleProjection {
            profile: vec![0.0; b.len()],
            level: if level.is_finite() { level } else { 0.0 },
        };
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    if demand >= capacity {
        return OracleProjection {
            profile: caps.iter().map(|c| c.max(0.0)).collect(),
            level: *knots.last().unwrap(),
        };
    }
    let mut prev_x = knots[0];
    let mut prev_y = fill_total(prev_x, b, caps) - demand;
    let mut level = *knots.last().unwrap();
    for &x in &knots[1..] {
        let y = fill_total(x, b, caps) - demand;
        if y >= 0.0 {
            level = if y == prev_y { x } else { prev_x + (x - prev_x) * (-prev_y) / (y - prev_y) };
            break;
        }
        prev_x = x;
        prev_y = y;
    }
    OracleProjection {
        profile: clamp_fill(level, b, caps),
        level,
    }
}

/// Finds a level under which every slot of `p` sits in exactly one of the
/// three optimality cases: `p = 0` with `level <= b`, `p = cap` with
/// `level >= b + cap`, or `0 < p < cap` with `p = level - b`. Slots with a
/// zero cap must hold zero and are otherwise ignored.
pub fn kkt_certificate(b: &[f64], caps: &[f64], p: &[f64], tolerance: f64) -> std::result::Result<f64, String> {
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    let mut interior = Vec::new();
    for t in 0..b.len() {
        if caps[t] <= 0.0 {
            if p[t] != 0.0 {
                return Err(format!("slot {t} has zero cap but p = {}", p[t]));
            }
            continue;
        }
        if p[t] < 0.0 || p[t] > caps[t] {
            return Err(format!("slot {t} outside its box: {} not in [0, {}]", p[t], caps[t]));
        }
        if p[t] == 0.0 {
            upper = upper.min(b[t]);
        } else if p[t] == caps[t] {
            lower = lower.max(b[t] + caps[t]);
        } else {
            interior.push(p[t] + b[t]);
        }
    }
    let level = if interior.is_empty() {
        if lower.is_finite() && upper.is_finite() {
            0.5 * (lower + upper)
        } else if lower.is_finite() {
            lower
        } else if upper.is_finite() {
            upper
        } else {
            0.0
        }
    } else {
        interior.iter().sum::<f64>() / interior.len() as f64
    };
    for (i, v) in interior.iter().enumerate() {
        if (v - level).abs() > tolerance {
            return Err(format!("interior slot #{i} sits at level {v}, others at {level}"));
        }
    }
    if level > upper + tolerance {
        return Err(format!("level {level} above a zero slot's offset {upper}"));
    }
    if level < lower - tolerance {
        return Err(format!("level {level} below a saturated slot's top {lower}"));
    }
    Ok(level)
}

/// Leaf-level base loads summed per slot.
fn base_total(scenario: &Scenario) -> Vec<f64> {
    let net = scenario.network();
    let mut d = vec![0.0; net.horizon()];
    for l in 0..net.num_feeders() {
        if net.is_leaf(l) {
            for (t, x) in net.base_load(l).iter().enumerate() {
                d[t] += x;
            }
        }
    }
    d
}

/// Sum over slots of (D(t) + P(t))^2 by a direct per-slot loop.
pub fn oracle_objective(profiles: &Profiles, scenario: &Scenario) -> f64 {
    let d = base_total(scenario);
    let mut f = 0.0;
    for (t, dt) in d.iter().enumerate() {
        let mut load = *dt;
        for k in 0..profiles.num_pevs() {
            load += profiles.get(k, t);
        }
        f += load * load;
    }
    f
}

/// g_{l,t} for every feeder and slot, row-major.
fn constraint_values(profiles: &Profiles, scenario: &Scenario) -> Vec<f64> {
    let net = scenario.network();
    let horizon = net.horizon();
    let mut g = Vec::with_capacity(net.num_feeders() * horizon);
    for l in 0..net.num_feeders() {
        for t in 0..horizon {
            let mut load = 0.0;
            for k in 0..profiles.num_pevs() {
                if net.path(k).contains(&l) {
                    load += profiles.get(k, t);
                }
            }
            g.push(load - (net.capacity(l) - net.base_load(l)[t]));
        }
    }
    g
}

fn max_relative_violation(g: &[f64], scenario: &Scenario) -> f64 {
    let net = scenario.network();
    let horizon = net.horizon();
    g.iter()
        .enumerate()
        .map(|(i, x)| x / net.feeder_headroom(i / horizon, i % horizon))
        .fold(0.0, f64::max)
}

fn project_all(scenario: &Scenario, target: &Profiles) -> Profiles {
    let mut out = Profiles::zeros(target.num_pevs(), target.horizon());
    for (k, pev) in scenario.pevs().iter().enumerate() {
        let b: Vec<f64> = target.row(k).iter().map(|x| -x).collect();
        out.row_mut(k).copy_from_slice(&oracle_project_exact(&b, &pev.caps, pev.demand).profile);
    }
    out
}

/// Projected gradient with Nesterov momentum and adaptive restart, from
/// `start`. `grad` fills the gradient of a smooth objective with Lipschitz
/// constant `lipschitz`. Returns the point and whether the step tolerance
/// was met.
fn accelerated_descent(
    scenario: &Scenario,
    start: Profiles,
    lipschitz: f64,
    max_iter: usize,
    tolerance: f64,
    grad: &dyn Fn(&Profiles, &mut Profiles),
) -> (Profiles, bool) {
    let step = 1.0 / lipschitz;
    let mut x = project_all(scenario, &start);
    let mut y = x.clone();
    let mut theta = 1.0f64;
    let mut g = Profiles::zeros(x.num_pevs(), x.horizon());
    for _ in 0..max_iter {
        grad(&y, &mut g);
        let mut target = y.clone();
        for (v, gv) in target.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *v -= step * gv;
        }
        let next = project_all(scenario, &target);
        let moved = next.max_abs_diff(&x);
        // restart when the momentum direction points uphill
        let uphill: f64 = g
            .as_slice()
            .iter()
            .zip(next.as_slice().iter().zip(x.as_slice()))
            .map(|(gv, (a, b))| gv * (a - b))
            .sum();
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let momentum = if uphill > 0.0 { 0.0 } else { (theta - 1.0) / theta_next };
        theta = if uphill > 0.0 { 1.0 } else { theta_next };
        y = next.clone();
        for ((yv, a), b) in y.as_mut_slice().iter_mut().zip(next.as_slice()).zip(x.as_slice()) {
            *yv = a + momentum * (a - b);
        }
        x = next;
        if moved < tolerance {
            return (x, true);
        }
    }
    (x, false)
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub profiles: Profiles,
    /// Objective at the returned (repaired) profiles.
    pub value: f64,
    /// max_{l,t} g / P^max after repair (<= 0 when feasible).
    pub max_relative_violation: f64,
    /// Objective change introduced by the feasibility repair.
    pub repair_perturbation: f64,
    /// Multipliers at the end of the constrained solve, row-major L x T.
    pub multipliers: Vec<f64>,
    pub low_confidence: bool,
}

/// Reference optimum of the constrained variance problem.
///
/// Method of multipliers: each inner problem minimizes
/// f(p) + (rho/2) sum [g(p) + mu/rho]^+^2 over the PEV boxes by accelerated
/// projected gradient, then mu <- [mu + rho g]^+. A final repair scales
/// overloaded slots down to their headroom and pushes the lost energy back
/// through the projection, repeatedly, until no feeder is overloaded.
pub fn oracle_solve_p(scenario: &Scenario, config: &OracleConfig) -> Result<OracleSolution> {
    let net = scenario.network();
    let horizon = net.horizon();
    let k_count = scenario.num_pevs();
    let n_feeders = net.num_feeders();
    let d = base_total(scenario);
    let headroom: Vec<f64> = (0..n_feeders * horizon)
        .map(|i| net.capacity(i / horizon) - net.base_load(i / horizon)[i % horizon])
        .collect();
    let member: Vec<Vec<bool>> = (0..n_feeders)
        .map(|l| (0..k_count).map(|k| net.path(k).contains(&l)).collect())
        .collect();
    let max_members = (0..n_feeders).map(|l| net.members(l).len()).sum::<usize>() as f64;

    let mut mu = vec![0.0; n_feeders * horizon];
    let mut rho = 1.0;
    let mut p = Profiles::zeros(k_count, horizon);
    let mut converged = false;
    let mut prev_violation = f64::INFINITY;
    for _ in 0..config.max_outer {
        let mu_now = mu.clone();
        let grad = |x: &Profiles, out: &mut Profiles| {
            let mut total = d.clone();
            for k in 0..k_count {
                for t in 0..horizon {
                    total[t] += x.get(k, t);
                }
            }
            let mut push = vec![0.0; n_feeders * horizon];
            for l in 0..n_feeders {
                for t in 0..horizon {
                    let mut load = 0.0;
                    for k in 0..k_count {
                        if member[l][k] {
                            load += x.get(k, t);
                        }
                    }
                    let i = l * horizon + t;
                    push[i] = (mu_now[i] + rho * (load - headroom[i])).max(0.0);
                }
            }
            for k in 0..k_count {
                let row = out.row_mut(k);
                for t in 0..horizon {
                    let mut v = 2.0 * total[t];
                    for l in 0..n_feeders {
                        if member[l][k] {
                            v += push[l * horizon + t];
                        }
                    }
                    row[t] = v;
                }
            }
        };
        let lipschitz = 2.0 * k_count.max(1) as f64 + rho * max_members.max(1.0);
        let (next, inner_ok) = accelerated_descent(
            scenario,
            p.clone(),
            lipschitz,
            config.max_inner,
            config.step_tolerance,
            &grad,
        );
        p = next;
        let g = constraint_values(&p, scenario);
        let violation = g.iter().copied().fold(0.0, f64::max);
        let mut mu_shift = 0.0f64;
        for (m, gv) in mu.iter_mut().zip(&g) {
            let new = (*m + rho * gv).max(0.0);
            mu_shift = mu_shift.max((new - *m).abs());
            *m = new;
        }
        if inner_ok && violation <= config.feasibility_tolerance && mu_shift <= 1e-9 * (1.0 + mu.iter().copied().fold(0.0, f64::max)) {
            converged = true;
            break;
        }
        if violation > 0.25 * prev_violation && rho < 1e8 {
            rho *= 4.0;
        }
        prev_violation = violation;
    }

    let before = oracle_objective(&p, scenario);
    let repaired = repair(scenario, p)?;
    let value = oracle_objective(&repaired, scenario);
    let g = constraint_values(&repaired, scenario);
    Ok(OracleSolution {
        max_relative_violation: max_relative_violation(&g, scenario),
        repair_perturbation: value - before,
        value,
        profiles: repaired,
        multipliers: mu,
        low_confidence: !converged,
    })
}

/// Scales every overloaded slot down to its headroom, freezes those entries
/// as caps, and re-projects each affected PEV so its demand is met elsewhere.
fn repair(scenario: &Scenario, mut p: Profiles) -> Result<Profiles> {
    let net = scenario.network();
    let horizon = net.horizon();
    let mut caps: Vec<Vec<f64>> = scenario.pevs().iter().map(|pev| pev.caps.clone()).collect();
    for _ in 0..100 {
        let g = constraint_values(&p, scenario);
        let worst = g.iter().copied().fold(0.0, f64::max);
        if worst <= 0.0 {
            return Ok(p);
        }
        let mut touched = vec![false; scenario.num_pevs()];
        for (i, gv) in g.iter().enumerate() {
            if *gv <= 0.0 {
                continue;
            }
            let (l, t) = (i / horizon, i % horizon);
            let load = gv + net.feeder_headroom(l, t);
            // shave a little extra so rounding cannot leave a residue
            let scale = (net.feeder_headroom(l, t) / load) * (1.0 - 1e-12);
            for &k in net.members(l) {
                let v = p.get(k, t) * scale;
                caps[k][t] = caps[k][t].min(v);
                touched[k] = true;
            }
        }
        for (k, pev) in scenario.pevs().iter().enumerate() {
            if !touched[k] {
                continue;
            }
            let capacity: f64 = caps[k].iter().sum();
            if capacity < pev.demand {
                return Err(Error::Internal(format!(
                    "feasibility repair left PEV `{}` unable to meet its demand",
                    pev.id
                )));
            }
            let b: Vec<f64> = p.row(k).iter().map(|x| -x).collect();
            let row = oracle_project_exact(&b, &caps[k], pev.demand).profile;
            p.row_mut(k).copy_from_slice(&row);
        }
    }
    Err(Error::Internal("feasibility repair did not settle".into()))
}

/// Augmented objective recomputed with its own cost formula.
pub fn oracle_augmented(profiles: &Profiles, scenario: &Scenario, cost: &OverloadCost) -> f64 {
    let net = scenario.network();
    let horizon = net.horizon();
    let g = constraint_values(profiles, scenario);
    let mut penalty = 0.0;
    for (i, x) in g.iter().enumerate() {
        if *x > 0.0 {
            penalty += cost.beta[i / horizon] * x.powf(2.0 + cost.exponent_offset);
        }
    }
    oracle_objective(profiles, scenario) + penalty
}

/// Gradient of the augmented objective by a per-slot loop.
pub fn oracle_augmented_gradient(profiles: &Profiles, scenario: &Scenario, cost: &OverloadCost) -> Profiles {
    let net = scenario.network();
    let horizon = net.horizon();
    let d = base_total(scenario);
    let g = constraint_values(profiles, scenario);
    let mut out = Profiles::zeros(profiles.num_pevs(), horizon);
    for k in 0..profiles.num_pevs() {
        for t in 0..horizon {
            let mut load = d[t];
            for j in 0..profiles.num_pevs() {
                load += profiles.get(j, t);
            }
            let mut v = 2.0 * load;
            for &l in net.path(k) {
                let x = g[l * horizon + t];
                if x > 0.0 {
                    v += cost.beta[l] * (2.0 + cost.exponent_offset) * x.powf(1.0 + cost.exponent_offset);
                }
            }
            out.row_mut(k)[t] = v;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct OracleP1Solution {
    pub profiles: Profiles,
    pub value: f64,
    pub converged: bool,
}

/// Reference minimizer of the augmented objective over the feasible set by
/// accelerated projected gradient, run until the step is below the
/// configured tolerance.
pub fn oracle_solve_p1(scenario: &Scenario, cost: &OverloadCost, config: &OracleConfig) -> Result<OracleP1Solution> {
    let net = scenario.network();
    if cost.beta.len() != net.num_feeders() {
        return Err(Error::Config("one penalty coefficient per feeder is required".into()));
    }
    let k_count = scenario.num_pevs();
    let e = cost.exponent_offset;
    let curvature = (0..net.num_feeders())
        .map(|l| {
            let x_max: f64 = net
                .members(l)
                .iter()
                .map(|&k| scenario.pevs()[k].caps.iter().copied().fold(0.0, f64::max))
                .sum();
            cost.beta[l] * (2.0 + e) * (1.0 + e) * x_max.max(1.0).powf(e)
        })
        .fold(0.0, f64::max);
    let members: usize = (0..net.num_feeders()).map(|l| net.members(l).len()).sum();
    let lipschitz = 2.0 * k_count.max(1) as f64 + curvature * members.max(1) as f64;
    let grad = |x: &Profiles, out: &mut Profiles| {
        *out = oracle_augmented_gradient(x, scenario, cost);
    };
    let start = Profiles::zeros(k_count, scenario.horizon());
    let (p, converged) = accelerated_descent(
        scenario,
        start,
        lipschitz,
        config.max_inner,
        config.step_tolerance,
        &grad,
    );
    Ok(OracleP1Solution {
        value: oracle_augmented(&p, scenario, cost),
        profiles: p,
        converged,
    })
}

/// Smallest value of grad^T (p - p*) over `samples` random feasible p.
/// Nonnegative (up to rounding) at a minimizer of a convex objective.
pub fn stationarity_gap(scenario: &Scenario, point: &Profiles, gradient: &Profiles, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let mut target = Profiles::zeros(point.num_pevs(), point.horizon());
        for (k, pev) in scenario.pevs().iter().enumerate() {
            for (t, c) in pev.caps.iter().enumerate() {
                target.row_mut(k)[t] = rng.random_range(-1.0..2.0) * c;
            }
        }
        let p = project_all(scenario, &target);
        let inner: f64 = gradient
            .as_slice()
            .iter()
            .zip(p.as_slice().iter().zip(point.as_slice()))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        worst = worst.min(inner);
    }
    worst
}

#[derive(Debug, Clone)]
pub struct GridSolution {
    pub profiles: Profiles,
    pub value: f64,
    pub candidates: u64,
}

/// Exhaustive search over profiles whose first T-1 active slots lie on a grid
/// of the given spacing (the last active slot takes whatever energy is left).
/// Only feasible combinations are scored.
pub fn oracle_grid_search(scenario: &Scenario, spacing: f64, max_candidates: u64) -> Result<GridSolution> {
    let horizon = scenario.horizon();
    let mut per_pev: Vec<Vec<Vec<f64>>> = Vec::new();
    for pev in scenario.pevs() {
        let active: Vec<usize> = (0..horizon).filter(|&t| pev.caps[t] > 0.0).collect();
        let mut options = Vec::new();
        if let Some((&last, free)) = active.split_last() {
            let mut current = vec![0.0; horizon];
            enumerate_rows(&pev.caps, free, last, pev.demand, spacing, 0, &mut current, &mut options);
        } else {
            options.push(vec![0.0; horizon]);
        }
        if options.is_empty() {
            return Err(Error::Internal(format!("no grid profile for PEV `{}`", pev.id)));
        }
        per_pev.push(options);
    }
    let combos: f64 = per_pev.iter().map(|o| o.len() as f64).product();
    if combos > max_candidates as f64 {
        return Err(Error::Config(format!(
            "grid search needs {combos:e} candidates, limit is {max_candidates}"
        )));
    }
    let net = scenario.network();
    let d = base_total(scenario);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut choice = vec![0usize; per_pev.len()];
    let mut candidates = 0u64;
    loop {
        candidates += 1;
        let mut feasible = true;
        'check: for l in 0..net.num_feeders() {
            for t in 0..horizon {
                let load: f64 = net.members(l).iter().map(|&k| per_pev[k][choice[k]][t]).sum();
                if load > net.feeder_headroom(l, t) {
                    feasible = false;
                    break 'check;
                }
            }
        }
        if feasible {
            let mut f = 0.0;
            for t in 0..horizon {
                let x = d[t] + choice.iter().enumerate().map(|(k, &c)| per_pev[k][c][t]).sum::<f64>();
                f += x * x;
            }
            if best.as_ref().is_none_or(|(b, _)| f < *b) {
                best = Some((f, choice.clone()));
            }
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == choice.len() {
                let (value, pick) = best.ok_or_else(|| Error::InfeasibleScenario("no feasible grid point".into()))?;
                let rows: Vec<Vec<f64>> = pick.iter().enumerate().map(|(k, &c)| per_pev[k][c].clone()).collect();
                let profiles = if rows.is_empty() {
                    Profiles::zeros(0, horizon)
                } else {
                    Profiles::from_rows(&rows)
                };
                return Ok(GridSolution {
                    profiles,
                    value,
                    candidates,
                });
            }
            choice[i] += 1;
            if choice[i] < per_pev[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate_rows(
    caps: &[f64],
    free: &[usize],
    last: usize,
    demand: f64,
    spacing: f64,
    depth: usize,
    current: &mut Vec<f64>,
    out: &mut Vec<Vec<f64>>,
) {
    let used: f64 = free[..depth].iter().map(|&t| current[t]).sum();
    if depth == free.len() {
        let rest = demand - used;
        if rest >= -1e-12 && rest <= caps[last] + 1e-12 {
            let mut row = current.clone();
            row[last] = rest.clamp(0.0, caps[last]);
            out.push(row);
        }
        return;
    }
    let t = free[depth];
    let steps = (caps[t].min(demand - used).max(0.0) / spacing + 1e-9).floor() as usize;
    for i in 0..=steps {
        current[t] = i as f64 * spacing;
        enumerate_rows(caps, free, last, demand, spacing, depth + 1, current, out);
    }
    current[t] = 0.0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::*;

    #[test]
    fn sweep_examples() {
        let r = oracle_project(&[1.0, 3.0, 2.0], &[2.0; 3], 3.0, 1e-6);
        for (a, b) in r.profile.iter().zip([2.0, 0.0, 1.0]) {
            assert!((a - b).abs() <= 1e-6);
        }
        assert!(kkt_certificate(&[1.0, 3.0, 2.0], &[2.0; 3], &[2.0, 0.0, 1.0], 1e-9).is_ok());
        assert_eq!(oracle_project(&[0.3, 0.1], &[1.0, 1.0], 0.0, 1e-6).profile, vec![0.0, 0.0]);
        assert_eq!(oracle_project(&[0.3, 0.1], &[1.0, 2.0], 3.0, 1e-6).profile, vec![1.0, 2.0]);
    }

    #[test]
    fn exact_enumeration_examples() {
        let r = oracle_project_exact(&[0.0, 0.0], &[1.0, 5.0], 4.0);
        assert_eq!(r.profile, vec![1.0, 3.0]);
        assert_eq!(r.level, 3.0);
    }

    #[test]
    fn certificate_rejects_wrong_profiles() {
        // level 3 would need slot 2 at 1, not 0.5
        assert!(kkt_certificate(&[1.0, 3.0, 2.0], &[2.0; 3], &[2.0, 0.5, 0.5], 1e-9).is_err());
        assert!(kkt_certificate(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 0.0], 1e-9).is_err());
    }

    #[test]
    fn zero_demand_fleet_solution() {
        let s = star().with_demands(|_, _| 0.0);
        let sol = oracle_solve_p(&s, &OracleConfig::default()).unwrap();
        assert_eq!(sol.value, 45.0);
        assert!(sol.profiles.as_slice().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn single_pev_unconstrained_is_valley_fill() {
        let s = Scenario::build(
            &[feeder("l", None, 1e6)],
            &base(&[("l", &[5.0, 1.0, 2.0, 4.0])]),
            &[pev("k", "l", 4, 4.0, 3.0)],
            4,
        )
        .unwrap();
        let sol = oracle_solve_p(&s, &OracleConfig::default()).unwrap();
        let fill = oracle_project_exact(&[5.0, 1.0, 2.0, 4.0], &[3.0; 4], 4.0).profile;
        assert!(sol.profiles.row(0).iter().zip(&fill).all(|(a, b)| (a - b).abs() < 1e-8));
        assert!(!sol.low_confidence);
    }

    fn tiny() -> Scenario {
        let feeders = [feeder("r", None, 30.0), feeder("a", Some("r"), 7.0), feeder("b", Some("r"), 9.0)];
        let b = base(&[("a", &[3.0, 2.0, 5.0]), ("b", &[4.0, 3.0, 5.0])]);
        let pevs = [pev("x", "a", 3, 3.0, 2.0), pev("y", "b", 3, 3.0, 2.0)];
        Scenario::build(&feeders, &b, &pevs, 3).unwrap()
    }

    #[test]
    fn grid_confirms_constrained_solution() {
        let s = tiny();
        let sol = oracle_solve_p(&s, &OracleConfig::default()).unwrap();
        assert!(sol.max_relative_violation <= 1e-6);
        let grid = oracle_grid_search(&s, 0.05, 10_000_000).unwrap();
        assert!(grid.value >= sol.value - 1e-9);
        assert!(grid.value - sol.value <= 0.01 * sol.value);
    }

    #[test]
    fn p1_stationarity() {
        let s = tiny();
        let cost = OverloadCost::new(vec![0.0, 4.0, 4.0], 0.01).unwrap();
        let sol = oracle_solve_p1(&s, &cost, &OracleConfig::default()).unwrap();
        assert!(sol.converged);
        let grad = oracle_augmented_gradient(&sol.profiles, &s, &cost);
        assert!(stationarity_gap(&s, &sol.profiles, &grad, 1000, 7) >= -1e-6);
    }

    #[test]
    fn p1_without_penalty_is_p_without_constraints() {
        let s = tiny();
        let p1 = oracle_solve_p1(&s, &OverloadCost::zero(3), &OracleConfig::default()).unwrap();
        let loose = Scenario::build(
            &[feeder("r", None, 1e6), feeder("a", Some("r"), 1e6), feeder("b", Some("r"), 1e6)],
            &base(&[("a", &[3.0, 2.0, 5.0]), ("b", &[4.0, 3.0, 5.0])]),
            &[pev("x", "a", 3, 3.0, 2.0), pev("y", "b", 3, 3.0, 2.0)],
            3,
        )
        .unwrap();
        let p = oracle_solve_p(&loose, &OracleConfig::default()).unwrap();
        assert!((p1.value - p.value).abs() < 1e-8 * p.value);
    }
}
