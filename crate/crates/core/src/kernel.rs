//! The synchronous projected step shared by both optimizers and the
//! coordinator. Keeping the arithmetic in one place is what makes the
//! coordinator's rounds reproduce centralized iterates bit for bit.

use crate::error::Result;
use crate::network::{Network, Profiles, Scenario};
use crate::par::{try_for_each_row, Execution};
use crate::projection::{project_offsets_in_place, ProjectionMethod};

/// Writes P(t) and P_l(t) for the current profiles. Both sums run over PEVs
/// in increasing index order.
pub(crate) fn refresh_loads(network: &Network, profiles: &Profiles, total: &mut [f64], feeder: &mut [f64]) {
    let horizon = network.horizon();
    total.fill(0.0);
    for row in profiles.rows() {
        for (o, p) in total.iter_mut().zip(row) {
            *o += p;
        }
    }
    feeder.fill(0.0);
    for l in 0..network.num_feeders() {
        let acc = &mut feeder[l * horizon..(l + 1) * horizon];
        for &k in network.members(l) {
            for (o, p) in acc.iter_mut().zip(profiles.row(k)) {
                *o += p;
            }
        }
    }
}

/// 2(D(t) + P(t)), the value the substation seeds every feedback with.
pub(crate) fn seed_feedback(base: &[f64], total: &[f64], seed: &mut [f64]) {
    for ((s, d), p) in seed.iter_mut().zip(base).zip(total) {
        *s = 2.0 * (d + p);
    }
}

/// q_k(t) = seed(t) + sum over the path (root first) of the feeder terms.
pub(crate) fn assemble_gradient(network: &Network, k: usize, seed: &[f64], feeder_terms: &[f64], out: &mut [f64]) {
    let horizon = network.horizon();
    out.copy_from_slice(seed);
    for &l in network.path(k) {
        for (o, c) in out.iter_mut().zip(&feeder_terms[l * horizon..(l + 1) * horizon]) {
            *o += c;
        }
    }
}

/// Projects `p_k - alpha * q_k` for one PEV given its already assembled
/// gradient in `row`; the result replaces the gradient.
pub(crate) fn project_row(
    scenario: &Scenario,
    k: usize,
    previous: &[f64],
    alpha: f64,
    method: ProjectionMethod,
    row: &mut [f64],
) -> Result<f64> {
    for (r, p) in row.iter_mut().zip(previous) {
        *r = alpha * *r - p;
    }
    let pev = &scenario.pevs()[k];
    project_offsets_in_place(row, &pev.caps, pev.demand, method)
}

/// One synchronous update of every PEV against the same snapshot.
#[allow(clippy::too_many_arguments)]
pub(crate) fn projected_step(
    execution: Execution,
    scenario: &Scenario,
    current: &Profiles,
    seed: &[f64],
    feeder_terms: &[f64],
    alpha: f64,
    method: ProjectionMethod,
    next: &mut Profiles,
) -> Result<()> {
    let network = scenario.network();
    let horizon = network.horizon();
    try_for_each_row(execution, next.as_mut_slice(), horizon, |k, row| {
        assemble_gradient(network, k, seed, feeder_terms, row);
        project_row(scenario, k, current.row(k), alpha, method, row).map(|_| ())
    })
}

/// Largest |p'(i) - p(i)| and sum of squared differences.
pub(crate) fn step_norms(current: &Profiles, next: &Profiles) -> (f64, f64) {
    let mut inf = 0.0f64;
    let mut sq = 0.0;
    for (a, b) in current.as_slice().iter().zip(next.as_slice()) {
        let d = b - a;
        inf = inf.max(d.abs());
        sq += d * d;
    }
    (inf, sq)
}

/// f(p') - f(p) evaluated from the load differences rather than as the
/// difference of two large sums, so descent checks are not swamped by
/// rounding in f itself.
pub(crate) fn objective_change(base: &[f64], total: &[f64], next_total: &[f64]) -> f64 {
    crate::network::compensated_sum(
        base.iter()
            .zip(total)
            .zip(next_total)
            .map(|((d, p), q)| (q - p) * (2.0 * d + p + q)),
    )
}

/// Per-iteration bookkeeping of how far the iterate strays from the
/// feasible set.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FeasibilityAudit {
    pub max_energy_residual: f64,
    pub max_box_violation: f64,
}

impl FeasibilityAudit {
    pub(crate) fn observe(&mut self, scenario: &Scenario, profiles: &Profiles) {
        let (energy, boxes) = crate::network::feasibility_residuals(profiles, scenario);
        self.max_energy_residual = self.max_energy_residual.max(energy);
        self.max_box_violation = self.max_box_violation.max(boxes);
    }
}
