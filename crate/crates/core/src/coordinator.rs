//! Round-based simulation of the decentralized protocol.
//!
//! Each round the substation seeds one feedback message per PEV with
//! 2(D(t) + P(t)). The message travels root to leaf along the PEV's path and
//! every feeder on the way adds its own term: the overload-cost slope in
//! penalty mode or its multiplier in primal-dual mode. The PEV projects
//! locally and announces its new profile to the substation and to the feeders
//! on its path. In primal-dual mode each feeder also steps its multipliers
//! using the load it saw at the start of the round.
//!
//! Feeders know their own headroom as static configuration and nothing else
//! about the network.

use crate::error::{Error, Result};
use crate::kernel;
use crate::network::{Profiles, Scenario};
use crate::par::{try_for_each_row, Execution};
use crate::penalty::OverloadCost;
use crate::projection::ProjectionMethod;

/// Messages exchanged in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MessageCount {
    pub feedback: usize,
    /// Feeder hops summed over every feedback message.
    pub hops: usize,
    pub announcements: usize,
}

pub fn message_count(scenario: &Scenario) -> MessageCount {
    let net = scenario.network();
    MessageCount {
        feedback: scenario.num_pevs(),
        hops: (0..scenario.num_pevs()).map(|k| net.path(k).len()).sum(),
        announcements: scenario.num_pevs(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Penalty(OverloadCost),
    PrimalDual { mu_max: f64 },
}

/// How feeders and the substation keep their view of the PEV load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadAccounting {
    /// Re-sum the latest announcements of all downstream PEVs each round.
    /// Matches the centralized summation order exactly.
    #[default]
    Resum,
    /// Apply announcement deltas to a cached load and re-sum every
    /// `audit_every` rounds to bound drift.
    Incremental { audit_every: usize },
}

#[derive(Debug, Clone)]
struct FeederAgent {
    headroom: Vec<f64>,
    members: Vec<usize>,
    load: Vec<f64>,
    mu: Vec<f64>,
}

impl FeederAgent {
    /// The value this feeder adds to every feedback passing through it.
    fn term(&self, l: usize, mode: &Mode, out: &mut [f64]) {
        match mode {
            Mode::Penalty(cost) => {
                for ((o, x), h) in out.iter_mut().zip(&self.load).zip(&self.headroom) {
                    *o = cost.value_and_derivative(l, x - h).1;
                }
            }
            Mode::PrimalDual { .. } => out.copy_from_slice(&self.mu),
        }
    }

    fn resum(&mut self, profiles: &Profiles) {
        self.load.fill(0.0);
        for &k in &self.members {
            for (o, p) in self.load.iter_mut().zip(profiles.row(k)) {
                *o += p;
            }
        }
    }
}

/// One round's worth of protocol events.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundEvent {
    pub round: usize,
    pub messages: MessageCount,
    /// Largest accumulator value delivered to any PEV.
    pub max_feedback: f64,
}

#[derive(Debug, Clone)]
pub struct Coordinator<'a> {
    scenario: &'a Scenario,
    mode: Mode,
    alpha: f64,
    projection: ProjectionMethod,
    execution: Execution,
    accounting: LoadAccounting,
    feeders: Vec<FeederAgent>,
    /// The substation's view of P(t).
    total: Vec<f64>,
    profiles: Profiles,
    next: Profiles,
    terms: Vec<f64>,
    seed: Vec<f64>,
    round: usize,
}

impl<'a> Coordinator<'a> {
    pub fn new(scenario: &'a Scenario, mode: Mode, alpha: f64, initial: Profiles, initial_mu: f64) -> Result<Self> {
        let net = scenario.network();
        let horizon = net.horizon();
        if initial.num_pevs() != scenario.num_pevs() || initial.horizon() != horizon {
            return Err(Error::Config("initial profiles do not match the scenario".into()));
        }
        if let Mode::Penalty(cost) = &mode {
            if cost.beta.len() != net.num_feeders() {
                return Err(Error::Config("one penalty coefficient per feeder is required".into()));
            }
        }
        let mu0 = match mode {
            Mode::PrimalDual { mu_max } => initial_mu.clamp(0.0, mu_max),
            Mode::Penalty(_) => 0.0,
        };
        let feeders = (0..net.num_feeders())
            .map(|l| {
                let mut f = FeederAgent {
                    headroom: net.headroom(l).to_vec(),
                    members: net.members(l).to_vec(),
                    load: vec![0.0; horizon],
                    mu: vec![mu0; horizon],
                };
                f.resum(&initial);
                f
            })
            .collect();
        let mut c = Self {
            scenario,
            mode,
            alpha,
            projection: ProjectionMethod::Exact,
            execution: Execution::default(),
            accounting: LoadAccounting::default(),
            feeders,
            total: vec![0.0; horizon],
            next: initial.clone(),
            profiles: initial,
            terms: vec![0.0; net.num_feeders() * horizon],
            seed: vec![0.0; horizon],
            round: 0,
        };
        c.resum_total();
        Ok(c)
    }

    pub fn with_projection(mut self, projection: ProjectionMethod) -> Self {
        self.projection = projection;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_accounting(mut self, accounting: LoadAccounting) -> Self {
        self.accounting = accounting;
        self
    }

    pub fn profiles(&self) -> &Profiles {
        &self.profiles
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Multipliers held by the feeders, row-major L x T.
    pub fn multipliers(&self) -> Vec<f64> {
        self.feeders.iter().flat_map(|f| f.mu.iter().copied()).collect()
    }

    /// The term feeder `l` would add to a feedback message right now.
    pub fn feeder_term(&self, l: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.scenario.horizon()];
        self.feeders[l].term(l, &self.mode, &mut out);
        out
    }

    fn resum_total(&mut self) {
        self.total.fill(0.0);
        for row in self.profiles.rows() {
            for (o, p) in self.total.iter_mut().zip(row) {
                *o += p;
            }
        }
    }

    pub fn run_round(&mut self) -> Result<RoundEvent> {
        let net = self.scenario.network();
        let horizon = net.horizon();
        kernel::seed_feedback(net.total_base(), &self.total, &mut self.seed);
        for (l, f) in self.feeders.iter().enumerate() {
            f.term(l, &self.mode, &mut self.terms[l * horizon..(l + 1) * horizon]);
        }

        let scenario = self.scenario;
        let (seed, terms, current) = (&self.seed, &self.terms, &self.profiles);
        let (alpha, projection) = (self.alpha, self.projection);
        try_for_each_row(self.execution, self.next.as_mut_slice(), horizon, |k, acc| {
            acc.copy_from_slice(seed);
            for &l in net.path(k) {
                for (a, c) in acc.iter_mut().zip(&terms[l * horizon..(l + 1) * horizon]) {
                    *a += c;
                }
            }
            kernel::project_row(scenario, k, current.row(k), alpha, projection, acc).map(|_| ())
        })?;
        let max_feedback = self.max_feedback();

        if let Mode::PrimalDual { mu_max } = self.mode {
            for f in &mut self.feeders {
                for ((m, x), h) in f.mu.iter_mut().zip(&f.load).zip(&f.headroom) {
                    *m = (*m + alpha * (x - h)).min(mu_max).max(0.0);
                }
            }
        }

        std::mem::swap(&mut self.profiles, &mut self.next);
        self.round += 1;
        let audit = match self.accounting {
            LoadAccounting::Resum => true,
            LoadAccounting::Incremental { audit_every } => audit_every > 0 && self.round.is_multiple_of(audit_every),
        };
        if audit {
            self.resum_total();
            for f in &mut self.feeders {
                f.resum(&self.profiles);
            }
        } else {
            for k in 0..self.profiles.num_pevs() {
                let (new, old) = (self.profiles.row(k), self.next.row(k));
                for t in 0..horizon {
                    self.total[t] += new[t] - old[t];
                }
                for &l in net.path(k) {
                    let load = &mut self.feeders[l].load;
                    for t in 0..horizon {
                        load[t] += new[t] - old[t];
                    }
                }
            }
        }
        Ok(RoundEvent {
            round: self.round,
            messages: message_count(self.scenario),
            max_feedback,
        })
    }

    // Recomputes the delivered accumulators; only used for the event log.
    fn max_feedback(&self) -> f64 {
        let net = self.scenario.network();
        let horizon = net.horizon();
        let mut acc = vec![0.0; horizon];
        let mut best = f64::NEG_INFINITY;
        for k in 0..self.scenario.num_pevs() {
            kernel::assemble_gradient(net, k, &self.seed, &self.terms, &mut acc);
            best = acc.iter().copied().fold(best, f64::max);
        }
        best
    }

    /// Runs `rounds` rounds and returns the event log.
    pub fn run(&mut self, rounds: usize) -> Result<Vec<RoundEvent>> {
        (0..rounds).map(|_| self.run_round()).collect()
    }
}

/// Writes the event log as `round,feedback,hops,announcements,max_feedback`
/// lines under a header.
pub fn write_event_log<W: std::io::Write>(events: &[RoundEvent], mut w: W) -> std::io::Result<()> {
    writeln!(w, "round,feedback,hops,announcements,max_feedback")?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{},{:e}",
            e.round, e.messages.feedback, e.messages.hops, e.messages.announcements, e.max_feedback
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::*;
    use crate::network::proportional_fill;
    use crate::penalty::{run_penalty, PenaltyConfig};
    use crate::primal_dual::{compute_mu_max, run_primal_dual, PrimalDualConfig};

    fn four_pevs() -> Scenario {
        let feeders = [
            feeder("r", None, 60.0),
            feeder("a", Some("r"), 14.0),
            feeder("b", Some("r"), 30.0),
            feeder("c", Some("b"), 9.0),
            feeder("d", Some("b"), 12.0),
        ];
        let b = base(&[
            ("a", &[3.0, 2.0, 6.0, 9.0, 4.0]),
            ("c", &[2.0, 3.0, 6.0, 7.0, 1.0]),
            ("d", &[4.0, 3.0, 2.0, 8.0, 5.0]),
        ]);
        let pevs = [
            pev("w", "a", 5, 6.0, 3.0),
            pev("x", "c", 5, 6.0, 3.0),
            pev("y", "c", 5, 4.0, 2.0),
            pev("z", "d", 5, 5.0, 3.0),
        ];
        Scenario::build(&feeders, &b, &pevs, 5).unwrap()
    }

    #[test]
    fn message_count_examples() {
        let chain = Scenario::build(
            &[feeder("r", None, 10.0), feeder("a", Some("r"), 10.0)],
            &base(&[("a", &[1.0, 1.0])]),
            &[pev("k", "a", 2, 1.0, 1.0)],
            2,
        )
        .unwrap();
        assert_eq!(
            message_count(&chain),
            MessageCount {
                feedback: 1,
                hops: 2,
                announcements: 1
            }
        );
        let m = message_count(&star());
        assert_eq!((m.feedback, m.announcements), (3, 3));
    }

    #[test]
    fn penalty_rounds_match_centralized_bitwise() {
        let s = four_pevs();
        let cost = OverloadCost::new(vec![3.0, 5.0, 2.0, 8.0, 4.0], 0.01).unwrap();
        let central = run_penalty(
            &s,
            &cost,
            &PenaltyConfig {
                max_iterations: 100,
                tolerance: 0.0,
                ..PenaltyConfig::default()
            },
        )
        .unwrap();
        let mut c = Coordinator::new(&s, Mode::Penalty(cost), central.alpha, Profiles::zeros(4, 5), 0.0).unwrap();
        c.run(100).unwrap();
        assert_eq!(c.profiles().as_slice(), central.profiles.as_slice());
    }

    #[test]
    fn primal_dual_rounds_match_centralized_bitwise() {
        let s = four_pevs();
        let config = PrimalDualConfig {
            alpha: 0.02,
            max_iterations: 100,
            ..PrimalDualConfig::default()
        };
        let central = run_primal_dual(&s, &config).unwrap();
        let mu_max = compute_mu_max(&s, central.slack).unwrap();
        let mut c = Coordinator::new(&s, Mode::PrimalDual { mu_max }, 0.02, proportional_fill(&s), 0.0).unwrap();
        c.run(100).unwrap();
        assert_eq!(c.profiles().as_slice(), central.last_iterate.as_slice());
        assert_eq!(c.multipliers(), central.dual.mu);
    }

    #[test]
    fn sequential_and_parallel_rounds_agree() {
        let s = four_pevs();
        let cost = OverloadCost::new(vec![3.0; 5], 0.01).unwrap();
        let mut a = Coordinator::new(&s, Mode::Penalty(cost.clone()), 0.01, Profiles::zeros(4, 5), 0.0)
            .unwrap()
            .with_execution(Execution::Sequential);
        let mut b = Coordinator::new(&s, Mode::Penalty(cost), 0.01, Profiles::zeros(4, 5), 0.0)
            .unwrap()
            .with_execution(Execution::Parallel);
        a.run(30).unwrap();
        b.run(30).unwrap();
        assert_eq!(a.profiles(), b.profiles());
    }

    #[test]
    fn incremental_accounting_stays_close() {
        let s = four_pevs();
        let cost = OverloadCost::new(vec![3.0; 5], 0.01).unwrap();
        let mut a = Coordinator::new(&s, Mode::Penalty(cost.clone()), 0.01, Profiles::zeros(4, 5), 0.0).unwrap();
        let mut b = Coordinator::new(&s, Mode::Penalty(cost), 0.01, Profiles::zeros(4, 5), 0.0)
            .unwrap()
            .with_accounting(LoadAccounting::Incremental { audit_every: 7 });
        a.run(100).unwrap();
        b.run(100).unwrap();
        assert!(a.profiles().max_abs_diff(b.profiles()) <= 1e-12);
    }

    #[test]
    fn empty_fleet_round_is_noop() {
        let s = Scenario::build(&[feeder("r", None, 5.0)], &base(&[("r", &[1.0, 2.0])]), &[], 2).unwrap();
        let mut c = Coordinator::new(&s, Mode::PrimalDual { mu_max: 1.0 }, 0.1, Profiles::zeros(0, 2), 0.0).unwrap();
        let e = c.run_round().unwrap();
        assert_eq!(e.messages, MessageCount::default());
        assert_eq!(c.profiles().num_pevs(), 0);
    }

    #[test]
    fn feeder_term_is_local() {
        let s = four_pevs();
        let cost = OverloadCost::new(vec![3.0; 5], 0.01).unwrap();
        // feeder c serves PEVs 1 and 2; change only PEVs 0 and 3
        let p = Profiles::from_rows(&[
            vec![3.0, 3.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 3.0, 3.0, 0.0],
            vec![0.0, 0.0, 2.0, 2.0, 0.0],
            vec![0.0, 0.0, 3.0, 2.0, 0.0],
        ]);
        let mut q = p.clone();
        q.row_mut(0).copy_from_slice(&[0.0, 0.0, 3.0, 3.0, 0.0]);
        q.row_mut(3).copy_from_slice(&[3.0, 2.0, 0.0, 0.0, 0.0]);
        let l = s.network().feeder_index("c").unwrap();
        let a = Coordinator::new(&s, Mode::Penalty(cost.clone()), 0.01, p, 0.0).unwrap();
        let b = Coordinator::new(&s, Mode::Penalty(cost), 0.01, q, 0.0).unwrap();
        assert_eq!(a.feeder_term(l), b.feeder_term(l));
        assert!(a.feeder_term(l).iter().any(|x| *x > 0.0));
    }

    #[test]
    fn event_log_format() {
        let s = four_pevs();
        let cost = OverloadCost::zero(5);
        let mut c = Coordinator::new(&s, Mode::Penalty(cost), 0.01, Profiles::zeros(4, 5), 0.0).unwrap();
        let events = c.run(2).unwrap();
        let mut out = Vec::new();
        write_event_log(&events, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with("2,4,11,4,"));
    }
}
