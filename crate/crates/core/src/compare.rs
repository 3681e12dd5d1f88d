//! Side-by-side runs of the uncontrolled baseline and both constrained
//! optimizers, and the run settings shared with the CLI.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::coordinator::{self, MessageCount};
use crate::error::{Error, Result};
use crate::network::{self, Profiles, Scenario};
use crate::par::{self, Execution};
use crate::penalty::{self, OverloadCost, PenaltyConfig, StepSize};
use crate::primal_dual::{self, PrimalDualConfig};
use crate::projection::{ProjectionMethod, DEFAULT_BISECTION_TOLERANCE};
use crate::scenario::{BetaEntry, MethodName, MethodSection, ProjectionName};
use crate::trace::RunTrace;

pub const COMPARE_SCHEMA: &str = "pevgrid-compare v1";

/// Fully resolved settings for all three strategies.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub cost: OverloadCost,
    pub penalty: PenaltyConfig,
    pub unconstrained: PenaltyConfig,
    pub primal_dual: PrimalDualConfig,
}

impl RunSettings {
    /// Method defaults, overridden by whatever `section` sets. `alpha` and
    /// `max_iterations` apply to the penalty and primal-dual runs; the
    /// unconstrained run keeps the default step fraction.
    pub fn resolve(scenario: &Scenario, section: &MethodSection) -> Result<Self> {
        let net = scenario.network();
        let offset = section.exponent_offset.unwrap_or(penalty::DEFAULT_EXPONENT_OFFSET);
        let cost = match &section.beta {
            None => OverloadCost::default_for(scenario, offset),
            Some(BetaEntry::Uniform(b)) => OverloadCost::new(vec![*b; net.num_feeders()], offset)?,
            Some(BetaEntry::PerFeeder(v)) => {
                if v.len() != net.num_feeders() {
                    return Err(Error::Config(format!(
                        "{} penalty coefficients for {} feeders",
                        v.len(),
                        net.num_feeders()
                    )));
                }
                OverloadCost::new(v.clone(), offset)?
            }
        };
        let projection = match section.projection {
            None | Some(ProjectionName::Exact) => ProjectionMethod::Exact,
            Some(ProjectionName::Bisection) => ProjectionMethod::BinarySearch {
                tolerance: section.bisection_tolerance.unwrap_or(DEFAULT_BISECTION_TOLERANCE),
            },
        };
        let step = match (section.alpha, section.step_fraction) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("set either `alpha` or `step_fraction`, not both".into()))
            }
            (Some(a), None) => StepSize::Fixed(a),
            (None, Some(f)) => StepSize::Fraction(f),
            (None, None) => StepSize::Fraction(penalty::DEFAULT_STEP_FRACTION),
        };
        let mut penalty = PenaltyConfig {
            step,
            projection,
            ..PenaltyConfig::default()
        };
        let mut primal_dual = PrimalDualConfig {
            alpha: section.alpha.unwrap_or(primal_dual::DEFAULT_STEP),
            slack: section.slack,
            projection,
            ..PrimalDualConfig::default()
        };
        if let Some(m) = section.max_iterations {
            penalty.max_iterations = m;
            primal_dual.max_iterations = m;
        }
        if let Some(tol) = section.tolerance {
            penalty.tolerance = tol;
        }
        penalty.record_every = penalty.max_iterations.div_ceil(primal_dual::TRACE_ROWS).max(1);
        let unconstrained = PenaltyConfig {
            step: StepSize::Fraction(penalty::DEFAULT_STEP_FRACTION),
            ..penalty.clone()
        };
        Ok(Self {
            cost,
            penalty,
            unconstrained,
            primal_dual,
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.penalty.execution = execution;
        self.unconstrained.execution = execution;
        self.primal_dual.execution = execution;
        self
    }

    pub fn with_max_iterations(mut self, m: usize) -> Self {
        self.penalty.max_iterations = m;
        self.unconstrained.max_iterations = m;
        self.primal_dual.max_iterations = m;
        let every = m.div_ceil(primal_dual::TRACE_ROWS).max(1);
        self.penalty.record_every = every;
        self.unconstrained.record_every = every;
        self
    }
}

#[derive(Debug, Clone)]
pub struct StrategyResult {
    pub method: MethodName,
    pub profiles: Profiles,
    /// D(t) + P(t).
    pub total_load: Vec<f64>,
    /// Normalized max overload per slot.
    pub overload: Vec<f64>,
    pub variance: f64,
    pub max_overload: f64,
    pub trace: RunTrace,
}

impl StrategyResult {
    fn new(method: MethodName, scenario: &Scenario, profiles: Profiles, trace: RunTrace) -> Self {
        let net = scenario.network();
        let total_load = network::total_load(&profiles, net);
        let overload = network::overload_series(net, &network::feeder_loads(&profiles, net));
        Self {
            method,
            variance: network::load_variance(&total_load),
            max_overload: overload.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            profiles,
            total_load,
            overload,
            trace,
        }
    }
}

impl StrategyResult {
    /// Writes `<name>_load.csv`, `<name>_overload.csv`, `<name>_profiles.csv`
    /// and `<name>_trace.csv` into `dir`.
    pub fn write_outputs(&self, scenario: &Scenario, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let name = self.method.to_string();
        let base = scenario.network().total_base();
        let mut written = Vec::new();

        let path = dir.join(format!("{name}_load.csv"));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        writeln!(w, "# {COMPARE_SCHEMA}")?;
        writeln!(w, "hour,base_load,total_load")?;
        for (t, (d, x)) in base.iter().zip(&self.total_load).enumerate() {
            writeln!(w, "{},{d:e},{x:e}", t + 1)?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join(format!("{name}_overload.csv"));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        writeln!(w, "# {COMPARE_SCHEMA}")?;
        writeln!(w, "hour,normalized_max_overload")?;
        for (t, x) in self.overload.iter().enumerate() {
            writeln!(w, "{},{x:e}", t + 1)?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join(format!("{name}_profiles.csv"));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        writeln!(w, "# {COMPARE_SCHEMA}")?;
        let hours: Vec<String> = (1..=scenario.horizon()).map(|t| format!("h{t}")).collect();
        writeln!(w, "pev,{}", hours.join(","))?;
        for (pev, row) in scenario.pevs().iter().zip(self.profiles.rows()) {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
            writeln!(w, "{},{}", pev.id, cells.join(","))?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join(format!("{name}_trace.csv"));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        self.trace.write_csv(&mut w)?;
        w.flush()?;
        written.push(path);
        Ok(written)
    }
}

/// Runs one strategy on its own.
pub fn run_strategy(scenario: &Scenario, settings: &RunSettings, method: MethodName) -> Result<StrategyResult> {
    let (profiles, trace) = match method {
        MethodName::Penalty => {
            let run = penalty::run_penalty(scenario, &settings.cost, &settings.penalty)?;
            (run.profiles, run.trace)
        }
        MethodName::Unconstrained => {
            let cost = OverloadCost::zero(scenario.network().num_feeders());
            let mut run = penalty::run_penalty(scenario, &cost, &settings.unconstrained)?;
            run.trace.method = method.to_string();
            (run.profiles, run.trace)
        }
        MethodName::PrimalDual => {
            let run = primal_dual::run_primal_dual(scenario, &settings.primal_dual)?;
            (run.profiles, run.trace)
        }
    };
    let mut trace = trace;
    let per_round = coordinator::message_count(scenario);
    let rounds = trace.summary.iterations;
    trace.set_meta("feedback_per_round", per_round.feedback);
    trace.set_meta("hops_per_round", per_round.hops);
    trace.set_meta("announcements_per_round", per_round.announcements);
    trace.summary.messages = Some(MessageCount {
        feedback: per_round.feedback * rounds,
        hops: per_round.hops * rounds,
        announcements: per_round.announcements * rounds,
    });
    Ok(StrategyResult::new(method, scenario, profiles, trace))
}

#[derive(Debug, Clone)]
pub struct Comparison {
    /// Unconstrained, penalty, primal-dual, in that order.
    pub strategies: Vec<StrategyResult>,
}

impl Comparison {
    pub fn get(&self, method: MethodName) -> &StrategyResult {
        self.strategies
            .iter()
            .find(|s| s.method == method)
            .expect("every strategy is run")
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# {COMPARE_SCHEMA}")?;
        writeln!(w, "strategy,variance,max_normalized_overload,objective,iterations,converged")?;
        for s in &self.strategies {
            let summary = &s.trace.summary;
            writeln!(
                w,
                "{},{:e},{:e},{:e},{},{}",
                s.method, s.variance, s.max_overload, summary.objective, summary.iterations, summary.converged
            )?;
        }
        Ok(())
    }

    /// Writes `summary.csv` and every strategy's files into `dir`.
    pub fn write_outputs(&self, scenario: &Scenario, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let path = dir.join("summary.csv");
        let mut w = BufWriter::new(fs::File::create(&path)?);
        self.write_summary(&mut w)?;
        w.flush()?;
        let mut written = vec![path];
        for s in &self.strategies {
            written.extend(s.write_outputs(scenario, dir)?);
        }
        Ok(written)
    }
}

/// Runs all three strategies, concurrently under `Execution::Parallel`.
pub fn run_comparison(scenario: &Scenario, settings: &RunSettings, execution: Execution) -> Result<Comparison> {
    let (unconstrained, (penalty, primal_dual)) = par::join(
        execution,
        || run_strategy(scenario, settings, MethodName::Unconstrained),
        || {
            par::join(
                execution,
                || run_strategy(scenario, settings, MethodName::Penalty),
                || run_strategy(scenario, settings, MethodName::PrimalDual),
            )
        },
    );
    Ok(Comparison {
        strategies: vec![unconstrained?, penalty?, primal_dual?],
    })
}
