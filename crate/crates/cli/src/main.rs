use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pevgrid::compare::{run_comparison, run_strategy, RunSettings};
use pevgrid::oracle::{oracle_grid_search, oracle_solve_p, oracle_solve_p1, OracleConfig};
use pevgrid::projection::{
    project_binary_search, project_exact, ProjectionProblem, DEFAULT_BISECTION_TOLERANCE,
};
use pevgrid::scenario::{
    generate_desk13, load_scenario, BetaEntry, LoadedScenario, MethodName, MethodSection, ProjectionFile,
    ProjectionName,
};
use pevgrid::{Error, Execution, Profiles, Result, Scenario};

const DEFAULT_OUTPUT: &str = "pevgrid-out";
const GRID_CANDIDATE_LIMIT: u64 = 50_000_000;

#[derive(Parser)]
#[command(name = "pevgrid", version, about = "Day-ahead PEV charging over a feeder tree")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and report feeder energy margins and the Slater slack.
    Validate { scenario: PathBuf },
    /// Run one strategy and write its trace, profiles and load CSVs.
    Run(RunArgs),
    /// Run all three strategies and write per-strategy CSVs plus a summary.
    Compare(CompareArgs),
    /// Solve a single projection problem.
    Project(ProjectArgs),
    /// Reference solve of a small scenario.
    Oracle(OracleArgs),
    /// Write the desk-scale test scenario.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Penalty,
    PrimalDual,
    Unconstrained,
}

impl From<MethodArg> for MethodName {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Penalty => MethodName::Penalty,
            MethodArg::PrimalDual => MethodName::PrimalDual,
            MethodArg::Unconstrained => MethodName::Unconstrained,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjectionArg {
    Exact,
    Bisection,
}

impl From<ProjectionArg> for ProjectionName {
    fn from(p: ProjectionArg) -> Self {
        match p {
            ProjectionArg::Exact => ProjectionName::Exact,
            ProjectionArg::Bisection => ProjectionName::Bisection,
        }
    }
}

/// Overrides for the scenario's `[method]` section.
#[derive(Args, Default)]
struct MethodArgs {
    /// Step size (penalty and primal-dual).
    #[arg(long)]
    alpha: Option<f64>,
    /// Penalty step as a fraction of its descent bound.
    #[arg(long)]
    step_fraction: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Penalty stopping threshold on the infinity-norm step (kW).
    #[arg(long)]
    tolerance: Option<f64>,
    /// Uniform penalty coefficient for every feeder.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    exponent_offset: Option<f64>,
    #[arg(long, value_enum)]
    projection: Option<ProjectionArg>,
    #[arg(long)]
    bisection_tolerance: Option<f64>,
    /// Slater slack behind the multiplier cap (kW).
    #[arg(long)]
    slack: Option<f64>,
}

impl MethodArgs {
    fn merge(&self, file: Option<&MethodSection>) -> MethodSection {
        let mut m = file.cloned().unwrap_or_default();
        if self.alpha.is_some() || self.step_fraction.is_some() {
            m.alpha = self.alpha;
            m.step_fraction = self.step_fraction;
        }
        m.max_iterations = self.max_iterations.or(m.max_iterations);
        m.tolerance = self.tolerance.or(m.tolerance);
        if let Some(b) = self.beta {
            m.beta = Some(BetaEntry::Uniform(b));
        }
        m.exponent_offset = self.exponent_offset.or(m.exponent_offset);
        m.projection = self.projection.map(Into::into).or(m.projection);
        m.bisection_tolerance = self.bisection_tolerance.or(m.bisection_tolerance);
        m.slack = self.slack.or(m.slack);
        m
    }
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[command(flatten)]
    method_args: MethodArgs,
    /// Output directory [default: the scenario's [output] directory, else pevgrid-out].
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Update PEVs one after another instead of with rayon.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct CompareArgs {
    scenario: PathBuf,
    #[command(flatten)]
    method_args: MethodArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Run the strategies, and the PEV updates inside each, sequentially.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ProjectArgs {
    problem: PathBuf,
    #[arg(long, value_enum)]
    method: Option<ProjectionArg>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleProblem {
    /// Variance objective under hard feeder constraints.
    P,
    /// Variance plus overload cost, no feeder constraints.
    P1,
}

#[derive(Args)]
struct OracleArgs {
    scenario: PathBuf,
    #[arg(long, value_enum, default_value = "p")]
    problem: OracleProblem,
    /// Also search a grid of this spacing (kW); tiny instances only.
    #[arg(long)]
    grid: Option<f64>,
    /// Write the reference profiles to this CSV file.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[command(flatten)]
    method_args: MethodArgs,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = pevgrid::scenario::DESK13_SEED)]
    seed: u64,
    /// PEV count and load scale in (0, 1].
    #[arg(long, default_value_t = pevgrid::scenario::DESK13_SCALE)]
    scale: f64,
    /// Write here instead of standard output.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Validate { scenario } => validate(&scenario),
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
        Command::Project(args) => project(args),
        Command::Oracle(args) => oracle(args),
        Command::Generate(args) => generate(args),
    }
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn output_dir(flag: Option<PathBuf>, loaded: &LoadedScenario) -> PathBuf {
    flag.or_else(|| {
        loaded
            .file
            .output
            .as_ref()
            .and_then(|o| o.directory.as_ref())
            .map(PathBuf::from)
    })
    .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn validate(path: &Path) -> Result<()> {
    let loaded = load_scenario(path)?;
    let net = loaded.scenario.network();
    let report = &loaded.report;
    println!(
        "{}: {} feeders, {} PEVs, {} slots, depth {}",
        path.display(),
        net.num_feeders(),
        loaded.scenario.num_pevs(),
        loaded.scenario.horizon(),
        net.depth_max()
    );
    println!("feeder,headroom_energy_kwh,demand_kwh");
    for f in &report.feeders {
        println!("{},{},{}", f.feeder, f.headroom_energy, f.demand);
    }
    println!(
        "slater_slack = {} kW at feeder `{}` slot {}",
        report.slater_slack,
        report.tightest.0,
        report.tightest.1 + 1
    );
    print_warnings(&report.warnings);
    println!("ok");
    Ok(())
}

fn stamp(trace: &mut pevgrid::trace::RunTrace, path: &Path, loaded: &LoadedScenario) {
    trace.set_meta("scenario", path.display());
    if let Some(seed) = loaded.file.seed {
        trace.set_meta("seed", seed);
    }
}

fn run(args: RunArgs) -> Result<()> {
    let loaded = load_scenario(&args.scenario)?;
    let section = args.method_args.merge(loaded.file.method.as_ref());
    let method: MethodName = match (args.method, section.name) {
        (Some(m), _) => m.into(),
        (None, Some(m)) => m,
        (None, None) => {
            return Err(Error::Config(
                "no method given; pass --method or set `name` in the [method] section".into(),
            ))
        }
    };
    let settings = RunSettings::resolve(&loaded.scenario, &section)?.with_execution(execution(args.sequential));
    print_warnings(&loaded.report.warnings);
    let mut result = run_strategy(&loaded.scenario, &settings, method)?;
    stamp(&mut result.trace, &args.scenario, &loaded);
    let dir = output_dir(args.output, &loaded);
    let written = result.write_outputs(&loaded.scenario, &dir)?;
    if let Some(name) = loaded.file.output.as_ref().and_then(|o| o.trace.as_ref()) {
        fs::copy(&written[3], dir.join(name))?;
    }
    let s = &result.trace.summary;
    print_warnings(&s.warnings);
    println!("method = \"{method}\"");
    println!("iterations = {}", s.iterations);
    println!("converged = {}", s.converged);
    println!("objective = {:e}", s.objective);
    println!("variance = {:e}", result.variance);
    println!("max_normalized_overload = {:e}", result.max_overload);
    println!("max_violation_kw = {:e}", s.max_violation);
    if let Some(m) = s.messages {
        println!("messages = {{ feedback = {}, hops = {}, announcements = {} }}", m.feedback, m.hops, m.announcements);
    }
    println!("wall_time_s = {:.3}", s.wall_time.as_secs_f64());
    println!("output = \"{}\"", dir.display());
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let loaded = load_scenario(&args.scenario)?;
    let section = args.method_args.merge(loaded.file.method.as_ref());
    let exec = execution(args.sequential);
    let settings = RunSettings::resolve(&loaded.scenario, &section)?.with_execution(exec);
    print_warnings(&loaded.report.warnings);
    let mut cmp = run_comparison(&loaded.scenario, &settings, exec)?;
    for s in &mut cmp.strategies {
        stamp(&mut s.trace, &args.scenario, &loaded);
        print_warnings(&s.trace.summary.warnings);
    }
    let dir = output_dir(args.output, &loaded);
    cmp.write_outputs(&loaded.scenario, &dir)?;
    let stdout = io::stdout();
    cmp.write_summary(stdout.lock())?;
    println!("# output = {}", dir.display());
    Ok(())
}

fn project(args: ProjectArgs) -> Result<()> {
    let file = ProjectionFile::parse(&fs::read_to_string(&args.problem)?)?;
    let offsets = file.resolved_offsets()?;
    let problem = ProjectionProblem::new(&offsets, &file.caps, file.demand);
    let mut out = vec![0.0; file.caps.len()];
    let method = args.method.map(ProjectionName::from).or(file.method).unwrap_or(ProjectionName::Exact);
    let mut stdout = io::stdout().lock();
    match method {
        ProjectionName::Exact => {
            let w = project_exact(&problem, &mut out)?;
            writeln!(stdout, "method = \"exact\"")?;
            writeln!(stdout, "level = {:e}", w.level)?;
        }
        ProjectionName::Bisection => {
            let tolerance = args.tolerance.or(file.tolerance).unwrap_or(DEFAULT_BISECTION_TOLERANCE);
            let b = project_binary_search(&problem, tolerance, &mut out)?;
            writeln!(stdout, "method = \"bisection\"")?;
            writeln!(stdout, "level = {:e}", b.level)?;
            writeln!(stdout, "steps = {}", b.steps)?;
            writeln!(stdout, "step_budget = {}", b.step_budget)?;
            writeln!(stdout, "finished_exactly = {}", b.finished_exactly)?;
        }
    }
    let cells: Vec<String> = out.iter().map(|x| format!("{x:e}")).collect();
    writeln!(stdout, "profile = [{}]", cells.join(", "))?;
    writeln!(stdout, "sum = {:e}", out.iter().sum::<f64>())?;
    Ok(())
}

fn write_profiles(path: &Path, scenario: &Scenario, profiles: &Profiles) -> Result<()> {
    let mut text = String::from("pev");
    for t in 1..=scenario.horizon() {
        text.push_str(&format!(",h{t}"));
    }
    text.push('\n');
    for (pev, row) in scenario.pevs().iter().zip(profiles.rows()) {
        text.push_str(&pev.id);
        for x in row {
            text.push_str(&format!(",{x:e}"));
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<()> {
    let loaded = load_scenario(&args.scenario)?;
    let s = &loaded.scenario;
    let config = OracleConfig::default();
    let mut stdout = io::stdout().lock();
    let profiles = match args.problem {
        OracleProblem::P => {
            let sol = oracle_solve_p(s, &config)?;
            writeln!(stdout, "problem = \"P\"")?;
            writeln!(stdout, "objective = {:e}", sol.value)?;
            writeln!(stdout, "max_relative_violation = {:e}", sol.max_relative_violation)?;
            writeln!(stdout, "repair_perturbation = {:e}", sol.repair_perturbation)?;
            writeln!(stdout, "low_confidence = {}", sol.low_confidence)?;
            sol.profiles
        }
        OracleProblem::P1 => {
            let section = args.method_args.merge(loaded.file.method.as_ref());
            let settings = RunSettings::resolve(s, &section)?;
            let sol = oracle_solve_p1(s, &settings.cost, &config)?;
            writeln!(stdout, "problem = \"P1\"")?;
            writeln!(stdout, "objective = {:e}", sol.value)?;
            writeln!(stdout, "converged = {}", sol.converged)?;
            sol.profiles
        }
    };
    if let Some(spacing) = args.grid {
        if !matches!(args.problem, OracleProblem::P) {
            return Err(Error::Config("the grid search solves problem P only".into()));
        }
        let grid = oracle_grid_search(s, spacing, GRID_CANDIDATE_LIMIT)?;
        writeln!(stdout, "grid_spacing = {spacing:e}")?;
        writeln!(stdout, "grid_objective = {:e}", grid.value)?;
        writeln!(stdout, "grid_candidates = {}", grid.candidates)?;
    }
    if let Some(path) = args.profiles {
        write_profiles(&path, s, &profiles)?;
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let file = generate_desk13(args.seed, args.scale)?;
    let text = file.to_toml()?;
    match args.output {
        Some(path) => {
            fs::write(&path, text)?;
            eprintln!("wrote {} ({} PEVs)", path.display(), file.fleet.len());
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
