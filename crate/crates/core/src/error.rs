use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed topology: {0}")]
    MalformedTopology(String),

    #[error("feeder `{feeder}`: capacity {capacity} kW does not exceed peak base load {peak} kW")]
    CapacityInfeasible {
        feeder: String,
        capacity: f64,
        peak: f64,
    },

    #[error("pev `{pev}`: invalid charging window [{start}, {finish}] for horizon {horizon}")]
    InvalidWindow {
        pev: String,
        start: usize,
        finish: usize,
        horizon: usize,
    },

    #[error("pev `{pev}`: {reason}")]
    InvalidPev { pev: String, reason: String },

    /// The demand cannot be met by any profile inside the box.
    #[error("no feasible profile: demand {demand} kWh outside [0, {capacity}] kWh")]
    NoSolution { demand: f64, capacity: f64 },

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    /// Raised when an invariant the theory guarantees is observed to fail at runtime.
    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for problems with the input (files, parameters, scenario data)
    /// rather than failures while solving.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedTopology(_)
                | Error::CapacityInfeasible { .. }
                | Error::InvalidWindow { .. }
                | Error::InvalidPev { .. }
                | Error::InfeasibleScenario(_)
                | Error::Config(_)
                | Error::Parse(_)
        )
    }
}
