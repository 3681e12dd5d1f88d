//! Day-ahead PEV charging over a tree distribution network with feeder
//! overload control.

pub mod compare;
pub mod coordinator;
pub mod error;
mod kernel;
pub mod network;
pub mod oracle;
pub mod par;
pub mod penalty;
pub mod primal_dual;
pub mod projection;
pub mod scenario;
pub mod trace;

pub use error::{Error, Result};
pub use kernel::FeasibilityAudit;
pub use network::{Network, Pev, PevSpec, Profiles, Scenario};
pub use par::Execution;
