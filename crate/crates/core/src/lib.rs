//! Priority-preserving social scheduling.
//!
//! Agents report a valuation for each capacity-limited slot of a period. The
//! mechanism picks a welfare-maximizing allocation (a minimum-cost b-matching
//! solved by successive shortest paths) and charges every agent a waiting
//! delay equal to the welfare it costs the others (Clarke pivot). The crate
//! also ships the baselines, metrics, instance generators and the multi-day
//! simulation used by the experiment CLI.
//!
//! ```
//! use slotsched::{run_period, Instance, MechanismConfig};
//!
//! let instance = Instance::new(2, 1, vec![vec![51.0, 50.0], vec![50.0, 0.0]]).unwrap();
//! let outcome = run_period(&instance, &MechanismConfig::default()).unwrap();
//! assert_eq!(outcome.welfare(), 100.0);
//! assert_eq!(outcome.delays(), &[0.0, 1.0]);
//! ```

pub mod baselines;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod mechanism;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod simgen;
pub mod solver;
pub mod types;

pub use error::{Error, Result};
pub use exec::Execution;
pub use mechanism::{delay_for_agent, run_period, MechanismConfig};
pub use types::{payoff, validate, welfare, Allocation, Assignment, Instance, Outcome, Payoff, Violation};
