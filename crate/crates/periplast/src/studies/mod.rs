//! Configuration-driven studies: quasistatic simulation, horizon sweeps
//! against the local reference, pointwise energy convergence, Korn-constant
//! estimation, and the self-verification suite.

pub mod config;
pub mod energy_conv;
pub mod korn;
pub mod manufactured;
pub mod report;
pub mod simulate;
pub mod sweep;
pub mod verify;

pub use config::{CollarConfig, GridConfig, KernelConfig, LoadConfig, StudyConfig};
pub use energy_conv::{pointwise_energy_convergence_study, EnergyConvergenceReport};
pub use korn::{korn_constant_study, KornReport};
pub use report::RunManifest;
pub use simulate::{simulate_study, SimulateReport};
pub use sweep::{delta_sweep_study, ConvergenceReport};
pub use verify::{verify_suite, VerifyReport};
