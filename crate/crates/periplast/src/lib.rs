//! Solvers and studies for quasistatic linearized elastoplasticity in the
//! peridynamic (nonlocal) formulation.
//!
//! The crate discretizes a box domain by cell collocation, builds radial
//! interaction kernels with a finite horizon, evaluates the nonlocal strain
//! and divergence operators, and drives the rate-independent evolution by
//! time-incremental energy minimization. A classical local elastoplastic
//! solver on the same grid serves as the reference for horizon-localization
//! studies, and every run can audit the energetic-solution structure
//! (global stability, energy balance, dissipation bookkeeping).
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --release --example kernel_families
//! cargo run --release --example nonlocal_operators
//! cargo run --release --example incremental_step
//! cargo run --release --example quasistatic_run
//! cargo run --release --example localization_sweep
//! cargo run --release --example energy_convergence
//! cargo run --release --example korn_study
//! ```
//!
//! The `periplast` binary exposes the same studies behind a config-driven
//! CLI (`simulate`, `sweep-delta`, `energy-convergence`, `korn`, `verify`).

pub mod dev;
pub mod driver;
pub mod energy;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod local;
pub mod ops;
pub mod prox;
pub mod rng;
pub mod solver;
pub mod studies;

pub use energy::{dissipation_h, lame_convert, LoadProgram, MaterialParams};
pub use grid::{build_grid, CollarSpec, Grid};
pub use kernel::{build_neighbor_table, make_kernel, Kernel, KernelFamily, NeighborTable, TableMode};
pub use ops::{
    nonlocal_divergence, nonlocal_divergence_plastic, pair_strain, pair_strain_plastic,
    plastic_moment, seminorms, SeminormReport, State,
};
pub use solver::{Certificate, NonlocalSystem, SolverConfig};
