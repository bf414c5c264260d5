//! Simulation library for noise-induced entanglement effects in small XY
//! Heisenberg chains (2 to 4 qubits) under a Markovian master equation with a
//! classical-noise double commutator.
//!
//! The crate is organized around the pipeline
//!
//! ```text
//! operators -> dynamics -> states -> entanglement -> experiments -> cli
//! ```
//!
//! `operators` builds spin operators, the XY Hamiltonian and the noise
//! coupling; `dynamics` integrates the master equation (fixed-step RK4) and
//! provides an independent vectorized-Liouvillian / matrix-exponential oracle;
//! `states` holds the catalog of initial preparations and the partial trace;
//! `entanglement` computes concurrence, sudden-death times and first-cycle
//! areas; `experiments` sweeps noise strength, placement, temperature and
//! anisotropy and classifies the response curves; `cli` is the command-line
//! front end.

pub mod cli;
pub mod dynamics;
pub mod entanglement;
pub mod experiments;
pub mod linalg;
pub mod operators;
pub mod states;

pub use num_complex::Complex64 as C64;

/// Crate version string, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Unified error type across all modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid preparation: {0}")]
    InvalidPreparation(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("not an X state: off-pattern entry ({row},{col}) has magnitude {magnitude:.3e}")]
    NonXState { row: usize, col: usize, magnitude: f64 },
    #[error("integration diverged at t={t}: {what}")]
    IntegrationDiverged { t: f64, what: String },
    #[error("trace never exceeds the threshold; use the area measure for product states")]
    NeverEntangled,
    #[error("insufficient data: {have} uncensored points, need at least {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("sweep failed at grid point M={m}: {source}")]
    SweepPoint {
        m: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
