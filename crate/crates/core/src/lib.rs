//! Lattice amplitudes built from consistency rules.
//!
//! Idealized experiments ([`setup::Setup`]) are combined with `and`
//! (succession) and `or` (merging filter holes). Amplitudes are assigned so
//! that `or` maps to addition and `and` to multiplication; independent
//! evaluation routes for one setup are checked against each other. The crate
//! also covers wave function evolution, the concentration argument behind
//! `p = |A_k|^2`, and numerical recovery of additive regrades for
//! associative operations.

pub mod amplitude;
pub mod born;
pub mod composite;
pub mod error;
pub mod evolution;
pub mod lattice;
pub mod regrade;
pub mod setup;

pub use amplitude::{amplitude, amplitude_bruteforce, consistency_check, Amplitude, EvalStrategy};
pub use error::{Error, Result};
pub use lattice::{Event, Kernel, LatticeConfig, WaveFunction};
pub use setup::{FilterSpec, Setup};

pub use num_complex::Complex64;
