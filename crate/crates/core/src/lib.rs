//! Desk-scale laboratory for pseudorandom quantum authentication.
//!
//! The crate is organised bottom-up:
//!
//! * [`qcore`] dense density-matrix algebra, channels and metrics
//! * [`ensembles`] keyed and random unitary samplers
//! * [`moments`] exact Weingarten-calculus oracles
//! * [`pqas`] the authentication scheme and its Monte Carlo checks
//! * [`attacks`] adversary games and meta-information probes
//! * [`primitives`] VPRDM, OWSG and EFI constructions
//! * [`harness`] configuration, seeding, experiments and record emission
//!
//! Register order is always (message, tag, mixed) and qubit 0 is the most
//! significant bit of a basis index.

pub mod attacks;
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod moments;
pub mod pqas;
pub mod primitives;
pub mod qcore;
pub mod stats;

#[cfg(test)]
mod proptests;

pub use error::{Error, Result};
pub use qcore::{
    CMatrix, DensityMatrix, KrausChannel, PureState, QuantumChannel, QubitPartition,
    UnitaryMatrix, C64,
};
pub use ensembles::{ScramblerMode, ScramblerSpec, SecretKey};
pub use stats::Estimate;
