//! Simulation library for optically detected magnetic resonance of NV⁻/P1
//! spin ensembles in diamond near the NV level anti-crossing: spin
//! Hamiltonians, the multiphoton-resonance atlas, the driven Bloch–cavity
//! model with its closed-form steady state, cavity coupling from field maps,
//! and (B_S, f_LA) sweeps.
//!
//! Internally every frequency is angular (rad/s) and every field is in
//! tesla. MHz, mT and degrees only appear at the config/output boundary
//! (see [`units`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atlas;
pub mod bessel;
pub mod bloch;
pub mod config;
pub mod constants;
pub mod coupling;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod ode;
pub mod output;
pub mod run;
pub mod spin;
pub mod sweep;
pub mod units;

pub use constants::PhysicalConstants;
pub use error::{Error, Result};
