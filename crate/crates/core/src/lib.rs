//! Simulation and verification toolkit for the nonlocal two-phase Stefan
//! problem `u_t = J * G(u) - G(u)` with `G(u) = sign(u) (|u| - 1)_+`.
//!
//! The crate is organised bottom-up: [`grid`] and [`kernel`] provide the
//! discretization, [`graph`] the enthalpy-temperature relation,
//! [`evolution`] the time stepping, and [`diagnostics`], [`asymptotics`]
//! and [`phaseloss`] the structural checks and long-time theory built on top.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod graph;
pub mod grid;
pub mod kernel;
pub mod phaseloss;

pub use error::{Error, Result};
pub use evolution::{SimConfig, StopRule, Trajectory};
pub use graph::{Graph, GraphParams};
pub use grid::{Field, Grid, NodeSet};
pub use kernel::{DiscreteKernel, KernelSpec, Profile};
