//! Simulator and feasibility calculator for a ¹⁷¹Yb optical-lattice quantum
//! computer: level structure, dipole couplings, gradient addressing and
//! pulse-level simulation of the gate and measurement protocols.

pub mod addressing;
pub mod atomic;
pub mod constants;
pub mod dipole;
pub mod error;
pub mod feasibility;
pub mod pulse;

pub use addressing::{GradientConfig, LatticeGeometry, Site};
pub use atomic::{AtomParams, Branch, HalfInt, LevelLabel};
pub use error::{Error, Result};
