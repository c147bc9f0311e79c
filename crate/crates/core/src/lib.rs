//! Numerical laboratory for spherically symmetric SU(2) instantons on the
//! Euclidean Schwarzschild manifold, built from Abelian vortices on the base
//! surface via the Kazdan-Warner equation.

pub mod background;
pub mod config;
pub mod error;
pub mod geometry;
pub mod instanton;
pub mod moduli;
pub mod run;
pub mod snapshot;
pub mod solver;
pub mod vortex;

pub use error::{Error, Result};
