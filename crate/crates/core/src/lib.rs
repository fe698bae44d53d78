//! Mass-critical collapse of planar Bose-Einstein condensates with singular
//! trapping potentials and Newtonian self-attraction.

pub mod asymptotics;
pub mod cli;
pub mod config;
pub mod energy;
pub mod error;
pub mod gravity;
pub mod grid;
pub mod groundstate;
pub mod io;
pub mod minimizer;
pub mod potentials;
pub mod quadrature;
mod spectral;
pub mod verify;

pub use error::{Error, Result};
