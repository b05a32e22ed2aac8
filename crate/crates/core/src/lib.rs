//! Simulation and analysis of quantum Fourier models: parameterized circuits
//! whose output, as a function of a scalar input `x`, is a truncated Fourier
//! series with frequencies fixed by the encoding Hamiltonians.

pub mod error;
pub mod rng;
pub mod spectrum;
pub mod circuit;
pub mod haar;
pub mod simulator;
pub mod fourier;
pub mod theory;
pub mod moments;
pub mod trainer;
pub mod cli;

pub use error::{QfmError, Result};
