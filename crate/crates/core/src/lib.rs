pub mod cli;
pub mod config;
pub mod conormal;
pub mod cutoff;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod io;
pub mod operators;
pub mod pressure;
pub mod surface;
pub mod viscous;

pub use error::{Error, Result};
