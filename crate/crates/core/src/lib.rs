pub mod bounds;
pub mod cli;
pub mod config;
pub mod discretize;
pub mod error;
pub mod field;
pub mod grid;
pub mod ids;
pub mod impurity;
pub mod lattice;
pub mod model;
pub mod plot;
pub mod quad;
pub mod records;
pub mod rmeasure;
pub mod rng;
pub mod sparse;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
