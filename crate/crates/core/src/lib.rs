//! Multi-trait Gaussian Bayesian networks over SNP genotypes and quantitative
//! phenotypes: structure and parameter learning, exact and Monte Carlo
//! inference, cross-validated prediction, network averaging, and the
//! correspondence with multivariate GBLUP.

pub mod averaging;
pub mod cli;
pub mod data;
pub mod dot;
pub mod error;
pub mod format;
pub mod frame;
pub mod gblup;
pub mod graph;
pub mod inference;
mod linalg;
pub mod model_file;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod structure;

pub use error::{Error, Result};
