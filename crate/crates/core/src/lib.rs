//! Kernel density coresets by discrepancy halving.
//!
//! Datasets are colored with a kernelized Gram-Schmidt walk, one color class
//! is kept, and the process repeats until the target size is reached. The
//! sup-norm error between the full and reduced kernel density estimates is
//! measured along the way.

pub mod bench;
pub mod config;
pub mod coreset;
pub mod dataset;
pub mod discrepancy;
pub mod error;
pub mod gsw;
pub mod kernels;
pub mod report;
pub mod rng;

pub use dataset::{load_dataset, parse_dataset, write_binary, write_csv, DataSet, Domain};
pub use error::{Error, Result};
pub use gsw::{gram_schmidt_walk, signed_sum_norm, subgaussian_diagnostic, Coloring, ColoringAlgorithm, GramOracle};
pub use kernels::{KernelFamily, KernelSpec, PreparedPoints, RadialProfile};
