//! Clonal selection with immunological memory cells generated by a
//! restricted Boltzmann machine.
//!
//! The crate is split along the pipeline:
//!
//! * [`dataset`] loads images and manifests, standardizes features and
//!   generates the synthetic stand-in data.
//! * [`rbm`] holds the RBM itself, CD-1 training, free-energy monitoring and
//!   the exact enumeration oracles used to validate the learning rule.
//! * [`immune`] is the clonal selection engine (hypermutation, receptor
//!   editing, suppression).
//! * [`memory`] clusters antibodies into memory cells and trains their
//!   perceptrons.
//! * [`classifier`] ties everything together: the softmax head, RBM-backed
//!   memory cells, the perceptron baseline and the evaluation report.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod immune;
pub mod memory;
pub mod rbm;
pub mod rng;
mod textio;

pub use error::{Error, Result};

/// Euclidean distance between two equal-length slices.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distance divided by `sqrt(len)`, so thresholds do not depend on
/// the vector length.
pub fn normalized_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    euclidean(a, b) / (a.len() as f64).sqrt()
}
