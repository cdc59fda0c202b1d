//! Shared fixtures for the solver benchmarks.

use mrrce::model::{to_transformed, TransformedProblem};
use mrrce::{simulate, Dataset, ErrorStructure, SimConfig};

/// A centered dataset of the given shape with equicorrelated coefficients.
pub fn fixture(n: usize, p: usize, q: usize, seed: u64) -> Dataset {
    let cfg = SimConfig {
        n,
        p,
        q,
        rho: 0.6,
        sigma: 1.0,
        s: 0.2,
        s_g: 0.0,
        rho_z: 0.7,
        error_structure: ErrorStructure::Fgn { hurst: 0.95 },
        seed,
    };
    simulate(&cfg).expect("valid fixture config").data.centered().expect("n >= 2")
}

pub fn transformed_fixture(n: usize, p: usize, q: usize, seed: u64) -> TransformedProblem {
    to_transformed(&fixture(n, p, q, seed)).expect("fixture transforms")
}
