//! Model families of tunable size for the benchmarks.

use cqn::catalog;
use cqn::{validate_model, BikeShareModel};

/// The two-station reference instance at its first row.
pub fn reference_model() -> BikeShareModel {
    validate_model(&catalog::example_four(5.0)).expect("catalog model is valid")
}

/// Directed ring of `n` stations, one bike each, two docks.
pub fn ring(n: usize) -> BikeShareModel {
    validate_model(&catalog::symmetric_ring(n)).expect("catalog model is valid")
}
