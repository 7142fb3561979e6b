//! Reference topologies used by the tests, benches and fixture files.
//!
//! All constructors return unvalidated [`ModelSpec`]s with zero-based station
//! ids. Station `i` here is station `i + 1` in one-based configuration files.

use std::collections::BTreeMap;

use crate::model::{ArrivalProcess, ModelSpec, RoadSpec};

fn spec(
    initial_bikes: u32,
    capacity: u32,
    lambdas: Vec<Vec<f64>>,
    roads: Vec<(usize, usize, f64, f64, f64, f64)>,
) -> ModelSpec {
    let mut first_ride = BTreeMap::new();
    let mut retrial = BTreeMap::new();
    let roads = roads
        .into_iter()
        .map(|(from, to, mu, xi, p, alpha)| {
            first_ride.insert((from, to), p);
            retrial.insert((from, to), alpha);
            RoadSpec { from, to, mu, xi }
        })
        .collect();
    ModelSpec {
        initial_bikes,
        capacity,
        stations: lambdas.into_iter().map(ArrivalProcess::Rates).collect(),
        roads,
        first_ride,
        retrial,
    }
}

/// Two stations joined by roads in both directions, with the rates of the
/// two-station reference instance at its first row.
pub fn example_one(initial_bikes: u32, capacity: u32) -> ModelSpec {
    spec(
        initial_bikes,
        capacity,
        vec![vec![5.0, 7.0], vec![5.0, 5.0]],
        vec![(0, 1, 2.0, 4.0, 1.0, 1.0), (1, 0, 3.0, 5.0, 1.0, 1.0)],
    )
}

/// Two-station instance with `C = 2`, `K = 3`, two phases,
/// `lambda_1 = (first_phase_rate, 7)`, `lambda_2 = (5, 5)`,
/// `mu = (2, 3)` and `xi = (4, 5)`.
pub fn example_four(first_phase_rate: f64) -> ModelSpec {
    let mut s = example_one(2, 3);
    s.stations[0] = ArrivalProcess::Rates(vec![first_phase_rate, 7.0]);
    s
}

/// Published reference rows for the two-station instance: `(lambda_1^(1), pi_1K, pi_2K)`.
pub const REFERENCE_ROWS: [(f64, f64, f64); 5] = [
    (5.0, 0.10434, 0.14143),
    (6.0, 0.08609, 0.14502),
    (7.0, 0.07609, 0.14815),
    (8.0, 0.06424, 0.14961),
    (9.0, 0.05734, 0.15116),
];

/// Directed three-station ring `1 -> 2 -> 3 -> 1`.
pub fn example_two() -> ModelSpec {
    spec(
        1,
        2,
        vec![vec![4.0, 6.0], vec![3.0, 5.0], vec![6.0, 2.0]],
        vec![
            (0, 1, 2.0, 4.0, 1.0, 1.0),
            (1, 2, 3.0, 5.0, 1.0, 1.0),
            (2, 0, 2.5, 3.5, 1.0, 1.0),
        ],
    )
}

/// Three-station line `1 <-> 2 <-> 3`; station 2 splits first rides with
/// `p_{2,1} = p21` and retrials with `alpha_{2,1} = alpha21`.
pub fn example_three(p21: f64, alpha21: f64) -> ModelSpec {
    spec(
        1,
        2,
        vec![vec![4.0, 6.0], vec![3.0, 5.0], vec![6.0, 2.0]],
        vec![
            (0, 1, 2.0, 4.0, 1.0, 1.0),
            (1, 0, 3.0, 5.0, p21, alpha21),
            (1, 2, 2.5, 3.5, 1.0 - p21, 1.0 - alpha21),
            (2, 1, 1.5, 4.5, 1.0, 1.0),
        ],
    )
}

/// `example_one` without the return road, so station 2 is a sink.
pub fn one_way_pair() -> ModelSpec {
    let mut s = example_one(2, 3);
    s.roads.retain(|r| r.from == 0);
    s.first_ride.remove(&(1, 0));
    s.retrial.remove(&(1, 0));
    s
}

/// Two identical stations with identical roads in both directions.
pub fn symmetric_pair() -> ModelSpec {
    spec(
        2,
        3,
        vec![vec![4.0, 6.0], vec![4.0, 6.0]],
        vec![(0, 1, 2.0, 4.0, 1.0, 1.0), (1, 0, 2.0, 4.0, 1.0, 1.0)],
    )
}

/// `n` identical stations on a directed ring.
pub fn symmetric_ring(n: usize) -> ModelSpec {
    spec(
        1,
        2,
        vec![vec![3.0, 5.0]; n],
        (0..n).map(|i| (i, (i + 1) % n, 2.0, 3.0, 1.0, 1.0)).collect(),
    )
}
