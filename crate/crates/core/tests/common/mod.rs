#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use cqn::{ArrivalProcess, ModelSpec, RoadSpec};

pub struct Shape {
    pub max_stations: usize,
    pub extra_roads: usize,
    /// Allow zero routing probabilities on non-ring roads.
    pub sparse_routing: bool,
    /// Build the roads from a ring, so the path graph is irreducible.
    pub ring: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Self {
            max_stations: 4,
            extra_roads: 2,
            sparse_routing: false,
            ring: true,
        }
    }
}

/// Random model whose every station has an outgoing and an incoming road.
/// Without `ring` the roads come from two disjoint rings or one ring, so
/// both reducible and irreducible path graphs appear.
pub fn random_spec(seed: u64, shape: &Shape) -> ModelSpec {
    let mut rng = Pcg64::seed_from_u64(seed);
    let n = rng.random_range(2..=shape.max_stations.max(2));
    let (c, k) = if rng.random_bool(0.5) { (1, 2) } else { (2, 3) };
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let split = if !shape.ring && n >= 4 && rng.random_bool(0.5) { n / 2 } else { n };
    for block in [&order[..split], &order[split..]] {
        let len = block.len();
        if len >= 2 {
            for i in 0..len {
                pairs.push((block[i], block[(i + 1) % len]));
            }
        }
    }
    for _ in 0..rng.random_range(0..=shape.extra_roads) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let same_block = (order[..split].contains(&a)) == (order[..split].contains(&b));
        if a != b && same_block && !pairs.contains(&(a, b)) {
            pairs.push((a, b));
        }
    }
    let mut spec = ModelSpec {
        initial_bikes: c,
        capacity: k,
        ..ModelSpec::default()
    };
    for _ in 0..n {
        let m = rng.random_range(1..=2);
        spec.stations
            .push(ArrivalProcess::Rates((0..m).map(|_| rng.random_range(0.5..8.0)).collect()));
    }
    for &(from, to) in &pairs {
        spec.roads.push(RoadSpec {
            from,
            to,
            mu: rng.random_range(0.5..5.0),
            xi: rng.random_range(0.5..5.0),
        });
    }
    for i in 0..n {
        let out: Vec<(usize, usize)> = pairs.iter().copied().filter(|&(a, _)| a == i).collect();
        let mut draw = |may_zero: bool| -> Vec<f64> {
            (0..out.len())
                .map(|idx| {
                    if may_zero && idx > 0 && rng.random_bool(0.3) {
                        0.0
                    } else {
                        rng.random_range(0.1..1.0)
                    }
                })
                .collect()
        };
        let wp = draw(shape.sparse_routing);
        let mut wa = draw(shape.sparse_routing);
        for (a, p) in wa.iter_mut().zip(&wp) {
            if *p == 0.0 && *a == 0.0 {
                *a = 0.5;
            }
        }
        for (table, w) in [(&mut spec.first_ride, &wp), (&mut spec.retrial, &wa)] {
            let total: f64 = w.iter().sum();
            for (idx, &ij) in out.iter().enumerate() {
                table.insert(ij, w[idx] / total);
            }
        }
    }
    spec
}

pub fn random_pi(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = Pcg64::seed_from_u64(seed ^ 0x5EED);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}
