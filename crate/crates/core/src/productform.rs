//! Product-form stationary distribution over the enumerated state space.
//!
//! The unnormalised weight of a state is the product of one factor per
//! station and one per road. Everything is evaluated in log space and the
//! normalisation constant is accumulated with a running-max rescaling, so
//! fleets well beyond the range of `f64` factorials stay finite.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::model::BikeShareModel;
use crate::routing::{build_routing_matrix, solve_relative_rates, RelativeArrivalRates};
use crate::statespace::{enumerate_states, NetworkState, StateLayout, StateWalker};

/// Which road factor to use.
///
/// `Multinomial` is `((m1+m2)!/(m1! m2!)) (e1/(m1 mu))^m1 (e2/(m2 xi))^m2` with a
/// zero count contributing 1. `Bcmp` is the classical infinite-server term
/// `(e1/mu)^m1/m1! * (e2/xi)^m2/m2!`. The two agree when `m1, m2 <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadFactorConvention {
    #[default]
    Multinomial,
    Bcmp,
}

impl fmt::Display for RoadFactorConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoadFactorConvention::Multinomial => "multinomial",
            RoadFactorConvention::Bcmp => "bcmp",
        })
    }
}

impl FromStr for RoadFactorConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(Self::Multinomial),
            "bcmp" => Ok(Self::Bcmp),
            other => Err(Error::Config(format!(
                "unknown road factor convention {other:?} (expected multinomial or bcmp)"
            ))),
        }
    }
}

fn ln_fact(k: u32) -> f64 {
    ln_factorial(u64::from(k))
}

/// `ln H(n_i)`: log multinomial over phases plus `sum_v n_v ln(e / lambda_v)`.
pub fn log_station_factor(counts: &[u32], e: f64, lambda: &[f64]) -> f64 {
    let total: u32 = counts.iter().sum();
    let mut acc = ln_fact(total);
    for (&n, &l) in counts.iter().zip(lambda) {
        if n > 0 {
            acc += f64::from(n) * (e / l).ln() - ln_fact(n);
        }
    }
    acc
}

pub fn station_factor(counts: &[u32], e: f64, lambda: &[f64]) -> f64 {
    log_station_factor(counts, e, lambda).exp()
}

#[allow(clippy::too_many_arguments)]
pub fn log_road_factor(
    convention: RoadFactorConvention,
    m1: u32,
    m2: u32,
    e1: f64,
    e2: f64,
    mu: f64,
    xi: f64,
) -> f64 {
    match convention {
        RoadFactorConvention::Multinomial => {
            let mut acc = ln_fact(m1 + m2) - ln_fact(m1) - ln_fact(m2);
            if m1 > 0 {
                acc += f64::from(m1) * (e1 / (f64::from(m1) * mu)).ln();
            }
            if m2 > 0 {
                acc += f64::from(m2) * (e2 / (f64::from(m2) * xi)).ln();
            }
            acc
        }
        RoadFactorConvention::Bcmp => {
            let mut acc = 0.0;
            if m1 > 0 {
                acc += f64::from(m1) * (e1 / mu).ln() - ln_fact(m1);
            }
            if m2 > 0 {
                acc += f64::from(m2) * (e2 / xi).ln() - ln_fact(m2);
            }
            acc
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn road_factor(
    convention: RoadFactorConvention,
    m1: u32,
    m2: u32,
    e1: f64,
    e2: f64,
    mu: f64,
    xi: f64,
) -> f64 {
    log_road_factor(convention, m1, m2, e1, e2, mu, xi).exp()
}

/// Evaluates the log weight of flat state coordinates.
#[derive(Debug, Clone)]
struct Weights {
    layout: StateLayout,
    convention: RoadFactorConvention,
    /// `ln(e_i / lambda_v)` per station coordinate.
    station_log: Vec<f64>,
    /// `[ln(e1/mu), ln(e2/xi)]` per road.
    road_log: Vec<[f64; 2]>,
    /// `ln k!` for `k = 0..=fleet`.
    ln_fact: Vec<f64>,
}

impl Weights {
    fn new(
        model: &BikeShareModel,
        rates: &RelativeArrivalRates,
        convention: RoadFactorConvention,
    ) -> Self {
        let layout = StateLayout::from_model(model);
        let station_log = model
            .stations()
            .iter()
            .zip(&rates.station)
            .flat_map(|(s, &e)| s.rates.lambda.iter().map(move |&l| (e / l).ln()))
            .collect();
        let road_log = model
            .roads()
            .iter()
            .zip(&rates.road)
            .map(|(r, e)| [(e[0] / r.mu).ln(), (e[1] / r.xi).ln()])
            .collect();
        let ln_fact = (0..=model.fleet()).map(ln_fact).collect();
        Self {
            layout,
            convention,
            station_log,
            road_log,
            ln_fact,
        }
    }

    fn log_weight(&self, coords: &[u32]) -> f64 {
        let lf = &self.ln_fact;
        let mut acc = 0.0;
        for i in 0..self.layout.station_count() {
            let range = self.layout.station_range(i);
            let mut total = 0;
            for k in range {
                let n = coords[k];
                if n > 0 {
                    total += n;
                    acc += f64::from(n) * self.station_log[k] - lf[n as usize];
                }
            }
            acc += lf[total as usize];
        }
        let base = self.layout.station_dims();
        for (r, logs) in self.road_log.iter().enumerate() {
            let m1 = coords[base + 2 * r];
            let m2 = coords[base + 2 * r + 1];
            match self.convention {
                RoadFactorConvention::Multinomial => {
                    acc += lf[(m1 + m2) as usize] - lf[m1 as usize] - lf[m2 as usize];
                    if m1 > 0 {
                        let m = f64::from(m1);
                        acc += m * (logs[0] - m.ln());
                    }
                    if m2 > 0 {
                        let m = f64::from(m2);
                        acc += m * (logs[1] - m.ln());
                    }
                }
                RoadFactorConvention::Bcmp => {
                    // Guarded so an unvisited class (log rate -inf) with no
                    // bikes contributes 1, not NaN.
                    if m1 > 0 {
                        acc += f64::from(m1) * logs[0] - lf[m1 as usize];
                    }
                    if m2 > 0 {
                        acc += f64::from(m2) * logs[1] - lf[m2 as usize];
                    }
                }
            }
        }
        acc
    }
}

/// Weighted sums over the state space, all held relative to a common
/// `exp(shift)` that tracks the largest log weight seen so far.
#[derive(Debug, Clone)]
struct Sweep {
    shift: f64,
    total: f64,
    station: Vec<Vec<f64>>,
    road: Vec<[f64; 2]>,
}

impl Sweep {
    fn new(layout: &StateLayout) -> Self {
        Self {
            shift: f64::NEG_INFINITY,
            total: 0.0,
            station: vec![vec![0.0; layout.capacity() as usize + 1]; layout.station_count()],
            road: vec![[0.0; 2]; layout.road_count()],
        }
    }

    fn rescale(&mut self, new_shift: f64) {
        let f = (self.shift - new_shift).exp();
        self.total *= f;
        self.station.iter_mut().flatten().for_each(|x| *x *= f);
        self.road.iter_mut().flatten().for_each(|x| *x *= f);
        self.shift = new_shift;
    }

    fn add(&mut self, layout: &StateLayout, coords: &[u32], log_w: f64) {
        if log_w == f64::NEG_INFINITY {
            return;
        }
        if log_w > self.shift {
            self.rescale(log_w);
        }
        let w = (log_w - self.shift).exp();
        self.total += w;
        for (i, marg) in self.station.iter_mut().enumerate() {
            let t: u32 = coords[layout.station_range(i)].iter().sum();
            marg[t as usize] += w;
        }
        let base = layout.station_dims();
        for (r, acc) in self.road.iter_mut().enumerate() {
            acc[0] += f64::from(coords[base + 2 * r]) * w;
            acc[1] += f64::from(coords[base + 2 * r + 1]) * w;
        }
    }
}

/// Product form evaluated at one set of relative arrival rates, with the
/// normalisation constant, station marginals and road means from a single
/// pass over the state space.
#[derive(Debug, Clone)]
pub struct ProductFormContext {
    weights: Weights,
    rates: RelativeArrivalRates,
    log_g: f64,
    state_count: u128,
    station_marginals: Vec<Vec<f64>>,
    road_means: Vec<[f64; 2]>,
}

impl ProductFormContext {
    pub fn new(
        model: &BikeShareModel,
        rates: RelativeArrivalRates,
        convention: RoadFactorConvention,
        max_states: u128,
    ) -> Result<Self> {
        if rates.station.len() != model.station_count() {
            return Err(Error::Dimension {
                expected: model.station_count(),
                found: rates.station.len(),
            });
        }
        if rates.road.len() != model.roads().len() {
            return Err(Error::Dimension {
                expected: model.roads().len(),
                found: rates.road.len(),
            });
        }
        let weights = Weights::new(model, &rates, convention);
        let mut walker = enumerate_states(model, max_states)?;
        let mut sweep = Sweep::new(&weights.layout);
        let mut count: u128 = 0;
        while let Some(coords) = walker.next_coords() {
            sweep.add(&weights.layout, coords, weights.log_weight(coords));
            count += 1;
        }
        let log_g = sweep.shift + sweep.total.ln();
        let station_marginals = sweep
            .station
            .iter()
            .map(|m| m.iter().map(|x| x / sweep.total).collect())
            .collect();
        let road_means = sweep
            .road
            .iter()
            .map(|[a, b]| [a / sweep.total, b / sweep.total])
            .collect();
        Ok(Self {
            weights,
            rates,
            log_g,
            state_count: count,
            station_marginals,
            road_means,
        })
    }

    /// Builds the routing matrix at `pi`, solves the traffic equations and
    /// evaluates the product form.
    pub fn at(
        model: &BikeShareModel,
        pi: &[f64],
        convention: RoadFactorConvention,
        max_states: u128,
    ) -> Result<Self> {
        let rates = solve_relative_rates(&build_routing_matrix(model, pi)?)?;
        Self::new(model, rates, convention, max_states)
    }

    pub fn log_g(&self) -> f64 {
        self.log_g
    }

    pub fn rates(&self) -> &RelativeArrivalRates {
        &self.rates
    }

    pub fn convention(&self) -> RoadFactorConvention {
        self.weights.convention
    }

    pub fn layout(&self) -> &StateLayout {
        &self.weights.layout
    }

    pub fn state_count(&self) -> u128 {
        self.state_count
    }

    /// Unnormalised log weight of a state; `None` outside the state space.
    pub fn log_weight(&self, state: &NetworkState) -> Option<f64> {
        let coords = self.weights.layout.to_coords(state)?;
        self.weights
            .layout
            .contains(&coords)
            .then(|| self.weights.log_weight(&coords))
    }

    /// Stationary probability of `state`; exactly 0 outside the state space.
    pub fn joint_probability(&self, state: &NetworkState) -> f64 {
        self.log_weight(state)
            .map_or(0.0, |lw| (lw - self.log_g).exp())
    }

    /// Distribution of the number of bikes parked at `station`, over `0..=K`.
    pub fn station_marginal(&self, station: usize) -> &[f64] {
        &self.station_marginals[station]
    }

    /// Mean number of `class` riders on road `road` (`0` first, `1` retrial).
    pub fn road_mean(&self, road: usize, class: usize) -> f64 {
        self.road_means[road][class]
    }

    /// Fresh walk over the same state space.
    pub fn states(&self) -> StateWalker {
        StateWalker::new(self.weights.layout.clone())
    }
}

/// `ln G`, the log of the sum of unnormalised weights over the state space.
pub fn normalization_constant(
    model: &BikeShareModel,
    rates: &RelativeArrivalRates,
    convention: RoadFactorConvention,
    max_states: u128,
) -> Result<f64> {
    Ok(ProductFormContext::new(model, rates.clone(), convention, max_states)?.log_g())
}
