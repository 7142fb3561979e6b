//! System description: stations, roads, arrival processes and validation.
//!
//! Stations are identified by zero-based indices internally. A station's user
//! arrivals are either a full Markovian arrival process `(C, D)` or just the
//! per-phase stationary arrival rates, which is all the product form needs.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{MapError, ValidationErrors, Violation};
use crate::pathgraph::is_strongly_connected;

/// Row-sum tolerance for routing probabilities.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// Relative tolerance on the generator property `(C + D) e = 0`.
const GENERATOR_TOL: f64 = 1e-9;

/// An irreducible Markovian arrival process with hidden-transition matrix `C`
/// and arrival-transition matrix `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapDescriptor {
    hidden: DMatrix<f64>,
    arrival: DMatrix<f64>,
}

impl MapDescriptor {
    pub fn new(hidden: DMatrix<f64>, arrival: DMatrix<f64>) -> Result<Self, MapError> {
        let m = hidden.nrows();
        if m == 0 {
            return Err(MapError::InvalidDescriptor("zero phases".into()));
        }
        if hidden.ncols() != m || arrival.nrows() != m || arrival.ncols() != m {
            return Err(MapError::InvalidDescriptor(format!(
                "C is {}x{} and D is {}x{}; both must be square of the same order",
                hidden.nrows(),
                hidden.ncols(),
                arrival.nrows(),
                arrival.ncols()
            )));
        }
        if hidden.iter().chain(arrival.iter()).any(|x| !x.is_finite()) {
            return Err(MapError::InvalidDescriptor("non-finite entry".into()));
        }
        for r in 0..m {
            for c in 0..m {
                if r != c && hidden[(r, c)] < 0.0 {
                    return Err(MapError::InvalidDescriptor(format!(
                        "C[{r}][{c}] = {} is negative off the diagonal",
                        hidden[(r, c)]
                    )));
                }
                if arrival[(r, c)] < 0.0 {
                    return Err(MapError::InvalidDescriptor(format!(
                        "D[{r}][{c}] = {} is negative",
                        arrival[(r, c)]
                    )));
                }
            }
            let row_sum: f64 = (0..m).map(|c| hidden[(r, c)] + arrival[(r, c)]).sum();
            let scale = hidden[(r, r)].abs().max(1.0);
            if row_sum.abs() > GENERATOR_TOL * scale {
                return Err(MapError::InvalidDescriptor(format!(
                    "row {r} of C + D sums to {row_sum:e}, not 0"
                )));
            }
        }
        let adjacency: Vec<Vec<usize>> = (0..m)
            .map(|r| {
                (0..m)
                    .filter(|&c| c != r && hidden[(r, c)] + arrival[(r, c)] > 0.0)
                    .collect()
            })
            .collect();
        if !is_strongly_connected(&adjacency) {
            return Err(MapError::SingularGenerator);
        }
        Ok(Self { hidden, arrival })
    }

    /// Builds a descriptor from row-major nested vectors.
    pub fn from_rows(hidden: &[Vec<f64>], arrival: &[Vec<f64>]) -> Result<Self, MapError> {
        Self::new(dense(hidden)?, dense(arrival)?)
    }

    /// Single-phase MAP, i.e. a Poisson process.
    pub fn poisson(rate: f64) -> Result<Self, MapError> {
        Self::new(
            DMatrix::from_element(1, 1, -rate),
            DMatrix::from_element(1, 1, rate),
        )
    }

    /// A MAP whose stationary per-phase arrival rates are exactly `lambda`:
    /// a Poisson stream of total rate `sum(lambda)` where each arrival moves
    /// the phase to `v` with probability `lambda[v] / sum(lambda)`.
    pub fn from_phase_rates(lambda: &[f64]) -> Result<Self, MapError> {
        let m = lambda.len();
        let total: f64 = lambda.iter().sum();
        let hidden = DMatrix::from_diagonal_element(m, m, -total);
        let arrival = DMatrix::from_fn(m, m, |_, c| lambda[c]);
        Self::new(hidden, arrival)
    }

    pub fn phases(&self) -> usize {
        self.hidden.nrows()
    }

    pub fn hidden(&self) -> &DMatrix<f64> {
        &self.hidden
    }

    pub fn arrival(&self) -> &DMatrix<f64> {
        &self.arrival
    }

    pub fn generator(&self) -> DMatrix<f64> {
        &self.hidden + &self.arrival
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, MapError> {
        Self::new(&self.hidden * factor, &self.arrival * factor)
    }

    pub fn hidden_rows(&self) -> Vec<Vec<f64>> {
        rows(&self.hidden)
    }

    pub fn arrival_rows(&self) -> Vec<Vec<f64>> {
        rows(&self.arrival)
    }
}

fn dense(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, MapError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(MapError::InvalidDescriptor("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, m, |r, c| rows[r][c]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// Stationary phase distribution and per-phase arrival rates of a station.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRates {
    /// Stationary phase vector; absent when the rates were supplied directly.
    pub theta: Option<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub total: f64,
}

impl PhaseRates {
    /// Rates given directly. Every entry must be positive and finite.
    pub fn direct(lambda: Vec<f64>) -> Result<Self, MapError> {
        if lambda.is_empty() {
            return Err(MapError::InvalidDescriptor("empty rate vector".into()));
        }
        if let Some(v) = lambda.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(MapError::InvalidDescriptor(format!(
                "rate {} of phase {v} is not a finite nonnegative number",
                lambda[v]
            )));
        }
        if let Some(phase) = lambda.iter().position(|x| *x == 0.0) {
            return Err(MapError::ZeroPhaseRate { phase });
        }
        let total = lambda.iter().sum();
        Ok(Self {
            theta: None,
            lambda,
            total,
        })
    }

    pub fn phases(&self) -> usize {
        self.lambda.len()
    }
}

/// Solves `theta (C + D) = 0`, `theta e = 1` by a dense LU solve with the
/// last balance equation replaced by the normalization row.
pub fn map_stationary_vector(map: &MapDescriptor) -> Result<Vec<f64>, MapError> {
    let q = map.generator();
    let m = q.nrows();
    let mut a = q.transpose();
    for c in 0..m {
        a[(m - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(m);
    b[m - 1] = 1.0;
    let theta = a.lu().solve(&b).ok_or(MapError::SingularGenerator)?;
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(MapError::SingularGenerator);
    }
    let scale = q.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    let residual = (theta.transpose() * &q).amax();
    if residual > 1e-10 * scale || theta.iter().any(|&x| x < -1e-12) {
        return Err(MapError::SingularGenerator);
    }
    // Clip roundoff negatives and renormalise.
    let mut theta: Vec<f64> = theta.iter().map(|x| x.max(0.0)).collect();
    let sum: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|x| *x /= sum);
    Ok(theta)
}

/// `lambda = theta D`, rejecting any phase whose rate is zero.
pub fn phase_arrival_rates(map: &MapDescriptor) -> Result<PhaseRates, MapError> {
    let theta = map_stationary_vector(map)?;
    let d = map.arrival();
    let m = map.phases();
    let lambda: Vec<f64> = (0..m)
        .map(|c| (0..m).map(|r| theta[r] * d[(r, c)]).sum())
        .collect();
    if let Some(phase) = lambda.iter().position(|&x| x <= 0.0) {
        return Err(MapError::ZeroPhaseRate { phase });
    }
    let total = lambda.iter().sum();
    Ok(PhaseRates {
        theta: Some(theta),
        lambda,
        total,
    })
}

/// How user arrivals at a station are described.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalProcess {
    Map(MapDescriptor),
    Rates(Vec<f64>),
}

impl ArrivalProcess {
    pub fn phase_rates(&self) -> Result<PhaseRates, MapError> {
        match self {
            ArrivalProcess::Map(map) => phase_arrival_rates(map),
            ArrivalProcess::Rates(lambda) => PhaseRates::direct(lambda.clone()),
        }
    }

    /// A MAP realising this arrival description, for simulation.
    pub fn to_map(&self) -> Result<MapDescriptor, MapError> {
        match self {
            ArrivalProcess::Map(map) => Ok(map.clone()),
            ArrivalProcess::Rates(lambda) => MapDescriptor::from_phase_rates(lambda),
        }
    }
}

/// Physical road `from -> to` with first-ride rate `mu` and retrial rate `xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadSpec {
    pub from: usize,
    pub to: usize,
    pub mu: f64,
    pub xi: f64,
}

/// Unvalidated model description, as read from configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelSpec {
    pub initial_bikes: u32,
    pub capacity: u32,
    pub stations: Vec<ArrivalProcess>,
    pub roads: Vec<RoadSpec>,
    /// First-ride routing `p[(i, j)]`.
    pub first_ride: BTreeMap<(usize, usize), f64>,
    /// Retrial routing `alpha[(i, j)]`.
    pub retrial: BTreeMap<(usize, usize), f64>,
}

/// A validated road, carrying both routing probabilities out of `from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Road {
    pub from: usize,
    pub to: usize,
    pub mu: f64,
    pub xi: f64,
    pub p: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub arrivals: ArrivalProcess,
    pub rates: PhaseRates,
}

/// A validated bike-sharing system. Roads are kept sorted by `(from, to)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BikeShareModel {
    initial_bikes: u32,
    capacity: u32,
    stations: Vec<Station>,
    roads: Vec<Road>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
}

impl BikeShareModel {
    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    /// Bikes initially parked at every station (`C`).
    pub fn initial_bikes(&self) -> u32 {
        self.initial_bikes
    }

    /// Docks per station (`K`).
    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    /// Total fleet `N * C`.
    pub fn fleet(&self) -> u32 {
        self.initial_bikes * self.stations.len() as u32
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn roads(&self) -> &[Road] {
        &self.roads
    }

    /// Indices into [`roads`](Self::roads) of the roads leaving `station`.
    pub fn outgoing(&self, station: usize) -> &[usize] {
        &self.outgoing[station]
    }

    pub fn incoming(&self, station: usize) -> &[usize] {
        &self.incoming[station]
    }

    pub fn road_index(&self, from: usize, to: usize) -> Option<usize> {
        self.roads
            .binary_search_by(|r| (r.from, r.to).cmp(&(from, to)))
            .ok()
    }

    /// Inverse of [`validate_model`].
    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            initial_bikes: self.initial_bikes,
            capacity: self.capacity,
            stations: self.stations.iter().map(|s| s.arrivals.clone()).collect(),
            roads: self
                .roads
                .iter()
                .map(|r| RoadSpec {
                    from: r.from,
                    to: r.to,
                    mu: r.mu,
                    xi: r.xi,
                })
                .collect(),
            first_ride: self.roads.iter().map(|r| ((r.from, r.to), r.p)).collect(),
            retrial: self
                .roads
                .iter()
                .map(|r| ((r.from, r.to), r.alpha))
                .collect(),
        }
    }
}

/// Checks every model invariant and collects all violations.
pub fn validate_model(spec: &ModelSpec) -> Result<BikeShareModel, ValidationErrors> {
    let mut errs = Vec::new();
    let n = spec.stations.len();
    let (c, k) = (spec.initial_bikes, spec.capacity);

    if n == 0 {
        errs.push(Violation::Capacity("no stations".into()));
    }
    if c < 1 {
        errs.push(Violation::Capacity(format!("initial bikes C = {c} must be at least 1")));
    }
    if c >= k {
        errs.push(Violation::Capacity(format!(
            "initial bikes C = {c} must be below capacity K = {k}"
        )));
    }
    if (n as u64) * u64::from(c) < u64::from(k) {
        errs.push(Violation::Capacity(format!(
            "fleet N*C = {} cannot fill a station of capacity K = {k}",
            n as u64 * u64::from(c)
        )));
    }

    let mut stations = Vec::with_capacity(n);
    for (i, arrivals) in spec.stations.iter().enumerate() {
        match arrivals.phase_rates() {
            Ok(rates) => stations.push(Station {
                arrivals: arrivals.clone(),
                rates,
            }),
            Err(source) => errs.push(Violation::Arrivals { station: i, source }),
        }
    }

    let mut roads: Vec<Road> = Vec::with_capacity(spec.roads.len());
    for r in &spec.roads {
        if r.from >= n || r.to >= n {
            errs.push(Violation::Routing(format!(
                "road {}->{} references a station outside 1..={n}",
                r.from + 1,
                r.to + 1
            )));
            continue;
        }
        if r.from == r.to {
            errs.push(Violation::Routing(format!("road {}->{} is a loop", r.from + 1, r.to + 1)));
            continue;
        }
        if !(r.mu.is_finite() && r.mu > 0.0) {
            errs.push(Violation::Rate(format!(
                "road {}->{}: mu = {} must be positive",
                r.from + 1,
                r.to + 1,
                r.mu
            )));
        }
        if !(r.xi.is_finite() && r.xi > 0.0) {
            errs.push(Violation::Rate(format!(
                "road {}->{}: xi = {} must be positive",
                r.from + 1,
                r.to + 1,
                r.xi
            )));
        }
        roads.push(Road {
            from: r.from,
            to: r.to,
            mu: r.mu,
            xi: r.xi,
            p: spec.first_ride.get(&(r.from, r.to)).copied().unwrap_or(0.0),
            alpha: spec.retrial.get(&(r.from, r.to)).copied().unwrap_or(0.0),
        });
    }
    roads.sort_by_key(|r| (r.from, r.to));
    for w in roads.windows(2) {
        if (w[0].from, w[0].to) == (w[1].from, w[1].to) {
            errs.push(Violation::Routing(format!(
                "road {}->{} listed twice",
                w[0].from + 1,
                w[0].to + 1
            )));
        }
    }
    roads.dedup_by_key(|r| (r.from, r.to));

    for (name, table) in [("p", &spec.first_ride), ("alpha", &spec.retrial)] {
        for (&(i, j), &prob) in table {
            if !(prob.is_finite() && (0.0..=1.0).contains(&prob)) {
                errs.push(Violation::Routing(format!(
                    "{name}[{}->{}] = {prob} is not a probability",
                    i + 1,
                    j + 1
                )));
            }
            if prob != 0.0 && !roads.iter().any(|r| r.from == i && r.to == j) {
                errs.push(Violation::Routing(format!(
                    "{name}[{}->{}] = {prob} puts mass on a nonexistent road",
                    i + 1,
                    j + 1
                )));
            }
        }
    }

    let mut outgoing = vec![Vec::new(); n];
    let mut incoming = vec![Vec::new(); n];
    for (idx, r) in roads.iter().enumerate() {
        outgoing[r.from].push(idx);
        incoming[r.to].push(idx);
    }
    for i in 0..n {
        if outgoing[i].is_empty() {
            errs.push(Violation::DegenerateStation {
                station: i,
                reason: "no outgoing road".into(),
            });
            continue;
        }
        if incoming[i].is_empty() {
            errs.push(Violation::DegenerateStation {
                station: i,
                reason: "no incoming road".into(),
            });
        }
        let p_sum: f64 = outgoing[i].iter().map(|&r| roads[r].p).sum();
        let a_sum: f64 = outgoing[i].iter().map(|&r| roads[r].alpha).sum();
        if (p_sum - 1.0).abs() > PROBABILITY_TOL {
            errs.push(Violation::Routing(format!(
                "first-ride probabilities out of station {} sum to {p_sum}",
                i + 1
            )));
        }
        if (a_sum - 1.0).abs() > PROBABILITY_TOL {
            errs.push(Violation::Routing(format!(
                "retrial probabilities out of station {} sum to {a_sum}",
                i + 1
            )));
        }
    }

    if !errs.is_empty() {
        return Err(ValidationErrors(errs));
    }
    Ok(BikeShareModel {
        initial_bikes: c,
        capacity: k,
        stations,
        roads,
        outgoing,
        incoming,
    })
}
