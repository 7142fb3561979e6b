//! Discrete-event simulation of the physical system, used to cross-check the
//! product-form analysis.
//!
//! Users arrive at each station according to its MAP. An arrival at an empty
//! station is lost; otherwise the user rides to a neighbour chosen by `p`
//! for an exponential(`mu`) time. A rider reaching a full station immediately
//! re-rides to a neighbour chosen by `alpha` for an exponential(`xi`) time,
//! and keeps doing so until a dock is free.
//!
//! # Random streams
//!
//! Each replication derives a 128-bit PCG state from `(seed, replication)`.
//! Every station then owns three PCG streams on that state: stream `3i` drives
//! its MAP phase process, `3i + 1` its routing choices (first rides out of `i`
//! and retrials leaving `i` after finding it full), and `3i + 2` the durations
//! of rides leaving `i`. Changing one station's parameters therefore leaves
//! the other stations' random numbers untouched.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp};
use rand_pcg::Pcg64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::{map_stationary_vector, BikeShareModel, MapDescriptor};
use crate::pathgraph::{build_path_graph, is_irreducible};
use crate::routing::RideClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Events processed per replication, warmup included.
    pub events: u64,
    /// Leading fraction of `events` discarded before collecting statistics.
    pub warmup: f64,
    pub seed: u64,
    pub replications: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            events: 1_250_000,
            warmup: 0.2,
            seed: 1,
            replications: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.9).contains(&self.warmup) {
            return Err(Error::Config(format!("warmup = {} must lie in [0, 0.9]", self.warmup)));
        }
        if self.replications == 0 {
            return Err(Error::Config("at least one replication is required".into()));
        }
        if self.post_warmup_events() == 0 {
            return Err(Error::Config("no events left after warmup".into()));
        }
        Ok(())
    }

    pub fn warmup_events(&self) -> u64 {
        (self.warmup * self.events as f64).floor() as u64
    }

    pub fn post_warmup_events(&self) -> u64 {
        self.events - self.warmup_events()
    }
}

/// Phase-indexed transition table of a MAP: for each phase, the total
/// outflow rate and the cumulative weights of its possible transitions.
#[derive(Debug, Clone)]
struct MapTable {
    out_rate: Vec<f64>,
    /// `(cumulative weight, next phase, is arrival)`
    moves: Vec<Vec<(f64, usize, bool)>>,
    theta: Vec<f64>,
}

impl MapTable {
    fn new(map: &MapDescriptor) -> Result<Self> {
        let m = map.phases();
        let (c, d) = (map.hidden(), map.arrival());
        let mut out_rate = Vec::with_capacity(m);
        let mut moves = Vec::with_capacity(m);
        for v in 0..m {
            let mut acc = 0.0;
            let mut row = Vec::new();
            for u in 0..m {
                if u != v && c[(v, u)] > 0.0 {
                    acc += c[(v, u)];
                    row.push((acc, u, false));
                }
                if d[(v, u)] > 0.0 {
                    acc += d[(v, u)];
                    row.push((acc, u, true));
                }
            }
            out_rate.push(acc);
            moves.push(row);
        }
        let theta = map_stationary_vector(map)?;
        Ok(Self {
            out_rate,
            moves,
            theta,
        })
    }

    fn initial_phase(&self, rng: &mut Pcg64) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (v, &t) in self.theta.iter().enumerate() {
            acc += t;
            if u < acc {
                return v;
            }
        }
        self.theta.len() - 1
    }

    /// Sojourn time in `phase` and the transition taken at its end.
    fn step(&self, phase: usize, rng: &mut Pcg64) -> (f64, usize, bool) {
        let rate = self.out_rate[phase];
        let dt = Exp::new(rate).expect("positive outflow rate").sample(rng);
        let target = rng.random::<f64>() * rate;
        let row = &self.moves[phase];
        let (_, next, arrival) = row
            .iter()
            .find(|(cum, _, _)| target < *cum)
            .copied()
            .unwrap_or(row[row.len() - 1]);
        (dt, next, arrival)
    }
}

/// One arrival of a MAP: its time and the phase entered on arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapArrival {
    pub time: f64,
    pub phase: usize,
}

/// Endless stream of arrivals of a MAP started in its stationary phase law.
#[derive(Debug, Clone)]
pub struct MapEventStream {
    table: MapTable,
    rng: Pcg64,
    phase: usize,
    time: f64,
}

impl Iterator for MapEventStream {
    type Item = MapArrival;

    fn next(&mut self) -> Option<MapArrival> {
        loop {
            let (dt, next, arrival) = self.table.step(self.phase, &mut self.rng);
            self.time += dt;
            self.phase = next;
            if arrival {
                return Some(MapArrival {
                    time: self.time,
                    phase: next,
                });
            }
        }
    }
}

pub fn map_event_stream(map: &MapDescriptor, seed: u64) -> Result<MapEventStream> {
    let table = MapTable::new(map)?;
    let mut rng = Pcg64::seed_from_u64(seed);
    let phase = table.initial_phase(&mut rng);
    Ok(MapEventStream {
        table,
        rng,
        phase,
        time: 0.0,
    })
}

/// A pooled statistic: mean over replications, its standard error and the
/// half-width of a 95% Student-t interval (absent with one replication).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: Option<f64>,
    pub half_width: Option<f64>,
}

impl Estimate {
    fn pool(samples: &[f64]) -> Self {
        let r = samples.len();
        let mean = samples.iter().sum::<f64>() / r as f64;
        if r < 2 {
            return Self {
                mean,
                std_error: None,
                half_width: None,
            };
        }
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        let se = (var / r as f64).sqrt();
        let t = StudentsT::new(0.0, 1.0, (r - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        Self {
            mean,
            std_error: Some(se),
            half_width: Some(t * se),
        }
    }
}

/// Per-road ride counters, split by class. Ids are one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadRides {
    pub from: usize,
    pub to: usize,
    /// Rides started, `[first, retrial]`, summed over replications.
    pub started: [u64; 2],
    /// Mean sampled ride duration per class (NaN-free: 0 when no rides).
    pub mean_duration: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub full_prob: Vec<Estimate>,
    pub empty_prob: Vec<Estimate>,
    pub mean_station: Vec<Estimate>,
    /// Riders on each road, both classes, in model road order.
    pub mean_road: Vec<Estimate>,
    pub lost_arrival_rate: Vec<Estimate>,
    /// All user arrivals per unit time, lost ones included.
    pub arrival_rate: Vec<Estimate>,
    pub road_rides: Vec<RoadRides>,
    pub replications: usize,
    pub post_warmup_events: u64,
    pub mean_observed_time: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Map(usize),
    RideEnd { road: usize, class: RideClass },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so that BinaryHeap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Raw per-replication output.
#[derive(Debug, Clone)]
struct RunStats {
    observed: f64,
    full_time: Vec<f64>,
    empty_time: Vec<f64>,
    bike_time: Vec<f64>,
    road_time: Vec<f64>,
    lost: Vec<u64>,
    arrivals: Vec<u64>,
    rides: Vec<[u64; 2]>,
    ride_duration: Vec<[f64; 2]>,
}

struct Streams {
    map: Vec<Pcg64>,
    route: Vec<Pcg64>,
    ride: Vec<Pcg64>,
}

impl Streams {
    fn new(seed: u64, replication: usize, stations: usize) -> Self {
        let mut base = Pcg64::seed_from_u64(seed ^ (replication as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let state: u128 = base.random();
        let stream = |i: usize, purpose: usize| Pcg64::new(state, (3 * i + purpose) as u128);
        Self {
            map: (0..stations).map(|i| stream(i, 0)).collect(),
            route: (0..stations).map(|i| stream(i, 1)).collect(),
            ride: (0..stations).map(|i| stream(i, 2)).collect(),
        }
    }
}

fn choose(weights: impl Iterator<Item = (usize, f64)> + Clone, rng: &mut Pcg64) -> usize {
    let target: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (idx, w) in weights {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(idx);
        if target < acc {
            return idx;
        }
    }
    last.expect("routing row has positive mass")
}

fn run_replication(
    model: &BikeShareModel,
    tables: &[MapTable],
    cfg: &SimConfig,
    replication: usize,
) -> Result<RunStats> {
    let n = model.station_count();
    let roads = model.roads();
    let k = model.capacity();
    let fleet = u64::from(model.fleet());
    let mut rng = Streams::new(cfg.seed, replication, n);

    let mut parked = vec![model.initial_bikes(); n];
    let mut phase: Vec<usize> = (0..n)
        .map(|i| tables[i].initial_phase(&mut rng.map[i]))
        .collect();
    let mut riding = vec![[0u32; 2]; roads.len()];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut pending_map = vec![(0usize, false); n];
    for i in 0..n {
        let (dt, next, arrival) = tables[i].step(phase[i], &mut rng.map[i]);
        pending_map[i] = (next, arrival);
        heap.push(Event {
            time: dt,
            seq,
            kind: EventKind::Map(i),
        });
        seq += 1;
    }

    let mut stats = RunStats {
        observed: 0.0,
        full_time: vec![0.0; n],
        empty_time: vec![0.0; n],
        bike_time: vec![0.0; n],
        road_time: vec![0.0; roads.len()],
        lost: vec![0; n],
        arrivals: vec![0; n],
        rides: vec![[0; 2]; roads.len()],
        ride_duration: vec![[0.0; 2]; roads.len()],
    };
    let warmup = cfg.warmup_events();
    let mut now = 0.0;

    let depart = |road: usize,
                  class: RideClass,
                  now: f64,
                  rng: &mut Pcg64,
                  heap: &mut BinaryHeap<Event>,
                  seq: &mut u64,
                  riding: &mut [[u32; 2]],
                  stats: &mut RunStats,
                  measuring: bool| {
        let r = roads[road];
        let rate = match class {
            RideClass::First => r.mu,
            RideClass::Retrial => r.xi,
        };
        let dt = Exp::new(rate).expect("positive ride rate").sample(rng);
        riding[road][class.index()] += 1;
        if measuring {
            stats.rides[road][class.index()] += 1;
            stats.ride_duration[road][class.index()] += dt;
        }
        heap.push(Event {
            time: now + dt,
            seq: *seq,
            kind: EventKind::RideEnd { road, class },
        });
        *seq += 1;
    };

    for event_no in 0..cfg.events {
        let ev = heap.pop().expect("station events are always pending");
        let measuring = event_no >= warmup;
        if measuring {
            let dt = ev.time - now;
            stats.observed += dt;
            for i in 0..n {
                let b = parked[i];
                stats.bike_time[i] += f64::from(b) * dt;
                if b == 0 {
                    stats.empty_time[i] += dt;
                }
                if b == k {
                    stats.full_time[i] += dt;
                }
            }
            for (r, c) in riding.iter().enumerate() {
                stats.road_time[r] += f64::from(c[0] + c[1]) * dt;
            }
        }
        now = ev.time;

        match ev.kind {
            EventKind::Map(i) => {
                let (next, arrival) = pending_map[i];
                phase[i] = next;
                if arrival {
                    if measuring {
                        stats.arrivals[i] += 1;
                    }
                    if parked[i] == 0 {
                        if measuring {
                            stats.lost[i] += 1;
                        }
                    } else {
                        parked[i] -= 1;
                        let out = model.outgoing(i);
                        let road = choose(
                            out.iter().map(|&r| (r, roads[r].p)),
                            &mut rng.route[i],
                        );
                        depart(
                            road,
                            RideClass::First,
                            now,
                            &mut rng.ride[i],
                            &mut heap,
                            &mut seq,
                            &mut riding,
                            &mut stats,
                            measuring,
                        );
                    }
                }
                let (dt, next, arrival) = tables[i].step(phase[i], &mut rng.map[i]);
                pending_map[i] = (next, arrival);
                heap.push(Event {
                    time: now + dt,
                    seq,
                    kind: EventKind::Map(i),
                });
                seq += 1;
            }
            EventKind::RideEnd { road, class } => {
                riding[road][class.index()] -= 1;
                let j = roads[road].to;
                if parked[j] < k {
                    parked[j] += 1;
                } else {
                    let out = model.outgoing(j);
                    let next = choose(
                        out.iter().map(|&r| (r, roads[r].alpha)),
                        &mut rng.route[j],
                    );
                    depart(
                        next,
                        RideClass::Retrial,
                        now,
                        &mut rng.ride[j],
                        &mut heap,
                        &mut seq,
                        &mut riding,
                        &mut stats,
                        measuring,
                    );
                }
            }
        }

        // Riders are counted from the event list, independently of `riding`.
        let in_flight = (heap.len() - n) as u64;
        let on_docks: u64 = parked.iter().map(|&b| u64::from(b)).sum();
        let tracked: u64 = riding.iter().flatten().map(|&c| u64::from(c)).sum();
        if on_docks + in_flight != fleet || tracked != in_flight || parked.iter().any(|&b| b > k) {
            return Err(Error::Simulation(format!(
                "fleet conservation violated at event {event_no} (t = {now}): \
                 {on_docks} parked + {in_flight} riding != {fleet}"
            )));
        }
    }
    Ok(stats)
}

/// Runs `cfg.replications` independent replications and pools them.
pub fn simulate(model: &BikeShareModel, cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    if !is_irreducible(&build_path_graph(model)) {
        warnings.push("path graph is not strongly connected".to_string());
    }
    let tables = model
        .stations()
        .iter()
        .map(|s| MapTable::new(&s.arrivals.to_map()?))
        .collect::<Result<Vec<_>>>()?;
    let runs = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(model, &tables, cfg, rep))
        .collect::<Result<Vec<_>>>()?;

    let n = model.station_count();
    let per_station = |f: &dyn Fn(&RunStats, usize) -> f64| -> Vec<Estimate> {
        (0..n)
            .map(|i| Estimate::pool(&runs.iter().map(|r| f(r, i)).collect::<Vec<_>>()))
            .collect()
    };
    let full_prob = per_station(&|r, i| r.full_time[i] / r.observed);
    let empty_prob = per_station(&|r, i| r.empty_time[i] / r.observed);
    let mean_station = per_station(&|r, i| r.bike_time[i] / r.observed);
    let lost_arrival_rate = per_station(&|r, i| r.lost[i] as f64 / r.observed);
    let arrival_rate = per_station(&|r, i| r.arrivals[i] as f64 / r.observed);
    let mean_road = (0..model.roads().len())
        .map(|rd| {
            Estimate::pool(
                &runs
                    .iter()
                    .map(|r| r.road_time[rd] / r.observed)
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let road_rides = model
        .roads()
        .iter()
        .enumerate()
        .map(|(rd, road)| {
            let mut started = [0u64; 2];
            let mut dur = [0.0; 2];
            for r in &runs {
                for c in 0..2 {
                    started[c] += r.rides[rd][c];
                    dur[c] += r.ride_duration[rd][c];
                }
            }
            let mean = |c: usize| if started[c] == 0 { 0.0 } else { dur[c] / started[c] as f64 };
            RoadRides {
                from: road.from + 1,
                to: road.to + 1,
                started,
                mean_duration: [mean(0), mean(1)],
            }
        })
        .collect();

    Ok(SimReport {
        full_prob,
        empty_prob,
        mean_station,
        mean_road,
        lost_arrival_rate,
        arrival_rate,
        road_rides,
        replications: cfg.replications,
        post_warmup_events: cfg.post_warmup_events(),
        mean_observed_time: runs.iter().map(|r| r.observed).sum::<f64>() / runs.len() as f64,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::model::{phase_arrival_rates, validate_model};

    fn small_cfg() -> SimConfig {
        SimConfig {
            events: 60_000,
            warmup: 0.1,
            seed: 7,
            replications: 4,
        }
    }

    #[test]
    fn config_checks() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig { warmup: 0.95, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { replications: 0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { events: 0, ..SimConfig::default() }.validate().is_err());
        assert_eq!(SimConfig::default().post_warmup_events(), 1_000_000);
    }

    #[test]
    fn poisson_stream_rate() {
        let map = MapDescriptor::poisson(3.0).unwrap();
        let n = 100_000;
        let last = map_event_stream(&map, 11).unwrap().take(n).last().unwrap();
        let rate = n as f64 / last.time;
        // Gamma(n, 3) end time: relative sd of the rate estimate is 1/sqrt(n).
        let sigma = 3.0 / (n as f64).sqrt();
        assert!((rate - 3.0).abs() < 3.0 * sigma, "rate {rate}");
    }

    #[test]
    fn bursty_stream_rate_and_phase_split() {
        let map = MapDescriptor::from_rows(
            &[vec![-3.0, 1.0], vec![1.0, -4.0]],
            &[vec![2.0, 0.0], vec![1.0, 2.0]],
        )
        .unwrap();
        let expected = phase_arrival_rates(&map).unwrap();
        // Batch means over 20 batches of 10^4 arrivals.
        let mut stream = map_event_stream(&map, 5).unwrap();
        let mut rates = Vec::new();
        let mut t0 = 0.0;
        let mut phase_hits = [0usize; 2];
        for _ in 0..20 {
            let mut last = 0.0;
            for _ in 0..10_000 {
                let a = stream.next().unwrap();
                phase_hits[a.phase] += 1;
                last = a.time;
            }
            rates.push(10_000.0 / (last - t0));
            t0 = last;
        }
        let est = Estimate::pool(&rates);
        let se = est.std_error.unwrap();
        assert!((est.mean - 7.0 / 3.0).abs() <= 3.0 * se + 1e-3, "{est:?}");
        let split = phase_hits[0] as f64 / 200_000.0;
        assert!((split - expected.lambda[0] / expected.total).abs() < 0.01);
    }

    #[test]
    fn symmetric_stream_splits_evenly() {
        let map = MapDescriptor::from_rows(
            &[vec![-2.0, 1.0], vec![1.0, -2.0]],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let hits = map_event_stream(&map, 3)
            .unwrap()
            .take(100_000)
            .filter(|a| a.phase == 0)
            .count();
        assert!((hits as f64 / 100_000.0 - 0.5).abs() < 0.01);
    }

    #[test]
    fn deterministic_given_seed() {
        let model = validate_model(&catalog::example_four(5.0)).unwrap();
        let a = simulate(&model, &small_cfg()).unwrap();
        let b = simulate(&model, &small_cfg()).unwrap();
        assert_eq!(a, b);
        let c = simulate(&model, &SimConfig { seed: 8, ..small_cfg() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn probabilities_and_occupancy_bounded() {
        let model = validate_model(&catalog::example_three(0.4, 0.7)).unwrap();
        let rep = simulate(&model, &small_cfg()).unwrap();
        for i in 0..3 {
            for p in [&rep.full_prob[i], &rep.empty_prob[i]] {
                assert!((0.0..=1.0).contains(&p.mean));
            }
            assert!((0.0..=f64::from(model.capacity())).contains(&rep.mean_station[i].mean));
        }
        let total: f64 = rep.mean_station.iter().map(|e| e.mean).sum::<f64>()
            + rep.mean_road.iter().map(|e| e.mean).sum::<f64>();
        assert!((total - f64::from(model.fleet())).abs() < 1e-9);
        assert!(rep.warnings.is_empty());
    }

    #[test]
    fn retrials_use_alpha_and_xi() {
        // First rides out of station 2 all go to station 1, retrials all to 3.
        let model = validate_model(&catalog::example_three(1.0, 0.0)).unwrap();
        let rep = simulate(&model, &small_cfg()).unwrap();
        let find = |f: usize, t: usize| rep.road_rides.iter().find(|r| r.from == f && r.to == t).unwrap();
        let r21 = find(2, 1);
        let r23 = find(2, 3);
        assert!(r21.started[0] > 0);
        assert_eq!(r21.started[1], 0, "alpha_21 = 0 forbids retrials on 2->1");
        assert_eq!(r23.started[0], 0, "p_23 = 0 forbids first rides on 2->3");
        assert!(r23.started[1] > 0);
        // Retrial durations follow xi = 3.5, first rides mu = 3 on 2->1.
        assert!((r23.mean_duration[1] - 1.0 / 3.5).abs() < 0.05);
        assert!((r21.mean_duration[0] - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn single_replication_has_no_interval() {
        let model = validate_model(&catalog::example_two()).unwrap();
        let cfg = SimConfig { events: 5_000, replications: 1, ..small_cfg() };
        let rep = simulate(&model, &cfg).unwrap();
        assert!(rep.warnings.is_empty());
        assert!(rep.full_prob[0].half_width.is_none());
        assert!(rep.full_prob[0].std_error.is_none());
    }
}
