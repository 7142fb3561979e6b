//! The finite state space of joint bike configurations.
//!
//! A state is a flat vector of coordinates: every station's per-phase parked
//! counts (stations in order), followed by `(first ride, retrial)` riding
//! counts for every road in model order. Coordinates sum to the fleet `N*C`
//! and each station's parked total is at most `K`. Enumeration is
//! lexicographic over that coordinate sequence; road coordinates come last
//! because the fleet is their only bound.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::BikeShareModel;

/// Default cap on the number of enumerated states.
pub const DEFAULT_MAX_STATES: u128 = 10_000_000;

/// Shape of the coordinate vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    phases: Vec<usize>,
    roads: usize,
    capacity: u32,
    fleet: u32,
    /// Start offset of each station's phase block.
    offsets: Vec<usize>,
    /// Station owning each station coordinate.
    owner: Vec<usize>,
}

impl StateLayout {
    /// # Panics
    ///
    /// If `roads == 0`; every validated model has at least one road, and the
    /// walker relies on the last coordinate being unbounded by `K`.
    pub fn new(phases: Vec<usize>, roads: usize, capacity: u32, fleet: u32) -> Self {
        assert!(roads > 0, "state layout needs at least one road");
        let mut offsets = Vec::with_capacity(phases.len());
        let mut owner = Vec::new();
        for (i, &m) in phases.iter().enumerate() {
            offsets.push(owner.len());
            owner.extend(std::iter::repeat_n(i, m));
        }
        Self {
            phases,
            roads,
            capacity,
            fleet,
            offsets,
            owner,
        }
    }

    pub fn from_model(model: &BikeShareModel) -> Self {
        Self::new(
            model.stations().iter().map(|s| s.rates.phases()).collect(),
            model.roads().len(),
            model.capacity(),
            model.fleet(),
        )
    }

    pub fn station_count(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self, station: usize) -> usize {
        self.phases[station]
    }

    pub fn road_count(&self) -> usize {
        self.roads
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn fleet(&self) -> u32 {
        self.fleet
    }

    /// Number of station (parked) coordinates.
    pub fn station_dims(&self) -> usize {
        self.owner.len()
    }

    pub fn dims(&self) -> usize {
        self.owner.len() + 2 * self.roads
    }

    /// Range of the flat coordinates holding station `i`'s phase counts.
    pub fn station_range(&self, station: usize) -> std::ops::Range<usize> {
        let start = self.offsets[station];
        start..start + self.phases[station]
    }

    /// Flat index of `(road, class)`.
    pub fn road_coord(&self, road: usize, class: usize) -> usize {
        self.owner.len() + 2 * road + class
    }

    pub fn to_state(&self, coords: &[u32]) -> NetworkState {
        NetworkState {
            stations: (0..self.station_count())
                .map(|i| coords[self.station_range(i)].to_vec())
                .collect(),
            roads: (0..self.roads)
                .map(|r| [coords[self.road_coord(r, 0)], coords[self.road_coord(r, 1)]])
                .collect(),
        }
    }

    /// Flattens a state; `None` if its shape does not match.
    pub fn to_coords(&self, state: &NetworkState) -> Option<Vec<u32>> {
        if state.stations.len() != self.station_count() || state.roads.len() != self.roads {
            return None;
        }
        let mut coords = Vec::with_capacity(self.dims());
        for (i, counts) in state.stations.iter().enumerate() {
            if counts.len() != self.phases[i] {
                return None;
            }
            coords.extend_from_slice(counts);
        }
        for r in &state.roads {
            coords.extend_from_slice(r);
        }
        Some(coords)
    }

    /// True iff the coordinates describe a member of the state space.
    pub fn contains(&self, coords: &[u32]) -> bool {
        if coords.len() != self.dims() {
            return false;
        }
        let total: u64 = coords.iter().map(|&x| u64::from(x)).sum();
        total == u64::from(self.fleet)
            && (0..self.station_count()).all(|i| {
                coords[self.station_range(i)]
                    .iter()
                    .map(|&x| u64::from(x))
                    .sum::<u64>()
                    <= u64::from(self.capacity)
            })
    }
}

/// One joint configuration: `stations[i][v]` bikes parked at station `i` in
/// phase `v`, `roads[r] = [first, retrial]` bikes riding road `r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct NetworkState {
    pub stations: Vec<Vec<u32>>,
    pub roads: Vec<[u32; 2]>,
}

impl NetworkState {
    pub fn station_total(&self, station: usize) -> u32 {
        self.stations[station].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.stations.iter().flatten().map(|&x| u64::from(x)).sum::<u64>()
            + self.roads.iter().flatten().map(|&x| u64::from(x)).sum::<u64>()
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by i + 1 at every step.
        match acc.checked_mul(n - i) {
            Some(v) => acc = v / (i + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// Exact cardinality of the state space by capped convolution: each station
/// contributes `C(t + m - 1, m - 1)` phase vectors of total `t <= K`, each
/// road coordinate any count up to the fleet.
pub fn layout_state_count(layout: &StateLayout) -> u128 {
    let fleet = layout.fleet as usize;
    let cap = layout.capacity as usize;
    // ways[s]: station coordinate assignments using s bikes.
    let mut ways = vec![0u128; fleet + 1];
    ways[0] = 1;
    for &m in &layout.phases {
        let poly: Vec<u128> = (0..=cap.min(fleet))
            .map(|t| binomial((t + m - 1) as u128, (m - 1) as u128))
            .collect();
        let mut next = vec![0u128; fleet + 1];
        for (s, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for (t, &c) in poly.iter().enumerate() {
                if s + t > fleet {
                    break;
                }
                next[s + t] = next[s + t].saturating_add(w.saturating_mul(c));
            }
        }
        ways = next;
    }
    let road_dims = 2 * layout.roads;
    ways.iter()
        .enumerate()
        .map(|(s, &w)| {
            let rest = (fleet - s) as u128;
            w.saturating_mul(binomial(rest + road_dims as u128 - 1, road_dims as u128 - 1))
        })
        .fold(0u128, u128::saturating_add)
}

pub fn state_count(model: &BikeShareModel) -> u128 {
    layout_state_count(&StateLayout::from_model(model))
}

fn check_cap(layout: &StateLayout, cap: u128) -> Result<()> {
    let count = layout_state_count(layout);
    if count > cap {
        return Err(Error::StateSpaceTooLarge { count, cap });
    }
    Ok(())
}

/// Lazy lexicographic walk over the state space.
#[derive(Debug, Clone)]
pub struct StateWalker {
    layout: StateLayout,
    coords: Vec<u32>,
    station_used: Vec<u32>,
    started: bool,
    done: bool,
}

impl StateWalker {
    pub fn new(layout: StateLayout) -> Self {
        let dims = layout.dims();
        let mut coords = vec![0; dims];
        coords[dims - 1] = layout.fleet;
        let station_used = vec![0; layout.station_count()];
        Self {
            layout,
            coords,
            station_used,
            started: false,
            done: false,
        }
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    /// Advances to the next state and returns its flat coordinates.
    pub fn next_coords(&mut self) -> Option<&[u32]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.coords);
        }
        let dims = self.coords.len();
        let last = dims - 1;
        let station_dims = self.layout.station_dims();
        // Mass currently held by coordinates after position j.
        let mut suffix = self.coords[last];
        for j in (0..last).rev() {
            if suffix >= 1 {
                let can_grow = if j < station_dims {
                    // Later phases of the same station are about to be zeroed.
                    let owner = self.layout.owner[j];
                    let end = self.layout.station_range(owner).end;
                    let tail: u32 = self.coords[j + 1..end].iter().sum();
                    self.station_used[owner] - tail < self.layout.capacity
                } else {
                    true
                };
                if can_grow {
                    self.coords[j] += 1;
                    if j < station_dims {
                        self.station_used[self.layout.owner[j]] += 1;
                    }
                    for k in j + 1..last {
                        if k < station_dims {
                            self.station_used[self.layout.owner[k]] -= self.coords[k];
                        }
                        self.coords[k] = 0;
                    }
                    self.coords[last] = suffix - 1;
                    return Some(&self.coords);
                }
            }
            suffix += self.coords[j];
        }
        self.done = true;
        None
    }
}

impl Iterator for StateWalker {
    type Item = NetworkState;

    fn next(&mut self) -> Option<NetworkState> {
        self.next_coords()?;
        Some(self.layout.to_state(&self.coords))
    }
}

/// Every state of the model, in lexicographic coordinate order.
pub fn enumerate_states(model: &BikeShareModel, cap: u128) -> Result<StateWalker> {
    let layout = StateLayout::from_model(model);
    check_cap(&layout, cap)?;
    Ok(StateWalker::new(layout))
}

/// Same as [`enumerate_states`] for an explicit layout.
pub fn enumerate_layout(layout: &StateLayout, cap: u128) -> Result<StateWalker> {
    check_cap(layout, cap)?;
    Ok(StateWalker::new(layout.clone()))
}
