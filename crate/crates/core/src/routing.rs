//! Two-class routing matrix over virtual nodes and the traffic equations.
//!
//! Virtual nodes are ordered canonically: for each station `i`, the station
//! node followed by `(i -> j, first ride)`, `(i -> j, retrial)` for every road
//! leaving `i` by ascending `j`. The full-station probabilities `pi` stand in
//! for the state-dependent "destination is full" event.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BikeShareModel;
use crate::pathgraph::is_strongly_connected;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RideClass {
    /// First ride after renting at a station.
    First,
    /// Re-ride after finding the destination full.
    Retrial,
}

impl RideClass {
    pub const BOTH: [RideClass; 2] = [RideClass::First, RideClass::Retrial];

    pub fn index(self) -> usize {
        match self {
            RideClass::First => 0,
            RideClass::Retrial => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VirtualNode {
    Station(usize),
    RoadClass {
        from: usize,
        to: usize,
        class: RideClass,
    },
}

impl VirtualNode {
    /// One-based label used in CSV output, e.g. `S1` or `R1->2#2`.
    pub fn label(&self) -> String {
        match *self {
            VirtualNode::Station(i) => format!("S{}", i + 1),
            VirtualNode::RoadClass { from, to, class } => {
                format!("R{}->{}#{}", from + 1, to + 1, class.index() + 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingMatrix {
    nodes: Vec<VirtualNode>,
    entries: DMatrix<f64>,
    station_index: Vec<usize>,
    /// `road_index[r][class]` for road `r` of the model.
    road_index: Vec<[usize; 2]>,
    /// Every full-station probability lies strictly inside (0, 1).
    interior: bool,
}

impl RoutingMatrix {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[VirtualNode] {
        &self.nodes
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn station_index(&self, station: usize) -> usize {
        self.station_index[station]
    }

    pub fn road_index(&self, road: usize, class: RideClass) -> usize {
        self.road_index[road][class.index()]
    }

    /// Row-major CSV with a header row and a label column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node");
        for n in &self.nodes {
            out.push(',');
            out.push_str(&n.label());
        }
        out.push('\n');
        for (r, n) in self.nodes.iter().enumerate() {
            out.push_str(&n.label());
            for c in 0..self.order() {
                out.push(',');
                out.push_str(&self.entries[(r, c)].to_string());
            }
            out.push('\n');
        }
        out
    }

    fn nonzero_adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.order())
            .map(|r| (0..self.order()).filter(|&c| self.entries[(r, c)] > 0.0).collect())
            .collect()
    }
}

/// Assembles the routing matrix at full-station probabilities `pi`.
pub fn build_routing_matrix(model: &BikeShareModel, pi: &[f64]) -> Result<RoutingMatrix> {
    let n = model.station_count();
    if pi.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: pi.len(),
        });
    }
    if let Some(bad) = pi.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Config(format!("full-station probability {bad} outside [0, 1]")));
    }

    let mut nodes = Vec::with_capacity(n + 2 * model.roads().len());
    let mut station_index = vec![0; n];
    let mut road_index = vec![[0; 2]; model.roads().len()];
    for (i, slot) in station_index.iter_mut().enumerate() {
        *slot = nodes.len();
        nodes.push(VirtualNode::Station(i));
        for &r in model.outgoing(i) {
            let road = model.roads()[r];
            for class in RideClass::BOTH {
                road_index[r][class.index()] = nodes.len();
                nodes.push(VirtualNode::RoadClass {
                    from: road.from,
                    to: road.to,
                    class,
                });
            }
        }
    }

    let mut entries = DMatrix::zeros(nodes.len(), nodes.len());
    for (i, &s) in station_index.iter().enumerate() {
        for &r in model.outgoing(i) {
            entries[(s, road_index[r][0])] = model.roads()[r].p;
        }
    }
    for (r, road) in model.roads().iter().enumerate() {
        let j = road.to;
        for row in road_index[r] {
            entries[(row, station_index[j])] = 1.0 - pi[j];
            for &next in model.outgoing(j) {
                entries[(row, road_index[next][1])] = model.roads()[next].alpha * pi[j];
            }
        }
    }

    Ok(RoutingMatrix {
        nodes,
        entries,
        station_index,
        road_index,
        interior: pi.iter().all(|&x| x > 0.0 && x < 1.0),
    })
}

/// Relative arrival rates (visit ratios) normalised by `e_1 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeArrivalRates {
    pub station: Vec<f64>,
    /// `road[r][class]`, aligned with the model's road list.
    pub road: Vec<[f64; 2]>,
}

impl RelativeArrivalRates {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            station: self.station.iter().map(|x| x * factor).collect(),
            road: self.road.iter().map(|[a, b]| [a * factor, b * factor]).collect(),
        }
    }

    pub fn is_positive(&self) -> bool {
        self.station.iter().all(|&x| x > 0.0) && self.road.iter().flatten().all(|&x| x > 0.0)
    }
}

/// Nodes reachable from `start` along positive entries.
fn reachable(adjacency: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adjacency.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Solves `e = eP`, `e_1 = 1`.
///
/// A road class that no routing mass ever enters (a road with `p = 0` has no
/// first rides, one with `alpha = 0` no retrials) gets rate exactly 0; the
/// equations are solved on the nodes reachable from station 1. That set must
/// contain every station and be strongly connected, and unreachable nodes are
/// only accepted when `pi` is strictly interior (a zero `pi_j` would silence
/// retrials for reasons unrelated to the model), otherwise the matrix is
/// reported reducible.
pub fn solve_relative_rates(routing: &RoutingMatrix) -> Result<RelativeArrivalRates> {
    let adjacency = routing.nonzero_adjacency();
    let anchor = routing.station_index[0];
    let live = reachable(&adjacency, anchor);
    let keep: Vec<usize> = (0..routing.order()).filter(|&v| live[v]).collect();
    let mut local = vec![usize::MAX; routing.order()];
    for (k, &v) in keep.iter().enumerate() {
        local[v] = k;
    }
    let sub_adjacency: Vec<Vec<usize>> = keep
        .iter()
        .map(|&u| adjacency[u].iter().map(|&v| local[v]).collect())
        .collect();
    let all_live = keep.len() == routing.order();
    if routing.station_index.iter().any(|&s| !live[s])
        || !is_strongly_connected(&sub_adjacency)
        || (!all_live && !routing.interior)
    {
        return Err(Error::ReducibleMatrix(
            "some station or road cannot reach the others; keep every full-station probability \
             strictly inside (0, 1) and the path graph strongly connected"
                .into(),
        ));
    }
    let sub = routing.entries.select_rows(&keep).select_columns(&keep);
    let x = left_fixed_vector(&sub, local[anchor])
        .ok_or_else(|| Error::ReducibleMatrix("traffic equations are singular".into()))?;
    if x.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::ReducibleMatrix(
            "traffic equations have no strictly positive solution".into(),
        ));
    }
    let at = |v: usize| if live[v] { x[local[v]] } else { 0.0 };
    Ok(RelativeArrivalRates {
        station: routing.station_index.iter().map(|&s| at(s)).collect(),
        road: routing.road_index.iter().map(|&[a, b]| [at(a), at(b)]).collect(),
    })
}

/// Left fixed vector `x = xP` with `x[anchor] = 1`, by a dense LU solve of
/// `(P^T - I) x = 0` with the anchor's balance row replaced by `x[anchor] = 1`.
pub fn left_fixed_vector(p: &DMatrix<f64>, anchor: usize) -> Option<DVector<f64>> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    a.row_mut(anchor).fill(0.0);
    a[(anchor, anchor)] = 1.0;
    let mut b = DVector::zeros(n);
    b[anchor] = 1.0;
    a.lu().solve(&b)
}

/// `max |eP - e|`, reported alongside solutions.
pub fn traffic_residual(routing: &RoutingMatrix, rates: &RelativeArrivalRates) -> f64 {
    let mut e = DVector::zeros(routing.order());
    for (i, &s) in routing.station_index.iter().enumerate() {
        e[s] = rates.station[i];
    }
    for (r, idx) in routing.road_index.iter().enumerate() {
        e[idx[0]] = rates.road[r][0];
        e[idx[1]] = rates.road[r][1];
    }
    (routing.entries.transpose() * &e - &e).amax()
}
