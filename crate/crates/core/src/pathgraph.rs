//! Station/road accessibility graph and its strong connectivity.

use std::collections::VecDeque;

use crate::model::{BikeShareModel, RoadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathNode {
    Station(usize),
    Road { from: usize, to: usize },
}

/// Directed graph with one node per station and one per road (ride classes
/// collapsed). Nodes follow the canonical order: station `i`, then the roads
/// leaving `i` by ascending destination.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGraph {
    nodes: Vec<PathNode>,
    adjacency: Vec<Vec<usize>>,
}

impl PathGraph {
    pub fn nodes(&self) -> &[PathNode] {
        &self.nodes
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn edges(&self) -> impl Iterator<Item = (PathNode, PathNode)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(move |(u, out)| out.iter().map(move |&v| (self.nodes[u], self.nodes[v])))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }
}

pub fn build_path_graph(model: &BikeShareModel) -> PathGraph {
    let roads: Vec<(usize, usize)> = model.roads().iter().map(|r| (r.from, r.to)).collect();
    graph_from_roads(model.station_count(), &roads)
}

/// Builds the path graph straight from a raw road list, so the connectivity
/// verdict is available even for models that fail validation.
pub fn build_path_graph_from_specs(stations: usize, roads: &[RoadSpec]) -> PathGraph {
    let roads: Vec<(usize, usize)> = roads
        .iter()
        .filter(|r| r.from < stations && r.to < stations && r.from != r.to)
        .map(|r| (r.from, r.to))
        .collect();
    graph_from_roads(stations, &roads)
}

fn graph_from_roads(stations: usize, roads: &[(usize, usize)]) -> PathGraph {
    let mut roads = roads.to_vec();
    roads.sort_unstable();
    roads.dedup();

    let mut nodes = Vec::with_capacity(stations + roads.len());
    let mut station_node = vec![0; stations];
    let mut road_node = Vec::with_capacity(roads.len());
    let mut cursor = 0;
    for (i, slot) in station_node.iter_mut().enumerate() {
        *slot = nodes.len();
        nodes.push(PathNode::Station(i));
        while cursor < roads.len() && roads[cursor].0 == i {
            road_node.push(nodes.len());
            nodes.push(PathNode::Road {
                from: i,
                to: roads[cursor].1,
            });
            cursor += 1;
        }
    }

    let mut adjacency = vec![Vec::new(); nodes.len()];
    for (r, &(from, to)) in roads.iter().enumerate() {
        adjacency[station_node[from]].push(road_node[r]);
        adjacency[road_node[r]].push(station_node[to]);
    }
    PathGraph { nodes, adjacency }
}

pub fn is_irreducible(graph: &PathGraph) -> bool {
    is_strongly_connected(&graph.adjacency)
}

/// True iff every node reaches every other node. An empty graph is not
/// considered connected.
pub fn is_strongly_connected(adjacency: &[Vec<usize>]) -> bool {
    let n = adjacency.len();
    if n == 0 {
        return false;
    }
    let mut reverse = vec![Vec::new(); n];
    for (u, out) in adjacency.iter().enumerate() {
        for &v in out {
            reverse[v].push(u);
        }
    }
    reaches_all(adjacency) && reaches_all(&reverse)
}

fn reaches_all(adjacency: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == adjacency.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::model::validate_model;

    fn graph(spec: crate::model::ModelSpec) -> PathGraph {
        build_path_graph(&validate_model(&spec).unwrap())
    }

    #[test]
    fn two_station_graph() {
        let g = graph(catalog::example_one(2, 3));
        assert_eq!(g.nodes().len(), 4);
        assert_eq!(
            g.nodes(),
            &[
                PathNode::Station(0),
                PathNode::Road { from: 0, to: 1 },
                PathNode::Station(1),
                PathNode::Road { from: 1, to: 0 },
            ]
        );
        // Two station->road and two road->station edges, forming one cycle.
        assert_eq!(g.edge_count(), 4);
        let edges: Vec<_> = g.edges().collect();
        assert!(edges.contains(&(PathNode::Station(0), PathNode::Road { from: 0, to: 1 })));
        assert!(edges.contains(&(PathNode::Road { from: 0, to: 1 }, PathNode::Station(1))));
        assert!(edges.contains(&(PathNode::Station(1), PathNode::Road { from: 1, to: 0 })));
        assert!(edges.contains(&(PathNode::Road { from: 1, to: 0 }, PathNode::Station(0))));
        assert!(is_irreducible(&g));
    }

    #[test]
    fn ring_is_irreducible() {
        let g = graph(catalog::example_two());
        assert_eq!(g.nodes().len(), 6);
        assert_eq!(g.edge_count(), 6);
        assert!(is_irreducible(&g));
    }

    #[test]
    fn line_is_irreducible() {
        assert!(is_irreducible(&graph(catalog::example_three(0.4, 0.7))));
    }

    #[test]
    fn one_way_pair_is_reducible() {
        let spec = catalog::one_way_pair();
        let g = build_path_graph_from_specs(spec.stations.len(), &spec.roads);
        assert_eq!(g.nodes().len(), 3);
        assert!(!is_irreducible(&g));
    }

    #[test]
    fn empty_graph_is_not_connected() {
        assert!(!is_strongly_connected(&[]));
        assert!(is_strongly_connected(&[vec![]]));
    }

    #[test]
    fn relabeling_preserves_connectivity() {
        // Ring 0->1->2->0 relabeled by the permutation (2, 0, 1).
        let spec = catalog::example_two();
        let perm = [2usize, 0, 1];
        let roads: Vec<RoadSpec> = spec
            .roads
            .iter()
            .map(|r| RoadSpec {
                from: perm[r.from],
                to: perm[r.to],
                ..*r
            })
            .collect();
        assert!(is_irreducible(&build_path_graph_from_specs(3, &roads)));
        let broken: Vec<RoadSpec> = roads[1..].to_vec();
        assert!(!is_irreducible(&build_path_graph_from_specs(3, &broken)));
    }
}
