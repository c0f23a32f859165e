//! Loopless k-shortest paths (Yen) over free-flow link times.
//!
//! Paths compare by total free-flow time first and then by their link-id
//! sequence, so equal-cost alternatives always come out in the same order.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::{LinkId, NetworkError, NetworkGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub links: Vec<LinkId>,
    pub free_flow_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub origin: NodeId,
    pub destination: NodeId,
    pub paths: Vec<Path>,
    pub unreachable: bool,
}

impl PathSet {
    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    cost: f64,
    links: Vec<LinkId>,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.links.cmp(&other.links))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn path_cost(graph: &NetworkGraph, links: &[LinkId]) -> f64 {
    links
        .iter()
        .map(|&l| graph.link(l).map(|s| s.free_flow_time()).unwrap_or(f64::INFINITY))
        .sum()
}

/// Shortest path from `src` to `dst` avoiding the given nodes and links.
/// Labels carry the whole link sequence so ties resolve lexicographically.
fn dijkstra(
    graph: &NetworkGraph,
    src: NodeId,
    dst: NodeId,
    prefix_cost: f64,
    banned_nodes: &BTreeSet<NodeId>,
    banned_links: &BTreeSet<LinkId>,
) -> Option<Candidate> {
    let mut settled: BTreeSet<NodeId> = BTreeSet::new();
    let mut best: std::collections::BTreeMap<NodeId, Candidate> = Default::default();
    let mut heap = BinaryHeap::new();
    let start = Candidate { cost: prefix_cost, links: Vec::new() };
    heap.push((std::cmp::Reverse(start.clone()), src));
    best.insert(src, start);
    while let Some((std::cmp::Reverse(label), node)) = heap.pop() {
        if !settled.insert(node) {
            continue;
        }
        if node == dst {
            return Some(label);
        }
        for link in graph.outgoing(node) {
            if banned_links.contains(&link.id) || banned_nodes.contains(&link.to) {
                continue;
            }
            if settled.contains(&link.to) {
                continue;
            }
            let mut links = label.links.clone();
            links.push(link.id);
            let next = Candidate { cost: label.cost + link.free_flow_time(), links };
            let better = best.get(&link.to).is_none_or(|cur| next < *cur);
            if better {
                best.insert(link.to, next.clone());
                heap.push((std::cmp::Reverse(next), link.to));
            }
        }
    }
    None
}

/// Up to `k` loopless paths from `origin` to `destination`, ordered by
/// free-flow travel time.
pub fn k_shortest_paths(
    graph: &NetworkGraph,
    origin: NodeId,
    destination: NodeId,
    k: usize,
) -> Result<PathSet, NetworkError> {
    for n in [origin, destination] {
        if !graph.has_node(n) {
            return Err(NetworkError::UnknownNode(n));
        }
    }
    if origin == destination {
        return Err(NetworkError::SameEndpoints(origin));
    }
    let mut set = PathSet { origin, destination, paths: Vec::new(), unreachable: false };
    if k == 0 {
        return Ok(set);
    }
    let none_n = BTreeSet::new();
    let none_l = BTreeSet::new();
    let Some(first) = dijkstra(graph, origin, destination, 0.0, &none_n, &none_l) else {
        set.unreachable = true;
        return Ok(set);
    };

    let mut accepted: Vec<Candidate> = vec![first];
    let mut pool: BTreeSet<Candidate> = BTreeSet::new();
    while accepted.len() < k {
        let last = accepted.last().expect("nonempty").links.clone();
        let nodes = node_sequence(graph, origin, &last);
        for spur_at in 0..last.len() {
            let root = &last[..spur_at];
            let spur_node = nodes[spur_at];
            let mut banned_links = BTreeSet::new();
            for p in &accepted {
                if p.links.len() > spur_at && p.links[..spur_at] == *root {
                    banned_links.insert(p.links[spur_at]);
                }
            }
            let banned_nodes: BTreeSet<NodeId> = nodes[..spur_at].iter().copied().collect();
            let Some(spur) = dijkstra(graph, spur_node, destination, 0.0, &banned_nodes, &banned_links)
            else {
                continue;
            };
            let mut links = root.to_vec();
            links.extend_from_slice(&spur.links);
            let cand = Candidate { cost: path_cost(graph, &links), links };
            if !accepted.contains(&cand) {
                pool.insert(cand);
            }
        }
        match pool.pop_first() {
            Some(next) => accepted.push(next),
            None => break,
        }
    }
    accepted.sort();
    set.paths = accepted
        .into_iter()
        .map(|c| Path { free_flow_time: c.cost, links: c.links })
        .collect();
    Ok(set)
}

fn node_sequence(graph: &NetworkGraph, origin: NodeId, links: &[LinkId]) -> Vec<NodeId> {
    let mut nodes = vec![origin];
    for &l in links {
        nodes.push(graph.link(l).expect("path link exists").to);
    }
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LinkSpec;

    fn link(id: LinkId, from: NodeId, to: NodeId, len: f64) -> LinkSpec {
        LinkSpec { id, from, to, length_m: len, vmax_mps: 1.0 }
    }

    /// Two disjoint two-hop routes 1-2-4 (cost 10) and 1-3-4 (cost 12).
    fn diamond() -> NetworkGraph {
        let mut links = Vec::new();
        let mut id = 1;
        for (a, b, c) in [(1, 2, 5.0), (2, 4, 5.0), (1, 3, 6.0), (3, 4, 6.0)] {
            links.push(link(id, a, b, c));
            links.push(link(id + 1, b, a, c));
            id += 2;
        }
        NetworkGraph::from_parts(vec![1, 2, 3, 4], links, vec![])
    }

    #[test]
    fn diamond_yields_both_routes_in_order() {
        let g = diamond();
        let ps = k_shortest_paths(&g, 1, 4, 7).unwrap();
        assert_eq!(ps.paths.len(), 2);
        assert_eq!(ps.paths[0].links, vec![1, 3]);
        assert_eq!(ps.paths[0].free_flow_time, 10.0);
        assert_eq!(ps.paths[1].links, vec![5, 7]);
        assert_eq!(ps.paths[1].free_flow_time, 12.0);
    }

    #[test]
    fn preconditions() {
        let g = diamond();
        assert!(matches!(k_shortest_paths(&g, 1, 1, 3), Err(NetworkError::SameEndpoints(1))));
        assert!(matches!(k_shortest_paths(&g, 1, 9, 3), Err(NetworkError::UnknownNode(9))));
    }

    #[test]
    fn unreachable_is_flagged() {
        let links = vec![link(1, 1, 2, 1.0), link(2, 2, 1, 1.0), link(3, 3, 4, 1.0), link(4, 4, 3, 1.0)];
        let g = NetworkGraph::from_parts(vec![1, 2, 3, 4], links, vec![]);
        let ps = k_shortest_paths(&g, 1, 4, 3).unwrap();
        assert!(ps.unreachable && ps.is_empty());
    }

    #[test]
    fn equal_cost_ties_follow_link_ids() {
        // two routes of identical cost; the one with smaller link ids wins
        let links = vec![
            link(1, 1, 2, 1.0),
            link(2, 2, 1, 1.0),
            link(3, 2, 4, 1.0),
            link(4, 4, 2, 1.0),
            link(5, 1, 3, 1.0),
            link(6, 3, 1, 1.0),
            link(7, 3, 4, 1.0),
            link(8, 4, 3, 1.0),
        ];
        let g = NetworkGraph::from_parts(vec![1, 2, 3, 4], links, vec![]);
        let ps = k_shortest_paths(&g, 1, 4, 1).unwrap();
        assert_eq!(ps.paths[0].links, vec![1, 3]);
        let ps = k_shortest_paths(&g, 4, 1, 2).unwrap();
        assert_eq!(ps.paths[0].links, vec![4, 2]);
        assert_eq!(ps.paths[1].links, vec![8, 6]);
    }
}
