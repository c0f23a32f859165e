//! Road network: nodes, directed one-lane links, and signalized intersections.
//!
//! Networks are read from a TOML document with `nodes`, `links` and
//! `intersections` tables. A link's position coordinate runs from `-length`
//! at its upstream end to `0` at the downstream stop line.

mod paths;

pub use paths::{k_shortest_paths, Path, PathSet};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;
pub type LinkId = u32;

const SIOUX_FALLS: &str = include_str!("../../data/sioux_falls.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub vmax_mps: f64,
}

impl LinkSpec {
    pub fn free_flow_time(&self) -> f64 {
        self.length_m / self.vmax_mps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionSpec {
    /// Node the intersection sits on.
    pub id: NodeId,
    #[serde(rename = "R_m")]
    pub control_range_m: f64,
    #[serde(rename = "h_c_s")]
    pub clearance_s: f64,
    #[serde(rename = "h_f_s")]
    pub saturation_headway_s: f64,
    /// Phase `m` (1-based in the literature, 0-based here) lists the incoming
    /// links that hold right-of-way while it is green.
    pub phases: Vec<Vec<LinkId>>,
}

impl IntersectionSpec {
    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }

    pub fn is_signalized(&self) -> bool {
        !self.phases.is_empty()
    }

    /// First phase (0-based) that serves `link`.
    pub fn phase_of(&self, link: LinkId) -> Option<usize> {
        self.phases.iter().position(|p| p.contains(&link))
    }

    pub fn serves(&self, phase: usize, link: LinkId) -> bool {
        self.phases.get(phase).is_some_and(|p| p.contains(&link))
    }

    /// Incoming links appearing in any phase, sorted and deduplicated.
    pub fn controlled_links(&self) -> Vec<LinkId> {
        let set: BTreeSet<LinkId> = self.phases.iter().flatten().copied().collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    nodes: Vec<NodeId>,
    #[serde(default)]
    links: Vec<LinkSpec>,
    #[serde(default)]
    intersections: Vec<IntersectionSpec>,
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network parse failure: {0}")]
    Parse(String),
    #[error("invalid network: {}", .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(Vec<Violation>),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("origin and destination coincide (node {0})")]
    SameEndpoints(NodeId),
}

/// A broken network invariant, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateNode(NodeId),
    DuplicateLink(LinkId),
    UnknownEndpoint { link: LinkId, node: NodeId },
    NonPositiveLength(LinkId),
    NonPositiveSpeed(LinkId),
    MissingReverseLink { link: LinkId, from: NodeId, to: NodeId },
    OrphanNode(NodeId),
    UnknownIntersectionNode(NodeId),
    DuplicateIntersection(NodeId),
    PhaseLinkNotIncoming { intersection: NodeId, link: LinkId },
    IncomingLinkUnserved { intersection: NodeId, link: LinkId },
    SignalAtMinorNode(NodeId),
    NonPositiveTiming(NodeId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNode(n) => write!(f, "node {n}: duplicate node id"),
            Violation::DuplicateLink(l) => write!(f, "link {l}: duplicate link id"),
            Violation::UnknownEndpoint { link, node } => {
                write!(f, "link {link}: endpoint {node} is not a defined node")
            }
            Violation::NonPositiveLength(l) => write!(f, "link {l}: length must be positive"),
            Violation::NonPositiveSpeed(l) => write!(f, "link {l}: free-flow speed must be positive"),
            Violation::MissingReverseLink { link, from, to } => {
                write!(f, "link {link} ({from}->{to}): missing reverse link")
            }
            Violation::OrphanNode(n) => write!(f, "node {n}: orphan node with no links"),
            Violation::UnknownIntersectionNode(n) => {
                write!(f, "intersection {n}: not a defined node")
            }
            Violation::DuplicateIntersection(n) => write!(f, "intersection {n}: defined twice"),
            Violation::PhaseLinkNotIncoming { intersection, link } => write!(
                f,
                "intersection {intersection}: phase serves link {link}, which is not an incoming link"
            ),
            Violation::IncomingLinkUnserved { intersection, link } => write!(
                f,
                "intersection {intersection}: incoming link {link} appears in no phase"
            ),
            Violation::SignalAtMinorNode(n) => write!(
                f,
                "intersection {n}: nodes with at most two incoming links cannot be signalized"
            ),
            Violation::NonPositiveTiming(n) => write!(
                f,
                "intersection {n}: control range and headways must be positive"
            ),
        }
    }
}

/// Validated road network. Read-only once loaded.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    nodes: Vec<NodeId>,
    links: Vec<LinkSpec>,
    intersections: Vec<IntersectionSpec>,
    link_index: BTreeMap<LinkId, usize>,
    out_links: BTreeMap<NodeId, Vec<usize>>,
    in_links: BTreeMap<NodeId, Vec<usize>>,
    intersection_index: BTreeMap<NodeId, usize>,
}

/// Parse and validate a network document.
pub fn load_network(text: &str) -> Result<NetworkGraph, NetworkError> {
    let file: NetworkFile = toml::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
    let graph = NetworkGraph::from_parts(file.nodes, file.links, file.intersections);
    let violations = validate(&graph);
    if violations.is_empty() {
        Ok(graph)
    } else {
        Err(NetworkError::Invalid(violations))
    }
}

/// Every violated invariant of `graph`; empty iff the graph is valid.
pub fn validate(graph: &NetworkGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for &n in &graph.nodes {
        if !seen.insert(n) {
            out.push(Violation::DuplicateNode(n));
        }
    }
    let node_set: BTreeSet<NodeId> = graph.nodes.iter().copied().collect();

    let mut ids = BTreeSet::new();
    let mut pairs = BTreeSet::new();
    for l in &graph.links {
        if !ids.insert(l.id) {
            out.push(Violation::DuplicateLink(l.id));
        }
        for node in [l.from, l.to] {
            if !node_set.contains(&node) {
                out.push(Violation::UnknownEndpoint { link: l.id, node });
            }
        }
        if !(l.length_m > 0.0) {
            out.push(Violation::NonPositiveLength(l.id));
        }
        if !(l.vmax_mps > 0.0) {
            out.push(Violation::NonPositiveSpeed(l.id));
        }
        pairs.insert((l.from, l.to));
    }
    for l in &graph.links {
        if !pairs.contains(&(l.to, l.from)) {
            out.push(Violation::MissingReverseLink { link: l.id, from: l.from, to: l.to });
        }
    }
    for &n in &node_set {
        if graph.out_links.get(&n).is_none_or(|v| v.is_empty())
            && graph.in_links.get(&n).is_none_or(|v| v.is_empty())
        {
            out.push(Violation::OrphanNode(n));
        }
    }

    let mut seen_int = BTreeSet::new();
    for int in &graph.intersections {
        if !seen_int.insert(int.id) {
            out.push(Violation::DuplicateIntersection(int.id));
        }
        if !node_set.contains(&int.id) {
            out.push(Violation::UnknownIntersectionNode(int.id));
            continue;
        }
        if !(int.control_range_m > 0.0 && int.saturation_headway_s > 0.0 && int.clearance_s >= 0.0)
        {
            out.push(Violation::NonPositiveTiming(int.id));
        }
        let incoming: Vec<LinkId> = graph.incoming(int.id).map(|l| l.id).collect();
        if int.is_signalized() && incoming.len() <= 2 {
            out.push(Violation::SignalAtMinorNode(int.id));
        }
        for &link in int.phases.iter().flatten() {
            if !incoming.contains(&link) {
                out.push(Violation::PhaseLinkNotIncoming { intersection: int.id, link });
            }
        }
        if int.is_signalized() {
            for &link in &incoming {
                if int.phase_of(link).is_none() {
                    out.push(Violation::IncomingLinkUnserved { intersection: int.id, link });
                }
            }
        }
    }
    out
}

impl NetworkGraph {
    /// Build a graph without validating it. Use [`load_network`] for input data.
    pub fn from_parts(
        nodes: Vec<NodeId>,
        links: Vec<LinkSpec>,
        intersections: Vec<IntersectionSpec>,
    ) -> Self {
        let mut link_index = BTreeMap::new();
        let mut out_links: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        let mut in_links: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for (i, l) in links.iter().enumerate() {
            link_index.entry(l.id).or_insert(i);
            out_links.entry(l.from).or_default().push(i);
            in_links.entry(l.to).or_default().push(i);
        }
        for v in out_links.values_mut().chain(in_links.values_mut()) {
            v.sort_by_key(|&i| links[i].id);
        }
        let mut intersection_index = BTreeMap::new();
        for (i, int) in intersections.iter().enumerate() {
            intersection_index.entry(int.id).or_insert(i);
        }
        NetworkGraph {
            nodes,
            links,
            intersections,
            link_index,
            out_links,
            in_links,
            intersection_index,
        }
    }

    /// The bundled Sioux Falls network.
    pub fn sioux_falls() -> Self {
        load_network(SIOUX_FALLS).expect("bundled Sioux Falls network is valid")
    }

    pub fn sioux_falls_source() -> &'static str {
        SIOUX_FALLS
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn has_node(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn intersections(&self) -> &[IntersectionSpec] {
        &self.intersections
    }

    pub fn link(&self, id: LinkId) -> Option<&LinkSpec> {
        self.link_index.get(&id).map(|&i| &self.links[i])
    }

    /// Dense index of a link in [`NetworkGraph::links`].
    pub fn link_idx(&self, id: LinkId) -> Option<usize> {
        self.link_index.get(&id).copied()
    }

    pub fn intersection(&self, node: NodeId) -> Option<&IntersectionSpec> {
        self.intersection_index.get(&node).map(|&i| &self.intersections[i])
    }

    /// Signalized intersection at the downstream end of `link`, if any.
    pub fn downstream_signal(&self, link: LinkId) -> Option<&IntersectionSpec> {
        let l = self.link(link)?;
        self.intersection(l.to).filter(|i| i.is_signalized())
    }

    /// Outgoing links of `node`, ordered by link id.
    pub fn outgoing(&self, node: NodeId) -> impl Iterator<Item = &LinkSpec> {
        self.out_links
            .get(&node)
            .into_iter()
            .flatten()
            .map(move |&i| &self.links[i])
    }

    /// Incoming links of `node`, ordered by link id.
    pub fn incoming(&self, node: NodeId) -> impl Iterator<Item = &LinkSpec> {
        self.in_links
            .get(&node)
            .into_iter()
            .flatten()
            .map(move |&i| &self.links[i])
    }

    pub fn link_between(&self, from: NodeId, to: NodeId) -> Option<&LinkSpec> {
        self.outgoing(from).find(|l| l.to == to)
    }
}
