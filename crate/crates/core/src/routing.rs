//! Marginal-cost routing of CAVs: rolling-window edge measurements,
//! filtered congestion sensitivities, time-binned occupancy predictions and
//! per-vehicle path choice.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::network::{LinkId, NetworkGraph, PathSet};

/// One completed traversal of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraversalEvent {
    pub edge: LinkId,
    pub entry: f64,
    pub exit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMeasurement {
    pub edge: LinkId,
    pub travel_time: f64,
    pub accumulation: f64,
    pub window: f64,
    pub timestamp: f64,
}

impl EdgeMeasurement {
    pub fn initial(edge: LinkId, free_flow_time: f64, window: f64) -> Self {
        EdgeMeasurement { edge, travel_time: free_flow_time, accumulation: 0.0, window, timestamp: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEstimate {
    pub edge: LinkId,
    pub raw: f64,
    pub filtered: f64,
    pub alpha: f64,
}

impl SensitivityEstimate {
    pub fn new(edge: LinkId, alpha: f64) -> Self {
        SensitivityEstimate { edge, raw: 0.0, filtered: 0.0, alpha }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoutingParams {
    /// Length of the rolling measurement window, s.
    pub window_s: f64,
    /// Router update period, s.
    pub macro_step_s: f64,
    pub bin_width_s: f64,
    pub horizon_bins: usize,
    pub alpha: f64,
    /// Candidate paths per OD pair.
    pub k_paths: usize,
}

impl Default for RoutingParams {
    fn default() -> Self {
        RoutingParams {
            window_s: 300.0,
            macro_step_s: 10.0,
            bin_width_s: 10.0,
            horizon_bins: 210,
            alpha: 0.3,
            k_paths: 7,
        }
    }
}

/// Mean traversal time of the events completing in `(clock - window, clock]`
/// for every edge, falling back to the previous value; accumulation is the
/// current count.
pub fn update_measurements(
    events: &[TraversalEvent],
    clock: f64,
    previous: &[EdgeMeasurement],
    counts: &[f64],
) -> Vec<EdgeMeasurement> {
    previous
        .iter()
        .zip(counts)
        .map(|(prev, &count)| {
            let (sum, n) = events
                .iter()
                .filter(|e| e.edge == prev.edge && e.exit > clock - prev.window && e.exit <= clock)
                .fold((0.0, 0usize), |(s, n), e| (s + (e.exit - e.entry), n + 1));
            EdgeMeasurement {
                travel_time: if n > 0 { sum / n as f64 } else { prev.travel_time },
                accumulation: count,
                timestamp: clock,
                ..*prev
            }
        })
        .collect()
}

/// Finite-difference sensitivity of travel time to accumulation, low-pass
/// filtered and clamped to be nonnegative. Unchanged when the accumulation
/// did not change.
pub fn estimate_sensitivity(
    prev: &EdgeMeasurement,
    curr: &EdgeMeasurement,
    prior: &SensitivityEstimate,
) -> SensitivityEstimate {
    let dn = curr.accumulation - prev.accumulation;
    if dn == 0.0 {
        return *prior;
    }
    let raw = (curr.travel_time - prev.travel_time) / dn;
    let filtered = (prior.alpha * raw + (1.0 - prior.alpha) * prior.filtered).max(0.0);
    SensitivityEstimate { raw, filtered, ..*prior }
}

/// Cost of one more vehicle on an edge: its own travel time plus the delay
/// it imposes on the `n` vehicles already there.
pub fn marginal_cost_edge(tau: f64, n: f64, eta: f64) -> f64 {
    tau + n * eta
}

/// Predicted HDV and CAV counts per edge and time bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryMatrices {
    pub edges: usize,
    pub horizon: usize,
    pub bin_width: f64,
    pub hdv: Vec<f64>,
    pub cav: Vec<f64>,
}

impl MemoryMatrices {
    pub fn new(edges: usize, horizon: usize, bin_width: f64) -> Self {
        MemoryMatrices {
            edges,
            horizon,
            bin_width,
            hdv: vec![0.0; edges * horizon],
            cav: vec![0.0; edges * horizon],
        }
    }

    /// Bin of absolute time `t`, clamped to the last bin; the flag is set
    /// when clamping happened.
    pub fn bin_of(&self, t: f64) -> (usize, bool) {
        let b = (t / self.bin_width).floor().max(0.0) as usize;
        if b >= self.horizon {
            (self.horizon - 1, true)
        } else {
            (b, false)
        }
    }

    pub fn predicted(&self, edge_idx: usize, bin: usize) -> f64 {
        let i = edge_idx * self.horizon + bin.min(self.horizon - 1);
        self.hdv[i] + self.cav[i]
    }

    pub fn total_cav(&self) -> f64 {
        self.cav.iter().sum()
    }

    pub fn total_hdv(&self) -> f64 {
        self.hdv.iter().sum()
    }
}

/// Which matrix a reservation goes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupant {
    Hdv,
    Cav,
}

/// Projected passage over one edge of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeArrival {
    pub edge: LinkId,
    pub edge_idx: usize,
    pub bin: usize,
    pub travel_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteAssignment {
    pub vehicle: u32,
    pub path_index: usize,
    pub indicator: Vec<u8>,
    pub cost: f64,
    /// Predicted marginal cost of every candidate, by path index.
    pub candidate_costs: Vec<f64>,
    pub arrivals: Vec<EdgeArrival>,
}

/// Add one vehicle to `[bin, bin + ceil(τ̂ / width))` of every edge.
/// Returns true when some bins fell past the horizon.
pub fn register_reservation(
    arrivals: &[EdgeArrival],
    matrices: &mut MemoryMatrices,
    occupant: Occupant,
) -> bool {
    let horizon = matrices.horizon;
    let width = matrices.bin_width;
    let target = match occupant {
        Occupant::Hdv => &mut matrices.hdv,
        Occupant::Cav => &mut matrices.cav,
    };
    let mut truncated = false;
    for a in arrivals {
        let span = (a.travel_time / width).ceil().max(1.0) as usize;
        let end = a.bin + span;
        if end > horizon {
            truncated = true;
        }
        for b in a.bin..end.min(horizon) {
            target[a.edge_idx * horizon + b] += 1.0;
        }
    }
    truncated
}

/// Router state: one entry per network link, in link order.
#[derive(Debug, Clone)]
pub struct Router {
    pub params: RoutingParams,
    pub edges: Vec<LinkId>,
    pub free_flow: Vec<f64>,
    pub measurements: Vec<EdgeMeasurement>,
    pub sensitivities: Vec<SensitivityEstimate>,
    pub matrices: MemoryMatrices,
    windows: Vec<VecDeque<(f64, f64)>>,
    /// Projections that had to use the last bin.
    pub beyond_horizon: u64,
}

impl Router {
    pub fn new(graph: &NetworkGraph, params: RoutingParams) -> Self {
        let edges: Vec<LinkId> = graph.links().iter().map(|l| l.id).collect();
        let free_flow: Vec<f64> = graph.links().iter().map(|l| l.free_flow_time()).collect();
        Router {
            measurements: edges
                .iter()
                .zip(&free_flow)
                .map(|(&e, &f)| EdgeMeasurement::initial(e, f, params.window_s))
                .collect(),
            sensitivities: edges.iter().map(|&e| SensitivityEstimate::new(e, params.alpha)).collect(),
            matrices: MemoryMatrices::new(edges.len(), params.horizon_bins, params.bin_width_s),
            windows: vec![VecDeque::new(); edges.len()],
            edges,
            free_flow,
            params,
            beyond_horizon: 0,
        }
    }

    /// Record a completed traversal of the edge at `edge_idx`.
    pub fn record_traversal(&mut self, edge_idx: usize, entry: f64, exit: f64) {
        self.windows[edge_idx].push_back((exit, exit - entry));
    }

    /// Refresh measurements and sensitivities at `clock` given the current
    /// per-edge vehicle counts.
    pub fn macro_step(&mut self, clock: f64, counts: &[f64]) {
        for (i, window) in self.windows.iter_mut().enumerate() {
            while window.front().is_some_and(|&(exit, _)| exit <= clock - self.params.window_s) {
                window.pop_front();
            }
            let prev = self.measurements[i];
            let travel_time = if window.is_empty() {
                prev.travel_time
            } else {
                window.iter().map(|&(_, d)| d).sum::<f64>() / window.len() as f64
            };
            let curr = EdgeMeasurement { travel_time, accumulation: counts[i], timestamp: clock, ..prev };
            self.sensitivities[i] = estimate_sensitivity(&prev, &curr, &self.sensitivities[i]);
            self.measurements[i] = curr;
        }
    }

    /// Taylor projection of the travel time on an edge entered in `bin`,
    /// floored at free flow.
    pub fn project_travel_time(&self, edge_idx: usize, bin: usize) -> f64 {
        let m = &self.measurements[edge_idx];
        let eta = self.sensitivities[edge_idx].filtered;
        let n = self.matrices.predicted(edge_idx, bin);
        self.free_flow[edge_idx].max(m.travel_time + eta * (n - m.accumulation))
    }

    /// Predicted marginal cost of `path` (link ids) departing at `depart`,
    /// accumulated edge by edge along the projected clock.
    pub fn path_marginal_cost(&mut self, graph: &NetworkGraph, path: &[LinkId], depart: f64) -> (f64, Vec<EdgeArrival>) {
        let mut clock = depart;
        let mut cost = 0.0;
        let mut arrivals = Vec::with_capacity(path.len());
        for &edge in path {
            let idx = graph.link_idx(edge).expect("path edge exists");
            let (bin, clamped) = self.matrices.bin_of(clock);
            if clamped {
                self.beyond_horizon += 1;
            }
            let tau = self.project_travel_time(idx, bin);
            let n = self.matrices.predicted(idx, bin);
            cost += marginal_cost_edge(tau, n, self.sensitivities[idx].filtered);
            arrivals.push(EdgeArrival { edge, edge_idx: idx, bin, travel_time: tau });
            clock += tau;
        }
        (cost, arrivals)
    }

    /// Pick the candidate with the smallest predicted marginal cost (lowest
    /// index on ties) and reserve its projected presence.
    pub fn assign_route(&mut self, graph: &NetworkGraph, vehicle: u32, paths: &PathSet, depart: f64) -> RouteAssignment {
        assert!(!paths.paths.is_empty(), "no candidate paths");
        let evaluated: Vec<(f64, Vec<EdgeArrival>)> = paths
            .paths
            .iter()
            .map(|p| self.path_marginal_cost(graph, &p.links, depart))
            .collect();
        let best = evaluated
            .iter()
            .enumerate()
            .fold(0, |best, (i, (c, _))| if *c < evaluated[best].0 { i } else { best });
        let candidate_costs: Vec<f64> = evaluated.iter().map(|(c, _)| *c).collect();
        let (cost, arrivals) = evaluated.into_iter().nth(best).expect("best index in range");
        if register_reservation(&arrivals, &mut self.matrices, Occupant::Cav) {
            self.beyond_horizon += 1;
        }
        let mut indicator = vec![0; paths.paths.len()];
        indicator[best] = 1;
        RouteAssignment { vehicle, path_index: best, indicator, cost, candidate_costs, arrivals }
    }

    /// Register an HDV on its shortest path using free-flow bin estimates.
    pub fn register_hdv(&mut self, graph: &NetworkGraph, path: &[LinkId], depart: f64) {
        let mut clock = depart;
        let mut arrivals = Vec::with_capacity(path.len());
        for &edge in path {
            let idx = graph.link_idx(edge).expect("path edge exists");
            let (bin, _) = self.matrices.bin_of(clock);
            let tau = self.free_flow[idx];
            arrivals.push(EdgeArrival { edge, edge_idx: idx, bin, travel_time: tau });
            clock += tau;
        }
        if register_reservation(&arrivals, &mut self.matrices, Occupant::Hdv) {
            self.beyond_horizon += 1;
        }
    }

    /// Tab-separated dump of the router state at `clock`.
    pub fn dump_state(&self, clock: f64) -> String {
        let (bin, _) = self.matrices.bin_of(clock);
        let mut out = String::from("edge\tfree_flow_s\ttravel_time_s\taccumulation\teta_raw\teta\tpredicted_hdv\tpredicted_cav\n");
        for i in 0..self.edges.len() {
            let k = i * self.matrices.horizon + bin;
            let _ = writeln!(
                out,
                "{}\t{:.3}\t{:.3}\t{:.1}\t{:.4}\t{:.4}\t{:.1}\t{:.1}",
                self.edges[i],
                self.free_flow[i],
                self.measurements[i].travel_time,
                self.measurements[i].accumulation,
                self.sensitivities[i].raw,
                self.sensitivities[i].filtered,
                self.matrices.hdv[k],
                self.matrices.cav[k],
            );
        }
        out
    }
}
