use serde::{Deserialize, Serialize};

use crate::network::{IntersectionSpec, LinkId, NodeId};
use crate::Interval;

/// Green starts and ends for consecutive phase steps separated by a fixed
/// clearance. Times are relative to the start of the first step.
pub fn compute_phase_timing(eta: &[f64], clearance: f64) -> (Vec<f64>, Vec<f64>) {
    let mut tau = Vec::with_capacity(eta.len());
    let mut theta = Vec::with_capacity(eta.len());
    for (h, &d) in eta.iter().enumerate() {
        let start = if h == 0 { 0.0 } else { theta[h - 1] + clearance };
        tau.push(start);
        theta.push(start + d);
    }
    (tau, theta)
}

/// Signal policy of one intersection over a horizon of phase steps.
///
/// Phases are 0-based; step `h` (0-based) runs phase `h mod M`. `tau` and
/// `theta` are relative to `origin`, the absolute time the first step starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub origin: f64,
    pub phase_count: usize,
    /// Phase active at publication and its remaining green.
    pub active_phase: usize,
    pub active_remaining: f64,
    pub sigma: Vec<usize>,
    pub eta: Vec<f64>,
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
    pub clearance: f64,
    /// Lost time contained in every nonzero green.
    #[serde(default)]
    pub lost_time: f64,
}

impl PhaseSchedule {
    pub fn from_durations(origin: f64, phase_count: usize, eta: Vec<f64>, clearance: f64) -> Self {
        assert!(phase_count > 0, "a schedule needs at least one phase");
        debug_assert!(eta.iter().all(|&d| d >= 0.0));
        let (tau, theta) = compute_phase_timing(&eta, clearance);
        let sigma = (0..eta.len()).map(|h| h % phase_count).collect();
        PhaseSchedule {
            origin,
            phase_count,
            active_phase: 0,
            active_remaining: eta.first().copied().unwrap_or(0.0),
            sigma,
            eta,
            tau,
            theta,
            clearance,
            lost_time: 0.0,
        }
    }

    pub fn with_lost_time(mut self, lost_time: f64) -> Self {
        self.lost_time = lost_time;
        self
    }

    /// Latest time a vehicle may begin its discharge slot in step `h`: each
    /// crossing occupies one saturation headway of the effective green.
    pub fn service_end(&self, h: usize, headway: f64) -> f64 {
        self.theta[h] - self.lost_time - headway
    }

    pub fn steps(&self) -> usize {
        self.eta.len()
    }

    /// Relative end of the last green in the horizon.
    pub fn last_end(&self) -> f64 {
        self.theta.last().copied().unwrap_or(0.0)
    }

    /// Absolute start of step `h` (0-based), or of the step after the horizon.
    pub fn step_start_abs(&self, h: usize) -> f64 {
        if h < self.steps() {
            self.origin + self.tau[h]
        } else {
            self.origin + self.last_end() + self.clearance
        }
    }

    /// Steps whose phase serves `link` with a nonzero green.
    pub fn serving_steps<'a>(
        &'a self,
        intersection: &'a IntersectionSpec,
        link: LinkId,
    ) -> impl Iterator<Item = usize> + 'a {
        (0..self.steps())
            .filter(move |&h| self.eta[h] > 0.0 && intersection.serves(self.sigma[h], link))
    }
}

/// Absolute green intervals open to `link` under `schedule`, in time order.
/// Approaches without a signal get a single unbounded interval from `now`.
pub fn green_intervals_for_link(
    schedule: Option<&PhaseSchedule>,
    intersection: Option<&IntersectionSpec>,
    link: LinkId,
    now: f64,
) -> Vec<Interval> {
    match (schedule, intersection) {
        (Some(s), Some(int)) if int.is_signalized() => s
            .serving_steps(int, link)
            .map(|h| Interval::new(s.origin + s.tau[h], s.origin + s.theta[h]))
            .collect(),
        _ => vec![Interval::always(now)],
    }
}

/// Schedule published to vehicles at a phase change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastRecord {
    pub intersection: NodeId,
    pub timestamp: f64,
    pub sigma: Vec<usize>,
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
}

impl BroadcastRecord {
    pub fn new(intersection: NodeId, schedule: &PhaseSchedule) -> Self {
        BroadcastRecord {
            intersection,
            timestamp: schedule.origin,
            sigma: schedule.sigma.clone(),
            tau: schedule.tau.iter().map(|t| schedule.origin + t).collect(),
            theta: schedule.theta.iter().map(|t| schedule.origin + t).collect(),
            eta: schedule.eta.clone(),
        }
    }
}
