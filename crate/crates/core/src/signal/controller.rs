//! Signal controllers: the receding-horizon optimizer and fixed-time plans.

use super::estimate::{LinkQueueSnapshot, QueuedVehicle};
use super::optimize::{green_durations_from_counts, optimize_discharge, DischargePlan, SignalParams};
use super::timing::{BroadcastRecord, PhaseSchedule};
use crate::network::{IntersectionSpec, LinkId, NetworkGraph, NodeId};
use crate::Interval;

/// Vehicles measured on one incoming link, closest to the stop line first.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachMeasurement {
    pub link: LinkId,
    pub vehicles: Vec<QueuedVehicle>,
}

/// Receding-horizon controller of one intersection. It is invoked at the
/// start of every cycle: the first cycle of the horizon replays the counts
/// committed last time, the second cycle is optimized and becomes the next
/// commitment.
#[derive(Debug, Clone)]
pub struct SignalController {
    intersection: IntersectionSpec,
    links: Vec<LinkId>,
    free_speeds: Vec<f64>,
    params: SignalParams,
    committed: Vec<Vec<u32>>,
    avg_green: Vec<f64>,
    next_change: f64,
    last_plan: Option<DischargePlan>,
}

impl SignalController {
    pub fn new(intersection: &IntersectionSpec, graph: &NetworkGraph, params: SignalParams) -> Self {
        let links = intersection.controlled_links();
        let free_speeds = links
            .iter()
            .map(|&l| graph.link(l).map(|s| s.vmax_mps).unwrap_or(13.89))
            .collect();
        let m = intersection.phase_count();
        let initial = params.initial_avg_green.unwrap_or(
            (params.n_max as f64 * intersection.saturation_headway_s + params.lost_time) / 2.0,
        );
        SignalController {
            intersection: intersection.clone(),
            committed: vec![vec![0; m]; links.len()],
            links,
            free_speeds,
            params,
            avg_green: vec![initial; m],
            next_change: 0.0,
            last_plan: None,
        }
    }

    pub fn intersection(&self) -> &IntersectionSpec {
        &self.intersection
    }

    /// Absolute time of the next cycle boundary.
    pub fn next_change(&self) -> f64 {
        self.next_change
    }

    pub fn committed(&self) -> &[Vec<u32>] {
        &self.committed
    }

    pub fn last_plan(&self) -> Option<&DischargePlan> {
        self.last_plan.as_ref()
    }

    /// Moving-average green of `phase`.
    pub fn avg_green(&self, phase: usize) -> f64 {
        self.avg_green[phase]
    }

    /// Build queue snapshots from raw measurements, keeping only vehicles
    /// inside the control zone.
    pub fn snapshots(&self, measurements: &[ApproachMeasurement]) -> Vec<LinkQueueSnapshot> {
        let range = self.intersection.control_range_m;
        self.links
            .iter()
            .zip(&self.free_speeds)
            .map(|(&link, &free_speed)| {
                let phase = self.intersection.phase_of(link).expect("controlled link has a phase");
                let vehicles = measurements
                    .iter()
                    .find(|m| m.link == link)
                    .map(|m| m.vehicles.iter().copied().filter(|v| v.distance <= range).collect())
                    .unwrap_or_default();
                LinkQueueSnapshot {
                    link,
                    vehicles,
                    phase,
                    avg_green: self.avg_green[phase],
                    free_speed,
                }
            })
            .collect()
    }

    /// Measure, keep the committed cycle, optimize the next one, publish the
    /// two-cycle schedule, then shift the optimized cycle into the commitment.
    pub fn receding_horizon_update(
        &mut self,
        measurements: &[ApproachMeasurement],
        clock: f64,
    ) -> (PhaseSchedule, BroadcastRecord) {
        debug_assert!(
            (clock - self.next_change).abs() < 1e-6,
            "signal update at {clock} is not at the phase change {}",
            self.next_change
        );
        let queues = self.snapshots(measurements);
        let plan = optimize_discharge(&self.intersection, &queues, &self.committed, &self.params)
            .expect("committed counts come from a feasible plan");
        let eta = green_durations_from_counts(&plan, &self.intersection);
        let m = self.intersection.phase_count();
        let schedule = PhaseSchedule::from_durations(clock, m, eta, self.intersection.clearance_s)
            .with_lost_time(self.params.lost_time);
        let record = BroadcastRecord::new(self.intersection.id, &schedule);

        let w = self.params.avg_green_weight;
        for (phase, avg) in self.avg_green.iter_mut().enumerate() {
            if schedule.eta[phase] > 0.0 {
                *avg = (1.0 - w) * *avg + w * schedule.eta[phase];
            }
        }
        self.committed = plan.second_cycle();
        self.next_change = schedule.step_start_abs(m);
        self.last_plan = Some(plan);
        (schedule, record)
    }
}

/// Fixed-time control: every phase gets the same green, cycling forever.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedTimePlan {
    pub intersection: NodeId,
    pub phase_count: usize,
    pub green: f64,
    pub clearance: f64,
}

impl FixedTimePlan {
    pub fn cycle_length(&self) -> f64 {
        self.phase_count as f64 * (self.green + self.clearance)
    }

    /// Two-cycle schedule starting at `cycle_start`.
    pub fn schedule_at(&self, cycle_start: f64) -> PhaseSchedule {
        PhaseSchedule::from_durations(
            cycle_start,
            self.phase_count,
            vec![self.green; 2 * self.phase_count],
            self.clearance,
        )
    }

    /// Greens of `phase` overlapping `[from, to]`, in time order.
    pub fn greens(&self, phase: usize, from: f64, to: f64) -> Vec<Interval> {
        let cycle = self.cycle_length();
        let offset = phase as f64 * (self.green + self.clearance);
        let mut k = ((from - offset - self.green) / cycle).ceil().max(0.0) as u64;
        let mut out = Vec::new();
        loop {
            let start = k as f64 * cycle + offset;
            if start > to {
                break;
            }
            out.push(Interval::new(start, start + self.green));
            k += 1;
        }
        out
    }
}

/// Fixed-time plans for every signalized intersection of the network.
pub fn fixed_time_plans(graph: &NetworkGraph, params: &SignalParams) -> Vec<FixedTimePlan> {
    graph
        .intersections()
        .iter()
        .filter(|i| i.is_signalized())
        .map(|i| FixedTimePlan {
            intersection: i.id,
            phase_count: i.phase_count(),
            green: params.fixed_green,
            clearance: i.clearance_s,
        })
        .collect()
}
