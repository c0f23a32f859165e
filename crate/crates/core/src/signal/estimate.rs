//! Crossing-time and delay estimates for vehicles queued on one approach.

use serde::{Deserialize, Serialize};

use super::timing::PhaseSchedule;
use crate::dynamics::VehicleClass;
use crate::network::LinkId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueuedVehicle {
    /// Distance to the stop line, metres (>= 0).
    pub distance: f64,
    pub speed: f64,
    pub class: VehicleClass,
}

/// Vehicles on one incoming link inside the control zone, closest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkQueueSnapshot {
    pub link: LinkId,
    pub vehicles: Vec<QueuedVehicle>,
    /// Phase (0-based) that serves the link.
    pub phase: usize,
    /// Average green of the link's phase, used past the horizon.
    pub avg_green: f64,
    /// Reference crossing (free-flow) speed of the link.
    pub free_speed: f64,
}

impl LinkQueueSnapshot {
    pub fn is_ordered(&self) -> bool {
        self.vehicles.windows(2).all(|w| w[0].distance < w[1].distance)
    }
}

/// Start-up delay added to the free-flow estimate of a nearly stopped vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartupDelay {
    pub delay: f64,
    pub stop_speed: f64,
}

impl Default for StartupDelay {
    fn default() -> Self {
        StartupDelay { delay: 2.0, stop_speed: 0.5 }
    }
}

impl StartupDelay {
    pub fn at(&self, speed: f64) -> f64 {
        if speed < self.stop_speed {
            self.delay
        } else {
            0.0
        }
    }
}

/// Crossing times under a permanent green: distance at free speed plus
/// start-up delay, no earlier than the predecessor plus one saturation headway.
pub fn free_flow_crossing_times(
    queue: &LinkQueueSnapshot,
    free_speed: f64,
    headway: f64,
    startup: &StartupDelay,
) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(queue.vehicles.len());
    for veh in &queue.vehicles {
        let own = veh.distance / free_speed + startup.at(veh.speed);
        let t = match out.last() {
            Some(&prev) => own.max(prev + headway),
            None => own,
        };
        out.push(t);
    }
    out
}

/// Crossing times under `schedule` (relative times), evaluated front to back.
///
/// Each vehicle's reference time is its free-flow time, pushed back to one
/// headway behind its predecessor's signalized time. A green serves reference
/// times from its start up to its service end (one headway and the lost time
/// before it closes). The vehicle crosses at the reference time if a serving
/// green covers it, otherwise at the next serving green start in the horizon,
/// otherwise after the horizon at the projected end of its phase's next
/// green (never before the reference time).
pub fn signalized_crossing_times(
    queue: &LinkQueueSnapshot,
    free_times: &[f64],
    schedule: &PhaseSchedule,
    headway: f64,
) -> Vec<f64> {
    let steps: Vec<usize> = (0..schedule.steps())
        .filter(|&h| {
            schedule.sigma[h] == queue.phase
                && schedule.eta[h] > 0.0
                && schedule.service_end(h, headway) >= schedule.tau[h]
        })
        .collect();
    let m = schedule.phase_count as i64;
    let last_phase = schedule.sigma.last().copied().unwrap_or(0) as i64;
    // the projected green of the phase ends this many average greens past
    // the horizon; the phase that closes the horizon waits a full cycle
    let offset = (queue.phase as i64 - last_phase - 1).rem_euclid(m) + 1;
    let beyond = schedule.last_end() + queue.avg_green * offset as f64;

    let mut out: Vec<f64> = Vec::with_capacity(free_times.len());
    for &free in free_times {
        let r = match out.last() {
            Some(&prev) => free.max(prev + headway),
            None => free,
        };
        let inside = steps
            .iter()
            .any(|&h| schedule.tau[h] <= r && r <= schedule.service_end(h, headway));
        let t = if inside {
            r
        } else if let Some(&h) = steps.iter().find(|&&h| schedule.tau[h] > r) {
            schedule.tau[h]
        } else {
            beyond.max(r)
        };
        out.push(t);
    }
    out
}

/// Signal-induced delay of every queued vehicle.
pub fn estimated_delays(
    queue: &LinkQueueSnapshot,
    schedule: &PhaseSchedule,
    headway: f64,
    startup: &StartupDelay,
) -> Vec<f64> {
    let free = free_flow_crossing_times(queue, queue.free_speed, headway, startup);
    let sig = signalized_crossing_times(queue, &free, schedule, headway);
    sig.iter().zip(&free).map(|(s, f)| s - f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn queue(vehicles: &[(f64, f64)], phase: usize, avg_green: f64) -> LinkQueueSnapshot {
        LinkQueueSnapshot {
            link: 1,
            vehicles: vehicles
                .iter()
                .map(|&(d, v)| QueuedVehicle { distance: d, speed: v, class: VehicleClass::Hdv })
                .collect(),
            phase,
            avg_green,
            free_speed: 13.89,
        }
    }

    #[test]
    fn free_flow_single_moving_vehicle() {
        let t = free_flow_crossing_times(&queue(&[(138.9, 13.89)], 0, 10.0), 13.89, 2.0, &StartupDelay::default());
        assert!((t[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn free_flow_headway_binds() {
        let q = queue(&[(138.9, 13.89), (145.0, 13.89)], 0, 10.0);
        let t = free_flow_crossing_times(&q, 13.89, 2.0, &StartupDelay::default());
        assert!((145.0f64 / 13.89 - 10.44).abs() < 0.01);
        assert!((t[1] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn free_flow_startup_delay() {
        let t = free_flow_crossing_times(&queue(&[(5.0, 0.0)], 0, 10.0), 13.89, 2.0, &StartupDelay::default());
        assert!((t[0] - (5.0 / 13.89 + 2.0)).abs() < 1e-12);
        assert!((t[0] - 2.36).abs() < 0.005);
    }

    fn reference_schedule() -> PhaseSchedule {
        // greens of phase 0 at [0,10] and [26,36]; theta of the last step is 49
        PhaseSchedule::from_durations(0.0, 2, vec![10.0; 4], 3.0)
    }

    fn one_at(r: f64) -> (LinkQueueSnapshot, Vec<f64>) {
        (queue(&[(r * 13.89, 13.89)], 0, 10.0), vec![r])
    }

    #[test]
    fn branch_inside_green() {
        let (q, f) = one_at(5.0);
        assert_eq!(signalized_crossing_times(&q, &f, &reference_schedule(), 2.0), vec![5.0]);
    }

    #[test]
    fn branch_next_green_start() {
        let (q, f) = one_at(15.0);
        assert_eq!(signalized_crossing_times(&q, &f, &reference_schedule(), 2.0), vec![26.0]);
    }

    #[test]
    fn branch_beyond_horizon() {
        let (q, f) = one_at(55.0);
        assert_eq!(signalized_crossing_times(&q, &f, &reference_schedule(), 2.0), vec![59.0]);
    }

    #[test]
    fn closing_phase_waits_a_full_cycle_past_the_horizon() {
        let q = queue(&[(55.0 * 13.89, 13.89)], 1, 10.0);
        assert_eq!(signalized_crossing_times(&q, &[55.0], &reference_schedule(), 2.0), vec![69.0]);
    }

    #[test]
    fn delay_after_waiting_for_green() {
        let q = queue(&[(15.0 * 13.89, 13.89)], 0, 10.0);
        let d = estimated_delays(&q, &reference_schedule(), 2.0, &StartupDelay::default());
        assert!((d[0] - 11.0).abs() < 1e-9);
    }

    #[test]
    fn empty_queue_no_delays() {
        let d = estimated_delays(&queue(&[], 0, 10.0), &reference_schedule(), 2.0, &StartupDelay::default());
        assert!(d.is_empty());
    }

    fn sorted_queue() -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((1.0..30.0f64, 0.0..13.89f64), 0..8).prop_map(|steps| {
            let mut d = 0.0;
            steps
                .into_iter()
                .map(|(gap, v)| {
                    d += gap;
                    (d, v)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn all_green_means_no_delay(vehicles in sorted_queue()) {
            let q = queue(&vehicles, 0, 10.0);
            let sched = PhaseSchedule::from_durations(0.0, 1, vec![1.0e6, 1.0e6], 3.0);
            for d in estimated_delays(&q, &sched, 2.0, &StartupDelay::default()) {
                prop_assert_eq!(d, 0.0);
            }
        }

        #[test]
        fn delays_nonnegative_and_discharge_spaced(
            vehicles in sorted_queue(),
            eta in proptest::collection::vec(0.0..30.0f64, 4),
            phase in 0usize..2,
        ) {
            let q = queue(&vehicles, phase, 12.0);
            let sched = PhaseSchedule::from_durations(0.0, 2, eta, 3.0);
            let free = free_flow_crossing_times(&q, 13.89, 2.0, &StartupDelay::default());
            let sig = signalized_crossing_times(&q, &free, &sched, 2.0);
            for (s, f) in sig.iter().zip(&free) {
                prop_assert!(s - f >= 0.0);
            }
            for w in sig.windows(2) {
                prop_assert!(w[1] - w[0] >= 2.0 - 1e-9);
            }
        }
    }
}
