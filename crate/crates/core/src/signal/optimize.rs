//! Integer discharge-count optimization over a two-cycle horizon.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::estimate::{
    free_flow_crossing_times, signalized_crossing_times, LinkQueueSnapshot, StartupDelay,
};
use super::timing::PhaseSchedule;
use crate::network::{IntersectionSpec, LinkId};

/// Tunables shared by every signal controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalParams {
    /// Upper bound on vehicles discharged per link and step.
    pub n_max: u32,
    /// Lost time added to each nonzero green.
    pub lost_time: f64,
    pub startup: StartupDelay,
    /// Initial average green; `None` means `(n_max * h_f + lost_time) / 2`.
    pub initial_avg_green: Option<f64>,
    /// Weight of the latest realized green in the moving average.
    pub avg_green_weight: f64,
    /// Green of every phase under fixed-time control.
    pub fixed_green: f64,
}

impl Default for SignalParams {
    fn default() -> Self {
        SignalParams {
            n_max: 8,
            lost_time: 2.0,
            startup: StartupDelay::default(),
            initial_avg_green: None,
            avg_green_weight: 0.2,
            fixed_green: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignalError {
    #[error("committed plan violates phase-compatibility: link {link} is not served at step {step}")]
    PhaseCompatibility { link: LinkId, step: usize },
    #[error("committed plan violates capacity-bound: link {link} step {step} count {count} > n_max {n_max}")]
    CapacityBound { link: LinkId, step: usize, count: u32, n_max: u32 },
    #[error("committed plan has the wrong shape: expected {links} links x {steps} steps")]
    CommittedShape { links: usize, steps: usize },
}

/// Discharge counts `counts[row][h]` for rows in `links` order and steps
/// `0..2M`; the first `M` steps are the committed cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DischargePlan {
    pub links: Vec<LinkId>,
    pub counts: Vec<Vec<u32>>,
    pub n_max: u32,
    /// Lost time of every step (zero for skipped steps).
    pub lost_times: Vec<f64>,
    /// Total estimated signal-induced delay of the plan.
    pub objective: f64,
}

impl DischargePlan {
    pub fn phase_count(&self) -> usize {
        self.lost_times.len() / 2
    }

    /// Counts of the committed (first) cycle.
    pub fn first_cycle(&self) -> Vec<Vec<u32>> {
        let m = self.phase_count();
        self.counts.iter().map(|row| row[..m].to_vec()).collect()
    }

    /// Counts of the optimized (second) cycle.
    pub fn second_cycle(&self) -> Vec<Vec<u32>> {
        let m = self.phase_count();
        self.counts.iter().map(|row| row[m..].to_vec()).collect()
    }
}

/// Green of every step: the largest count among the links its phase serves
/// times the saturation headway, plus the step's lost time.
pub fn green_durations_from_counts(plan: &DischargePlan, intersection: &IntersectionSpec) -> Vec<f64> {
    let m = intersection.phase_count();
    (0..plan.lost_times.len())
        .map(|h| {
            let served_max = plan
                .links
                .iter()
                .zip(&plan.counts)
                .filter(|(l, _)| intersection.serves(h % m, **l))
                .map(|(_, row)| row[h])
                .max()
                .unwrap_or(0);
            served_max as f64 * intersection.saturation_headway_s + plan.lost_times[h]
        })
        .collect()
}

fn step_green(served_max: u32, headway: f64, lost: f64) -> f64 {
    if served_max == 0 {
        0.0
    } else {
        served_max as f64 * headway + lost
    }
}

/// Check a committed first cycle against phase compatibility and the cap.
pub fn check_committed(
    intersection: &IntersectionSpec,
    committed: &[Vec<u32>],
    n_max: u32,
) -> Result<(), SignalError> {
    let links = intersection.controlled_links();
    let m = intersection.phase_count();
    if committed.len() != links.len() || committed.iter().any(|r| r.len() != m) {
        return Err(SignalError::CommittedShape { links: links.len(), steps: m });
    }
    for (row, &link) in committed.iter().zip(&links) {
        for (h, &count) in row.iter().enumerate() {
            if count > 0 && !intersection.serves(h, link) {
                return Err(SignalError::PhaseCompatibility { link, step: h });
            }
            if count > n_max {
                return Err(SignalError::CapacityBound { link, step: h, count, n_max });
            }
        }
    }
    Ok(())
}

/// Total estimated delay of all queues under the greens `eta`.
pub fn plan_delay(
    intersection: &IntersectionSpec,
    queues: &[LinkQueueSnapshot],
    free_times: &[Vec<f64>],
    eta: &[f64],
    lost_time: f64,
) -> f64 {
    let schedule = PhaseSchedule::from_durations(
        0.0,
        intersection.phase_count(),
        eta.to_vec(),
        intersection.clearance_s,
    )
    .with_lost_time(lost_time);
    let mut total = 0.0;
    for (q, free) in queues.iter().zip(free_times) {
        let sig = signalized_crossing_times(q, free, &schedule, intersection.saturation_headway_s);
        for (s, f) in sig.iter().zip(free) {
            total += s - f;
        }
    }
    total
}

/// Minimize total estimated delay over the second-cycle discharge counts.
///
/// Greens depend on the counts only through the largest served count per
/// step, so the search enumerates that maximum for each free step; this is
/// exhaustive and returns the lexicographically smallest optimum. Each
/// served link is then assigned `min(max, queue length)`, except the
/// longest served queue which carries the maximum itself.
pub fn optimize_discharge(
    intersection: &IntersectionSpec,
    queues: &[LinkQueueSnapshot],
    committed: &[Vec<u32>],
    params: &SignalParams,
) -> Result<DischargePlan, SignalError> {
    check_committed(intersection, committed, params.n_max)?;
    let m = intersection.phase_count();
    let hf = intersection.saturation_headway_s;
    let links = intersection.controlled_links();

    let mut eta = vec![0.0; 2 * m];
    let mut lost_times = vec![0.0; 2 * m];
    for h in 0..m {
        let served_max = committed
            .iter()
            .zip(&links)
            .filter(|(_, l)| intersection.serves(h, **l))
            .map(|(row, _)| row[h])
            .max()
            .unwrap_or(0);
        eta[h] = step_green(served_max, hf, params.lost_time);
        lost_times[h] = if served_max > 0 { params.lost_time } else { 0.0 };
    }

    let free_times: Vec<Vec<f64>> = queues
        .iter()
        .map(|q| free_flow_crossing_times(q, q.free_speed, hf, &params.startup))
        .collect();

    let mut digits = vec![0u32; m];
    let mut best_digits = digits.clone();
    let mut best = f64::INFINITY;
    // odometer over {0..n_max}^m, last digit fastest, i.e. lexicographic order
    'search: loop {
        for (h, &d) in digits.iter().enumerate() {
            eta[m + h] = step_green(d, hf, params.lost_time);
        }
        let obj = plan_delay(intersection, queues, &free_times, &eta, params.lost_time);
        if obj < best {
            best = obj;
            best_digits.clone_from(&digits);
        }
        let mut pos = m;
        loop {
            if pos == 0 {
                break 'search;
            }
            pos -= 1;
            if digits[pos] < params.n_max {
                digits[pos] += 1;
                digits[pos + 1..].iter_mut().for_each(|d| *d = 0);
                continue 'search;
            }
        }
    }

    let queue_len = |link: LinkId| -> u32 {
        queues
            .iter()
            .find(|q| q.link == link)
            .map(|q| q.vehicles.len() as u32)
            .unwrap_or(0)
    };
    let mut counts: Vec<Vec<u32>> = committed
        .iter()
        .map(|row| {
            let mut full = row.clone();
            full.resize(2 * m, 0);
            full
        })
        .collect();
    for (h, &g) in best_digits.iter().enumerate() {
        let step = m + h;
        let served: Vec<usize> = (0..links.len())
            .filter(|&r| intersection.serves(h, links[r]))
            .collect();
        let mut carrier = None;
        for &r in &served {
            let q = queue_len(links[r]);
            counts[r][step] = g.min(q);
            if carrier.is_none_or(|(_, best_q)| q > best_q) {
                carrier = Some((r, q));
            }
        }
        if let Some((r, _)) = carrier {
            counts[r][step] = g;
        }
        lost_times[step] = if g > 0 { params.lost_time } else { 0.0 };
    }

    Ok(DischargePlan { links, counts, n_max: params.n_max, lost_times, objective: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleClass;
    use crate::signal::estimate::QueuedVehicle;

    fn two_phase() -> IntersectionSpec {
        IntersectionSpec {
            id: 9,
            control_range_m: 200.0,
            clearance_s: 3.0,
            saturation_headway_s: 2.0,
            phases: vec![vec![1], vec![2]],
        }
    }

    fn plan_with(counts: Vec<Vec<u32>>, lost: Vec<f64>) -> DischargePlan {
        DischargePlan { links: vec![1, 2], counts, n_max: 8, lost_times: lost, objective: 0.0 }
    }

    #[test]
    fn green_from_heaviest_served_link() {
        let int = IntersectionSpec { phases: vec![vec![1, 2]], ..two_phase() };
        let plan = plan_with(vec![vec![4, 0], vec![6, 0]], vec![2.0, 0.0]);
        let eta = green_durations_from_counts(&plan, &int);
        assert_eq!(eta, vec![14.0, 0.0]);
    }

    #[test]
    fn zero_counts_skip_phase() {
        let plan = plan_with(vec![vec![0, 0, 0, 0], vec![0, 0, 0, 0]], vec![0.0; 4]);
        assert_eq!(green_durations_from_counts(&plan, &two_phase()), vec![0.0; 4]);
    }

    #[test]
    fn single_vehicle_green() {
        let plan = plan_with(vec![vec![1, 0, 0, 0], vec![0, 0, 0, 0]], vec![2.0, 0.0, 0.0, 0.0]);
        assert_eq!(green_durations_from_counts(&plan, &two_phase())[0], 4.0);
    }

    fn stationary(n: usize, link: LinkId, phase: usize) -> LinkQueueSnapshot {
        LinkQueueSnapshot {
            link,
            vehicles: (0..n)
                .map(|i| QueuedVehicle {
                    distance: 1.0 + 7.0 * i as f64,
                    speed: 0.0,
                    class: VehicleClass::Hdv,
                })
                .collect(),
            phase,
            avg_green: 9.0,
            free_speed: 13.89,
        }
    }

    #[test]
    fn empty_intersection_plans_nothing() {
        let plan = optimize_discharge(&two_phase(), &[], &[vec![0, 0], vec![0, 0]], &SignalParams::default())
            .unwrap();
        assert_eq!(plan.objective, 0.0);
        assert!(plan.counts.iter().flatten().all(|&c| c == 0));
    }

    #[test]
    fn serves_the_only_queue() {
        let params = SignalParams { n_max: 3, ..SignalParams::default() };
        let queues = [stationary(3, 1, 0), stationary(0, 2, 1)];
        let plan = optimize_discharge(&two_phase(), &queues, &[vec![0, 0], vec![0, 0]], &params).unwrap();

        // brute force over the second cycle
        let int = two_phase();
        let free: Vec<Vec<f64>> = queues
            .iter()
            .map(|q| free_flow_crossing_times(q, 13.89, 2.0, &params.startup))
            .collect();
        let mut best = (f64::INFINITY, (0, 0));
        for a in 0..=3u32 {
            for b in 0..=3u32 {
                let eta = [0.0, 0.0, step_green(a, 2.0, 2.0), step_green(b, 2.0, 2.0)];
                let obj = plan_delay(&int, &queues, &free, &eta, 2.0);
                if obj < best.0 {
                    best = (obj, (a, b));
                }
            }
        }
        assert_eq!(best.1, (3, 0));
        assert_eq!(plan.objective, best.0);
        assert_eq!(plan.second_cycle(), vec![vec![3, 0], vec![0, 0]]);
        assert_eq!(green_durations_from_counts(&plan, &int)[3], 0.0);
    }

    #[test]
    fn rejects_infeasible_commitment() {
        let p = SignalParams::default();
        let err = optimize_discharge(&two_phase(), &[], &[vec![0, 1], vec![0, 0]], &p).unwrap_err();
        assert_eq!(err, SignalError::PhaseCompatibility { link: 1, step: 1 });
        assert!(err.to_string().contains("phase-compatibility"));
        let err = optimize_discharge(&two_phase(), &[], &[vec![9, 0], vec![0, 0]], &p).unwrap_err();
        assert!(matches!(err, SignalError::CapacityBound { .. }));
        assert!(err.to_string().contains("capacity-bound"));
    }
}
