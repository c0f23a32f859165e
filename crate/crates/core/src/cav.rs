//! CAV approach control: earliest arrival, crossing-time selection against
//! published greens, closed-form energy-optimal cubic trajectories, a
//! control-barrier safety filter and event-triggered replanning.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{reach_time, Bounds, VehicleState};
use crate::Interval;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum CavError {
    /// No green in the published horizon admits the crossing; `earliest` is
    /// the lower bound that has to wait for a later broadcast.
    #[error("no admissible crossing time in the horizon (lower bound {earliest:.2} s); deferred")]
    Deferred { earliest: f64 },
    #[error("infeasible plan: {0}")]
    Infeasible(String),
}

/// Assigned stop-line crossing of one CAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingAssignment {
    pub t_cr: f64,
    pub green: Interval,
    pub t_cr_min: f64,
    pub t_pr_cr: f64,
}

/// Cubic position profile `p(t) = φ3 τ³ + φ2 τ² + φ1 τ + φ0` with
/// `τ = t - t0`, valid on `[t0, t_cr]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    pub phi3: f64,
    pub phi2: f64,
    pub phi1: f64,
    pub phi0: f64,
    pub t0: f64,
    pub t_cr: f64,
    pub s_start: f64,
    pub v_start: f64,
    pub s_cr: f64,
}

impl TrajectoryPlan {
    pub fn duration(&self) -> f64 {
        self.t_cr - self.t0
    }

    fn tau(&self, t: f64) -> f64 {
        (t - self.t0).clamp(0.0, self.duration())
    }

    pub fn position(&self, t: f64) -> f64 {
        let x = self.tau(t);
        ((self.phi3 * x + self.phi2) * x + self.phi1) * x + self.phi0
    }

    pub fn speed(&self, t: f64) -> f64 {
        let x = self.tau(t);
        (3.0 * self.phi3 * x + 2.0 * self.phi2) * x + self.phi1
    }

    pub fn control(&self, t: f64) -> f64 {
        6.0 * self.phi3 * self.tau(t) + 2.0 * self.phi2
    }

    /// Largest absolute residual of the four boundary conditions.
    pub fn boundary_residual(&self) -> f64 {
        let t = self.t_cr;
        [
            self.position(self.t0) - self.s_start,
            self.speed(self.t0) - self.v_start,
            self.position(t) - self.s_cr,
            self.control(t),
        ]
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// Speed and control bounds over the plan, by sampling every `dt / 2`
    /// and at the analytic vertex of the speed parabola.
    pub fn within_bounds(&self, bounds: &Bounds, dt: f64) -> bool {
        const TOL: f64 = 1e-9;
        let ok = |t: f64| {
            let v = self.speed(t);
            let u = self.control(t);
            v >= -TOL && v <= bounds.v_max + TOL && u >= bounds.u_min - TOL && u <= bounds.u_max + TOL
        };
        let n = (self.duration() / (dt / 2.0)).ceil().max(1.0) as usize;
        let samples = (0..=n).map(|k| self.t0 + self.duration() * k as f64 / n as f64);
        let vertex = (self.phi3 != 0.0)
            .then(|| self.t0 - self.phi2 / (3.0 * self.phi3))
            .filter(|&t| t > self.t0 && t < self.t_cr);
        samples.chain(vertex).all(ok)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyParams {
    /// Standstill distance between front positions, vehicle length included.
    pub s0: f64,
    pub time_headway: f64,
    pub kappa: f64,
    pub replan_threshold: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        SafetyParams { s0: 7.0, time_headway: 1.0, kappa: 0.8, replan_threshold: 2.0 }
    }
}

impl SafetyParams {
    pub fn is_valid(&self) -> bool {
        self.s0 > 0.0 && self.time_headway > 0.0 && self.kappa > 0.0 && self.replan_threshold > 0.0
    }
}

/// Minimum-time arrival at the stop line: full acceleration up to `v_max`,
/// then cruise. Returns an absolute time.
pub fn earliest_arrival_time(t0: f64, state: &VehicleState, bounds: &Bounds) -> f64 {
    t0 + reach_time(-state.s, state.v, bounds.u_max, bounds.v_max)
}

/// Earliest time inside a green that is no earlier than
/// `max(t_cr_min, t_pr_cr + headway)`. Greens are closed intervals.
pub fn select_crossing_time(
    greens: &[Interval],
    t_cr_min: f64,
    t_pr_cr: f64,
    headway: f64,
) -> Result<CrossingAssignment, CavError> {
    let lower = t_cr_min.max(t_pr_cr + headway);
    greens
        .iter()
        .find(|g| g.end >= lower)
        .map(|g| CrossingAssignment { t_cr: lower.max(g.start), green: *g, t_cr_min, t_pr_cr })
        .ok_or(CavError::Deferred { earliest: lower })
}

/// Energy-optimal cubic between `(t0, s_start, v_start)` and the crossing
/// `(t_cr, s_cr)` with zero terminal acceleration.
pub fn plan_energy_optimal(
    t0: f64,
    t_cr: f64,
    s_start: f64,
    v_start: f64,
    s_cr: f64,
    bounds: &Bounds,
) -> Result<TrajectoryPlan, CavError> {
    if t_cr <= t0 {
        return Err(CavError::Infeasible(format!("crossing time {t_cr} not after {t0}")));
    }
    if s_cr <= s_start {
        return Err(CavError::Infeasible("crossing point not downstream".into()));
    }
    let plan = cubic(t0, t_cr, s_start, v_start, s_cr);
    if !plan.within_bounds(bounds, 0.1) {
        return Err(CavError::Infeasible(format!(
            "bounds violated: v(t_cr)={:.3}, u(t0)={:.3}",
            plan.speed(t_cr),
            plan.control(t0)
        )));
    }
    Ok(plan)
}

// p(0)=s, p'(0)=v, p(T)=s_cr, p''(T)=0
fn cubic(t0: f64, t_cr: f64, s_start: f64, v_start: f64, s_cr: f64) -> TrajectoryPlan {
    let t = t_cr - t0;
    let d = s_cr - s_start;
    let phi3 = (v_start * t - d) / (2.0 * t * t * t);
    let phi2 = -3.0 * phi3 * t;
    TrajectoryPlan { phi3, phi2, phi1: v_start, phi0: s_start, t0, t_cr, s_start, v_start, s_cr }
}

/// Durations for which the cubic from `v` over distance `d` keeps speed in
/// `[0, v_max]` and the initial control below `u_max`.
pub fn feasible_duration_window(d: f64, v: f64, bounds: &Bounds) -> (f64, f64) {
    let by_speed = 1.5 * d / (bounds.v_max + 0.5 * v);
    let by_accel = (-3.0 * v + (9.0 * v * v + 12.0 * bounds.u_max * d).sqrt()) / (2.0 * bounds.u_max);
    let hi = if v > 0.0 { 3.0 * d / v } else { f64::INFINITY };
    (by_speed.max(by_accel), hi)
}

/// Cubic that comes to rest with zero acceleration at `s_stop`.
pub fn plan_stop(t0: f64, s_start: f64, v_start: f64, s_stop: f64) -> Option<TrajectoryPlan> {
    let d = s_stop - s_start;
    if d <= 0.0 || v_start <= 0.0 {
        return None;
    }
    Some(cubic(t0, t0 + 3.0 * d / v_start, s_start, v_start, s_stop))
}

/// Assign a crossing and plan the cubic to it. The lower bound is raised to
/// the earliest duration the cubic can realize; if the selected time is too
/// late for the cubic (it would have to reverse), the error is `Infeasible`
/// and the caller falls back to [`plan_stop`].
pub fn assign_and_plan(
    t0: f64,
    state: &VehicleState,
    greens: &[Interval],
    t_pr_cr: f64,
    safety: &SafetyParams,
    bounds: &Bounds,
) -> Result<(CrossingAssignment, TrajectoryPlan), CavError> {
    let d = -state.s;
    let t_min = earliest_arrival_time(t0, state, bounds);
    let (lo, hi) = feasible_duration_window(d, state.v, bounds);
    let mut assignment =
        select_crossing_time(greens, t_min.max(t0 + lo), t_pr_cr, safety.time_headway)?;
    assignment.t_cr_min = t_min;
    if assignment.t_cr - t0 > hi {
        return Err(CavError::Infeasible(format!(
            "crossing at {:.2} needs more than {hi:.2} s",
            assignment.t_cr
        )));
    }
    let plan = plan_energy_optimal(t0, assignment.t_cr, state.s, state.v, 0.0, bounds)?;
    Ok((assignment, plan))
}

/// `½ ∫ u² dt` of the plan, in closed form.
pub fn trajectory_energy(plan: &TrajectoryPlan) -> f64 {
    let t = plan.duration();
    let (a, b) = (6.0 * plan.phi3, 2.0 * plan.phi2);
    0.5 * (a * a * t * t * t / 3.0 + a * b * t * t + b * b * t)
}

/// Result of the safety filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafeControl {
    pub u: f64,
    /// The barrier constraint changed the reference.
    pub active: bool,
    /// The barrier demanded less than `u_min`.
    pub infeasible: bool,
}

/// Barrier function `h = p_j - p_i - s0 - v_i T` for ego `i` behind leader `j`.
pub fn safety_margin(ego: &VehicleState, leader: &VehicleState, params: &SafetyParams) -> f64 {
    leader.s - ego.s - params.s0 - ego.v * params.time_headway
}

/// Closest control to `u_ref` with `ḣ + κ h ≥ 0` and within bounds.
pub fn reactive_safety_control(
    u_ref: f64,
    ego: &VehicleState,
    leader: Option<&VehicleState>,
    params: &SafetyParams,
    bounds: &Bounds,
) -> SafeControl {
    let Some(leader) = leader else {
        return SafeControl { u: bounds.clamp_u(u_ref), active: false, infeasible: false };
    };
    let h = safety_margin(ego, leader, params);
    let cap = (leader.v - ego.v + params.kappa * h) / params.time_headway;
    project(u_ref, cap, bounds)
}

/// Barrier filter for a control held over one step of length `dt` under the
/// semi-implicit Euler update, with the leader applying `leader.u` over the
/// same step (its speed clamped to `[0, v_max]`). Keeps `h(t + dt) >= (1 - kappa dt) h(t)`; equals
/// [`reactive_safety_control`] as `dt` goes to zero.
pub fn sampled_safety_control(
    u_ref: f64,
    ego: &VehicleState,
    leader: Option<&VehicleState>,
    params: &SafetyParams,
    bounds: &Bounds,
    dt: f64,
) -> SafeControl {
    let Some(leader) = leader else {
        return SafeControl { u: bounds.clamp_u(u_ref), active: false, infeasible: false };
    };
    let h = safety_margin(ego, leader, params);
    let lead_next = (leader.v + leader.u * dt).clamp(0.0, bounds.v_max);
    let cap = (lead_next - ego.v + params.kappa * h) / (params.time_headway + dt);
    project(u_ref, cap, bounds)
}

fn project(u_ref: f64, cap: f64, bounds: &Bounds) -> SafeControl {
    SafeControl {
        u: bounds.clamp_u(u_ref.min(cap)),
        active: cap < u_ref,
        infeasible: cap < bounds.u_min,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Replan {
    Keep,
    /// Same crossing, trajectory re-solved from the current state.
    Refresh(TrajectoryPlan),
    /// New crossing time and trajectory.
    Reassign(CrossingAssignment, TrajectoryPlan),
}

/// Event-triggered replanning: nothing happens while the tracking error stays
/// within the threshold. Otherwise the assigned crossing is kept if it is
/// still admissible and reachable, else a new one is selected.
#[allow(clippy::too_many_arguments)]
pub fn check_and_replan(
    plan: &TrajectoryPlan,
    assignment: &CrossingAssignment,
    t: f64,
    ego: &VehicleState,
    t_pr_cr: f64,
    greens: &[Interval],
    safety: &SafetyParams,
    bounds: &Bounds,
) -> Result<Replan, CavError> {
    if (ego.s - plan.position(t)).abs() <= safety.replan_threshold {
        return Ok(Replan::Keep);
    }
    let t_min = earliest_arrival_time(t, ego, bounds);
    let lower = t_min.max(t_pr_cr + safety.time_headway);
    if assignment.t_cr >= lower && assignment.green.contains(assignment.t_cr) {
        if let Ok(p) = plan_energy_optimal(t, assignment.t_cr, ego.s, ego.v, 0.0, bounds) {
            return Ok(Replan::Refresh(p));
        }
    }
    let (a, p) = assign_and_plan(t, ego, greens, t_pr_cr, safety, bounds)?;
    Ok(Replan::Reassign(a, p))
}
