//! Longitudinal vehicle models: double-integrator kinematics, IDM car
//! following for human drivers, stop-line compliance, and forward rollouts
//! used to predict stop-line crossing times.

use serde::{Deserialize, Serialize};

use crate::network::LinkId;
use crate::Interval;

/// Bumper-to-bumper length used when converting front positions to gaps.
pub const VEHICLE_LENGTH_M: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleClass {
    Cav,
    Hdv,
}

/// Kinematic state of one vehicle. `s` is the front position on the current
/// link: 0 at the downstream stop line, negative upstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub class: VehicleClass,
    pub link: LinkId,
    pub s: f64,
    pub v: f64,
    pub u: f64,
    pub route: Vec<LinkId>,
    pub departure: f64,
}

impl VehicleState {
    pub fn new(id: u32, class: VehicleClass, link: LinkId, s: f64, v: f64) -> Self {
        VehicleState { id, class, link, s, v, u: 0.0, route: vec![link], departure: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bounds {
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { v_max: 13.89, u_min: -6.0, u_max: 5.0 }
    }
}

impl Bounds {
    pub fn clamp_u(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }
}

/// Intelligent Driver Model parameters. The desired speed is normally the
/// link's free-flow speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdvParams {
    pub v_des: f64,
    pub a_idm: f64,
    pub b_idm: f64,
    pub delta: f64,
    pub s0_idm: f64,
    pub t_idm: f64,
}

impl Default for HdvParams {
    fn default() -> Self {
        HdvParams { v_des: 13.89, a_idm: 1.5, b_idm: 2.0, delta: 4.0, s0_idm: 2.0, t_idm: 1.5 }
    }
}

impl HdvParams {
    pub fn with_desired_speed(mut self, v_des: f64) -> Self {
        self.v_des = v_des;
        self
    }

    pub fn is_valid(&self) -> bool {
        [self.v_des, self.a_idm, self.b_idm, self.s0_idm, self.t_idm]
            .iter()
            .all(|&x| x > 0.0)
            && self.delta >= 1.0
    }
}

/// IDM acceleration for `ego` behind a leader `gap` metres ahead (bumper to
/// bumper) moving at `leader_speed`. Pass `f64::INFINITY` for a free road.
pub fn idm_acceleration(
    ego: &VehicleState,
    gap: f64,
    leader_speed: f64,
    params: &HdvParams,
    bounds: &Bounds,
) -> f64 {
    idm_accel_raw(ego.v, gap, leader_speed, params, bounds)
}

fn idm_accel_raw(v: f64, gap: f64, leader_speed: f64, p: &HdvParams, bounds: &Bounds) -> f64 {
    if gap <= 0.0 {
        return bounds.u_min;
    }
    let free = 1.0 - (v / p.v_des).powf(p.delta);
    let interaction = if gap.is_finite() {
        let dv = v - leader_speed;
        let s_star = p.s0_idm + (v * p.t_idm + v * dv / (2.0 * (p.a_idm * p.b_idm).sqrt())).max(0.0);
        (s_star / gap).powi(2)
    } else {
        0.0
    };
    bounds.clamp_u(p.a_idm * (free - interaction))
}

/// Semi-implicit Euler step: speed first (clamped to `[0, v_max]`), then position.
pub fn step_vehicle(state: &VehicleState, u: f64, dt: f64, v_max: f64) -> VehicleState {
    let mut next = state.clone();
    let (s, v) = integrate(state.s, state.v, u, dt, v_max);
    next.s = s;
    next.v = v;
    next.u = u;
    next
}

#[inline]
pub(crate) fn integrate(s: f64, v: f64, u: f64, dt: f64, v_max: f64) -> (f64, f64) {
    let v_next = (v + u * dt).clamp(0.0, v_max);
    (s + v_next * dt, v_next)
}

/// Leader seen by a vehicle approaching a stop line. When the line is closed
/// a standing ghost sits `stop_margin` before it; the nearer of the ghost and
/// the real predecessor governs. `predecessor` is `(gap, speed)`.
pub fn virtual_leader_for_signal(
    state: &VehicleState,
    signal_is_green: bool,
    stop_margin: f64,
    predecessor: Option<(f64, f64)>,
) -> (f64, f64) {
    ghost_leader(state.s, signal_is_green, stop_margin, predecessor)
}

#[inline]
fn ghost_leader(s: f64, open: bool, stop_margin: f64, predecessor: Option<(f64, f64)>) -> (f64, f64) {
    let real = predecessor.unwrap_or((f64::INFINITY, 0.0));
    if open {
        return real;
    }
    let ghost = (-s - stop_margin, 0.0);
    if ghost.0 < real.0 {
        ghost
    } else {
        real
    }
}

/// When a driver treats the stop line as passable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopLineRule {
    /// Ghost leader distance before the line.
    pub stop_margin: f64,
    /// A vehicle must be able to reach the line this long before green ends.
    pub guard_s: f64,
    /// A committed vehicle keeps going if stopping needs more than this deceleration.
    pub commit_decel: f64,
}

impl Default for StopLineRule {
    fn default() -> Self {
        StopLineRule { stop_margin: 1.0, guard_s: 0.3, commit_decel: 4.0 }
    }
}

/// Minimum time to cover `dist` from speed `v` accelerating at `a` up to `v_top`.
pub fn reach_time(dist: f64, v: f64, a: f64, v_top: f64) -> f64 {
    if dist <= 0.0 {
        return 0.0;
    }
    let v = v.min(v_top);
    let t_ramp = (v_top - v) / a;
    let d_ramp = (v + v_top) / 2.0 * t_ramp;
    if d_ramp >= dist {
        (-v + (v * v + 2.0 * a * dist).sqrt()) / a
    } else {
        t_ramp + (dist - d_ramp) / v_top
    }
}

/// Whether the stop line is open to a vehicle at `s` with speed `v` at time
/// `t`. Open when the current green lets it reach the line before green end
/// (minus the guard), or when it has committed and cannot stop comfortably.
#[allow(clippy::too_many_arguments)]
pub fn stop_line_open(
    t: f64,
    s: f64,
    v: f64,
    greens: &[Interval],
    committed: bool,
    rule: &StopLineRule,
    params: &HdvParams,
) -> bool {
    let d = -s;
    if d <= 0.0 {
        return true;
    }
    if let Some(g) = greens.iter().find(|g| g.start <= t && t <= g.end) {
        if g.end.is_infinite() || t + reach_time(d, v, params.a_idm, params.v_des) <= g.end - rule.guard_s {
            return true;
        }
    }
    if committed {
        let room = d - rule.stop_margin;
        if room <= 0.0 || v * v / (2.0 * room) > rule.commit_decel {
            return true;
        }
    }
    false
}

/// One vehicle in a single-link rollout, ordered front to back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutVehicle {
    pub id: u32,
    pub s: f64,
    pub v: f64,
    pub committed: bool,
    /// Leaves the network at this link's end and ignores the signal.
    pub exits_here: bool,
}

/// Acceleration of a human driver at `s`, `v` given the stop-line state and
/// the real predecessor (bumper gap, speed).
#[inline]
pub fn hdv_command(
    s: f64,
    v: f64,
    open: bool,
    predecessor: Option<(f64, f64)>,
    rule: &StopLineRule,
    params: &HdvParams,
    bounds: &Bounds,
) -> f64 {
    let (gap, lead_v) = ghost_leader(s, open, rule.stop_margin, predecessor);
    idm_accel_raw(v, gap, lead_v, params, bounds)
}

/// Forward IDM rollout of the vehicles on one approach under the given green
/// intervals. Returns `(vehicle id, predicted crossing time)` in input order.
/// Vehicles that have not crossed by `t0 + horizon` are given the horizon end
/// plus their remaining free-flow time.
#[allow(clippy::too_many_arguments)]
pub fn predict_hdv_crossings(
    vehicles: &[RolloutVehicle],
    greens: &[Interval],
    t0: f64,
    horizon: f64,
    dt: f64,
    rule: &StopLineRule,
    params: &HdvParams,
    bounds: &Bounds,
) -> Vec<(u32, f64)> {
    let n = vehicles.len();
    let mut state: Vec<RolloutVehicle> = vehicles.to_vec();
    let mut crossed: Vec<Option<f64>> = vec![None; n];
    let mut accel = vec![0.0; n];
    let steps = (horizon / dt).ceil() as usize;
    let mut remaining = n;
    for step in 0..steps {
        if remaining == 0 {
            break;
        }
        let t = t0 + step as f64 * dt;
        for i in 0..n {
            if crossed[i].is_some() {
                continue;
            }
            let me = state[i];
            let pred = (0..i).rev().find(|&j| crossed[j].is_none()).map(|j| {
                (state[j].s - me.s - VEHICLE_LENGTH_M, state[j].v)
            });
            let open = me.exits_here
                || stop_line_open(t, me.s, me.v, greens, me.committed, rule, params);
            if open && !me.exits_here {
                state[i].committed = true;
            }
            accel[i] = hdv_command(me.s, me.v, open, pred, rule, params, bounds);
        }
        for i in 0..n {
            if crossed[i].is_some() {
                continue;
            }
            let (s, v) = integrate(state[i].s, state[i].v, accel[i], dt, bounds.v_max);
            state[i].s = s;
            state[i].v = v;
            if s >= 0.0 {
                crossed[i] = Some(t + dt);
                remaining -= 1;
            }
        }
    }
    let end = t0 + steps as f64 * dt;
    state
        .iter()
        .zip(crossed)
        .map(|(v, c)| (v.id, c.unwrap_or_else(|| end + (-v.s).max(0.0) / params.v_des)))
        .collect()
}
