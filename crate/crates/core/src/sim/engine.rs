//! Discrete-time simulation loop.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Mode, ScenarioConfig};
use super::demand::DemandGenerator;
use super::metrics::{AssignmentRecord, BinSnapshot, Event, MetricsLog, Trip};
use super::SimError;
use crate::cav::{
    assign_and_plan, check_and_replan, sampled_safety_control, CrossingAssignment, Replan,
    TrajectoryPlan,
};
use crate::dynamics::{
    hdv_command, integrate, predict_hdv_crossings, stop_line_open, HdvParams, RolloutVehicle,
    VehicleClass, VehicleState, VEHICLE_LENGTH_M,
};
use crate::network::{k_shortest_paths, LinkId, NetworkGraph, PathSet};
use crate::routing::Router;
use crate::signal::{
    fixed_time_plans, green_intervals_for_link, ApproachMeasurement, FixedTimePlan, PhaseSchedule,
    QueuedVehicle, SignalController,
};
use crate::Interval;

const EPS: f64 = 1e-9;
/// Bumper gap a vehicle entering a link needs at standstill, and the extra
/// gap per m/s of entry speed.
const ENTRY_GAP_M: f64 = 2.0;
const ENTRY_HEADWAY_S: f64 = 1.0;
/// Below this speed a vehicle counts as stopped for the gridlock watchdog.
const STOPPED_MPS: f64 = 0.1;

#[derive(Debug, Clone)]
enum CavMode {
    Free,
    Planned { assignment: CrossingAssignment, plan: TrajectoryPlan },
    Hold { retry_at: f64, seen_broadcast: f64 },
}

#[derive(Debug, Clone)]
struct Vehicle {
    id: u32,
    class: VehicleClass,
    od: usize,
    route: Vec<usize>,
    pos: usize,
    s: f64,
    v: f64,
    u: f64,
    depart: f64,
    /// When the vehicle joined the current link's entry queue.
    link_entry: f64,
    committed: bool,
    cav: CavMode,
}

impl Vehicle {
    fn link(&self) -> usize {
        self.route[self.pos]
    }

    fn exits_here(&self) -> bool {
        self.pos + 1 == self.route.len()
    }
}

enum Control {
    Fixed(FixedTimePlan),
    Adaptive { controller: Box<SignalController>, schedule: Option<PhaseSchedule> },
}

struct Junction {
    node_idx: usize,
    control: Control,
    links: Vec<usize>,
    refresh_at: f64,
    last_broadcast: f64,
}

struct LinkInfo {
    id: LinkId,
    length: f64,
    vmax: f64,
    zone: f64,
    junction: Option<usize>,
}

/// Run one scenario on its configured network.
pub fn run_simulation(config: &ScenarioConfig) -> Result<MetricsLog, SimError> {
    config.validate()?;
    let graph = match &config.network.file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
            crate::network::load_network(&text)?
        }
        None => NetworkGraph::sioux_falls(),
    };
    run_simulation_on(&graph, config)
}

/// Run one scenario on `graph`.
pub fn run_simulation_on(graph: &NetworkGraph, config: &ScenarioConfig) -> Result<MetricsLog, SimError> {
    config.validate()?;
    Engine::new(graph, config)?.run()
}

struct Engine<'a> {
    graph: &'a NetworkGraph,
    cfg: &'a ScenarioConfig,
    mode: Mode,
    links: Vec<LinkInfo>,
    junctions: Vec<Junction>,
    greens: Vec<Vec<Interval>>,
    lanes: Vec<VecDeque<u32>>,
    buffers: Vec<VecDeque<(u32, f64)>>,
    last_cross: Vec<f64>,
    vehicles: Vec<Vehicle>,
    paths: Vec<PathSet>,
    router: Option<Router>,
    demand: DemandGenerator,
    rng: ChaCha8Rng,
    log: MetricsLog,
    hdv_params: Vec<HdvParams>,
    spawned: u64,
    arrived: u64,
    blocked_logged: Vec<bool>,
}

impl<'a> Engine<'a> {
    fn new(graph: &'a NetworkGraph, cfg: &'a ScenarioConfig) -> Result<Self, SimError> {
        let mode = cfg.sim.mode;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.sim.seed);
        let pairs = cfg.demand.od_pairs();
        let demand = DemandGenerator::new(&pairs, cfg.demand.jitter, cfg.effective_penetration(), &mut rng);

        let mut paths = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let ps = k_shortest_paths(graph, p.origin, p.destination, cfg.routing.k_paths)?;
            if ps.is_empty() {
                return Err(SimError::Unreachable { origin: p.origin, destination: p.destination });
            }
            paths.push(ps);
        }

        let mut junctions = Vec::new();
        let fixed = fixed_time_plans(graph, &cfg.signal);
        for (node_idx, int) in graph.intersections().iter().enumerate() {
            if !int.is_signalized() {
                continue;
            }
            let control = if mode.adaptive_signals() {
                Control::Adaptive {
                    controller: Box::new(SignalController::new(int, graph, cfg.signal)),
                    schedule: None,
                }
            } else {
                let plan = fixed.iter().find(|p| p.intersection == int.id).cloned().expect("plan per signal");
                Control::Fixed(plan)
            };
            let links = int.controlled_links().iter().map(|&l| graph.link_idx(l).expect("link exists")).collect();
            junctions.push(Junction { node_idx, control, links, refresh_at: 0.0, last_broadcast: f64::NEG_INFINITY });
        }

        let links: Vec<LinkInfo> = graph
            .links()
            .iter()
            .map(|l| {
                let int = graph.downstream_signal(l.id);
                let junction = int.and_then(|i| {
                    junctions.iter().position(|j| graph.intersections()[j.node_idx].id == i.id)
                });
                LinkInfo {
                    id: l.id,
                    length: l.length_m,
                    vmax: l.vmax_mps,
                    zone: int.map(|i| i.control_range_m.min(l.length_m)).unwrap_or(0.0),
                    junction,
                }
            })
            .collect();
        let n = links.len();
        let hdv_params = links.iter().map(|l| cfg.idm.with_desired_speed(l.vmax.min(cfg.idm.v_des))).collect();
        let router = mode.routing().then(|| Router::new(graph, cfg.routing));
        let log = MetricsLog::empty(
            cfg.sim.bin_width_s,
            cfg.sim.duration_s,
            links.iter().map(|l| l.id).collect(),
            pairs.iter().map(|p| (p.origin, p.destination)).collect(),
        );
        Ok(Engine {
            graph,
            cfg,
            mode,
            greens: vec![vec![Interval::always(0.0)]; n],
            links,
            junctions,
            lanes: vec![VecDeque::new(); n],
            buffers: vec![VecDeque::new(); n],
            last_cross: vec![f64::NEG_INFINITY; n],
            vehicles: Vec::new(),
            paths,
            router,
            demand,
            rng,
            log,
            hdv_params,
            spawned: 0,
            arrived: 0,
            blocked_logged: Vec::new(),
        })
    }

    fn run(mut self) -> Result<MetricsLog, SimError> {
        let dt = self.cfg.sim.dt;
        let steps = (self.cfg.sim.duration_s / dt).round() as usize;
        let steps_per_bin = ((self.cfg.sim.bin_width_s / dt).round() as usize).max(1);
        let steps_per_macro = ((self.cfg.routing.macro_step_s / dt).round() as usize).max(1);
        let watchdog_steps = (self.cfg.sim.watchdog_s / dt).round() as usize;
        let mut bin_sum: u64 = 0;
        let mut last_count = 0u64;
        let mut static_steps = 0usize;

        for step in 0..steps {
            let t = step as f64 * dt;
            if !self.cfg.sim.all_green {
                self.update_signals(t);
            }
            self.spawn(t);
            if step % steps_per_macro == 0 {
                if let Some(router) = self.router.as_mut() {
                    let counts: Vec<f64> =
                        (0..self.lanes.len()).map(|i| (self.lanes[i].len() + self.buffers[i].len()) as f64).collect();
                    router.macro_step(t, &counts);
                }
            }
            self.admit(t);
            self.control(t);
            self.advance(t, dt);

            let mut in_network = 0u64;
            for i in 0..self.lanes.len() {
                let c = (self.lanes[i].len() + self.buffers[i].len()) as u64;
                in_network += c;
                self.log.edge_occupancy[i] += c as f64 * dt;
            }
            bin_sum += in_network;
            if (step + 1) % steps_per_bin == 0 || step + 1 == steps {
                let n_steps = (step % steps_per_bin + 1) as f64;
                self.log.accumulation.push(bin_sum as f64 / n_steps);
                self.log.snapshots.push(BinSnapshot { spawned: self.spawned, in_network, arrived: self.arrived });
                bin_sum = 0;
            }

            let moving = self.lanes.iter().flatten().any(|&id| self.vehicles[id as usize].v >= STOPPED_MPS);
            if in_network > 0 && in_network == last_count && !moving {
                static_steps += 1;
                if static_steps > watchdog_steps {
                    return Err(SimError::Gridlock { time: t, dump: self.dump() });
                }
            } else {
                static_steps = 0;
            }
            last_count = in_network;
        }
        Ok(self.log)
    }

    fn dump(&self) -> String {
        let mut out = String::new();
        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.is_empty() && self.buffers[i].is_empty() {
                continue;
            }
            let front = lane.front().map(|&id| &self.vehicles[id as usize]);
            out.push_str(&format!(
                "link {}: {} on link, {} queued, front at s={:.1} v={:.2}\n",
                self.links[i].id,
                lane.len(),
                self.buffers[i].len(),
                front.map(|v| v.s).unwrap_or(f64::NAN),
                front.map(|v| v.v).unwrap_or(f64::NAN),
            ));
        }
        out
    }

    fn update_signals(&mut self, t: f64) {
        for j in 0..self.junctions.len() {
            let junction = &self.junctions[j];
            let int = &self.graph.intersections()[junction.node_idx];
            match &junction.control {
                Control::Fixed(plan) => {
                    if t + EPS < junction.refresh_at {
                        continue;
                    }
                    let horizon = t + 3.0 * plan.cycle_length();
                    for &l in &junction.links {
                        let phase = int.phase_of(self.links[l].id).expect("controlled link has a phase");
                        self.greens[l] = plan.greens(phase, t, horizon);
                    }
                    self.junctions[j].refresh_at = t + plan.cycle_length();
                }
                Control::Adaptive { controller, .. } => {
                    let clock = controller.next_change();
                    if t + EPS < clock {
                        continue;
                    }
                    let measurements: Vec<ApproachMeasurement> = junction
                        .links
                        .iter()
                        .map(|&l| ApproachMeasurement { link: self.links[l].id, vehicles: self.queue(l) })
                        .collect();
                    let links = junction.links.clone();
                    let Control::Adaptive { controller, schedule } = &mut self.junctions[j].control else {
                        unreachable!()
                    };
                    let (sched, record) = controller.receding_horizon_update(&measurements, clock);
                    for &l in &links {
                        self.greens[l] = green_intervals_for_link(Some(&sched), Some(int), self.links[l].id, clock);
                    }
                    *schedule = Some(sched);
                    self.junctions[j].last_broadcast = clock;
                    self.log.events.push(Event::Broadcast { t: clock, intersection: record.intersection, eta: record.eta });
                }
            }
        }
    }

    /// Vehicles on link `l` that need the signal, closest first.
    fn queue(&self, l: usize) -> Vec<QueuedVehicle> {
        self.lanes[l]
            .iter()
            .map(|&id| &self.vehicles[id as usize])
            .filter(|v| !v.exits_here())
            .map(|v| QueuedVehicle { distance: (-v.s).max(0.0), speed: v.v, class: v.class })
            .collect()
    }

    fn spawn(&mut self, t: f64) {
        for s in self.demand.spawn_demand(t, &mut self.rng) {
            let id = self.vehicles.len() as u32;
            let pair = self.demand.pairs()[s.od];
            let ps = &self.paths[s.od];
            let choice = match (&mut self.router, s.class) {
                (Some(router), VehicleClass::Cav) => {
                    let a = router.assign_route(self.graph, id, ps, t);
                    self.log.assignments.push(AssignmentRecord {
                        t,
                        vehicle: id,
                        chosen: a.path_index,
                        costs: a.candidate_costs.clone(),
                    });
                    a.path_index
                }
                (Some(router), VehicleClass::Hdv) => {
                    router.register_hdv(self.graph, &ps.paths[0].links, t);
                    0
                }
                (None, _) => 0,
            };
            let path = ps.paths[choice].links.clone();
            let route: Vec<usize> = path.iter().map(|&l| self.graph.link_idx(l).expect("path link")).collect();
            self.log.events.push(Event::Spawn {
                t,
                vehicle: id,
                class: s.class,
                origin: pair.origin,
                destination: pair.destination,
                path,
            });
            let first = route[0];
            self.vehicles.push(Vehicle {
                id,
                class: s.class,
                od: s.od,
                route,
                pos: 0,
                s: 0.0,
                v: self.links[first].vmax,
                u: 0.0,
                depart: t,
                link_entry: t,
                committed: false,
                cav: CavMode::Free,
            });
            self.blocked_logged.push(false);
            self.buffers[first].push_back((id, t));
            self.spawned += 1;
        }
    }

    /// Move at most one queued vehicle onto each link whose upstream end has room.
    fn admit(&mut self, t: f64) {
        for l in 0..self.links.len() {
            let Some(&(id, ready)) = self.buffers[l].front() else { continue };
            if ready > t + EPS {
                continue;
            }
            let length = self.links[l].length;
            let gap = match self.lanes[l].back() {
                Some(&back) => self.vehicles[back as usize].s + length - VEHICLE_LENGTH_M,
                None => f64::INFINITY,
            };
            if gap < ENTRY_GAP_M {
                if !self.blocked_logged[id as usize] {
                    self.blocked_logged[id as usize] = true;
                    self.log.rejected_spawns += u64::from(self.vehicles[id as usize].pos == 0);
                    self.log.events.push(Event::EntryBlocked { t, vehicle: id, link: self.links[l].id });
                }
                continue;
            }
            self.buffers[l].pop_front();
            let vmax = self.links[l].vmax;
            let veh = &mut self.vehicles[id as usize];
            veh.v = veh.v.min(vmax).min((gap - ENTRY_GAP_M) / ENTRY_HEADWAY_S).max(0.0);
            veh.s = -length;
            veh.committed = false;
            veh.cav = CavMode::Free;
            self.blocked_logged[id as usize] = false;
            self.lanes[l].push_back(id);
            self.log.edge_entries[l] += 1;
            self.log.events.push(Event::LinkEntry { t, vehicle: id, link: self.links[l].id, speed: veh.v });
        }
    }

    fn control(&mut self, t: f64) {
        let cav_control = self.mode.cav_control();
        for l in 0..self.lanes.len() {
            for j in 0..self.lanes[l].len() {
                let id = self.lanes[l][j] as usize;
                let pred = (j > 0).then(|| self.lanes[l][j - 1] as usize);
                let s = self.vehicles[id].s;
                let pred_gap = pred.map(|p| (self.vehicles[p].s - s - VEHICLE_LENGTH_M, self.vehicles[p].v));
                let u = match self.vehicles[id].class {
                    VehicleClass::Hdv => self.hdv_control(t, l, id, pred_gap),
                    VehicleClass::Cav => {
                        let managed = cav_control
                            && !self.vehicles[id].exits_here()
                            && self.links[l].junction.is_some()
                            && -s <= self.links[l].zone;
                        let u_ref = if managed {
                            self.cav_reference(t, l, j, id, pred_gap)
                        } else {
                            self.vehicles[id].cav = CavMode::Free;
                            self.hdv_control(t, l, id, pred_gap)
                        };
                        let ego = self.state_of(id);
                        let leader = pred.map(|p| self.state_of(p));
                        let safe = sampled_safety_control(
                            u_ref,
                            &ego,
                            leader.as_ref(),
                            &self.cfg.cav.safety,
                            &self.cfg.sim.bounds,
                            self.cfg.sim.dt,
                        );
                        if safe.infeasible {
                            self.log.safety_infeasible += 1;
                            self.log.events.push(Event::SafetyInfeasible { t, vehicle: id as u32, link: self.links[l].id });
                        }
                        safe.u
                    }
                };
                self.vehicles[id].u = u;
            }
        }
    }

    fn state_of(&self, id: usize) -> VehicleState {
        let v = &self.vehicles[id];
        VehicleState {
            id: v.id,
            class: v.class,
            link: self.links[v.link()].id,
            s: v.s,
            v: v.v,
            u: v.u,
            route: Vec::new(),
            departure: v.depart,
        }
    }

    /// Human driving: IDM behind the predecessor, with a standing ghost at
    /// the stop line while it is closed. Marks the vehicle committed once the
    /// line has been open to it.
    fn hdv_control(&mut self, t: f64, l: usize, id: usize, pred_gap: Option<(f64, f64)>) -> f64 {
        let params = &self.hdv_params[l];
        let veh = &self.vehicles[id];
        let open = veh.exits_here()
            || stop_line_open(t, veh.s, veh.v, &self.greens[l], veh.committed, &self.cfg.sim.stop_line, params);
        let u = hdv_command(veh.s, veh.v, open, pred_gap, &self.cfg.sim.stop_line, params, &self.cfg.sim.bounds);
        if open {
            self.vehicles[id].committed = true;
        }
        u
    }

    fn cav_greens(&self, l: usize) -> Vec<Interval> {
        let guard = self.cfg.cav.green_guard_s;
        self.greens[l]
            .iter()
            .filter(|g| g.end - guard >= g.start)
            .map(|g| Interval::new(g.start, g.end - guard))
            .collect()
    }

    /// Predicted stop-line crossing of the vehicle ahead of lane slot `j`.
    fn leader_crossing(&self, t: f64, l: usize, j: usize) -> f64 {
        if j == 0 {
            return self.last_cross[l];
        }
        let leader = &self.vehicles[self.lanes[l][j - 1] as usize];
        if let CavMode::Planned { assignment, .. } = &leader.cav {
            return assignment.t_cr;
        }
        let ahead: Vec<RolloutVehicle> = self.lanes[l]
            .iter()
            .take(j)
            .map(|&id| {
                let v = &self.vehicles[id as usize];
                RolloutVehicle { id, s: v.s, v: v.v, committed: v.committed, exits_here: v.exits_here() }
            })
            .collect();
        let predicted = predict_hdv_crossings(
            &ahead,
            &self.greens[l],
            t,
            self.cfg.cav.rollout_horizon_s,
            self.cfg.sim.dt,
            &self.cfg.sim.stop_line,
            &self.hdv_params[l],
            &self.cfg.sim.bounds,
        );
        predicted.last().map(|&(_, tc)| tc).unwrap_or(f64::NEG_INFINITY)
    }

    fn try_plan(&mut self, t: f64, l: usize, j: usize, id: usize) {
        let t_pr = self.leader_crossing(t, l, j);
        let greens = self.cav_greens(l);
        let ego = self.state_of(id);
        let link = self.links[l].id;
        match assign_and_plan(t, &ego, &greens, t_pr, &self.cfg.cav.safety, &self.cfg.sim.bounds) {
            Ok((assignment, plan)) => {
                self.log.events.push(Event::Plan { t, vehicle: id as u32, link, t_cr: plan.t_cr, phi: phi(&plan) });
                self.vehicles[id].cav = CavMode::Planned { assignment, plan };
            }
            Err(e) => {
                if !matches!(self.vehicles[id].cav, CavMode::Hold { .. }) {
                    self.log.events.push(Event::Hold { t, vehicle: id as u32, link, reason: e.to_string() });
                }
                let seen = self.junction_broadcast(l);
                self.vehicles[id].cav = CavMode::Hold { retry_at: t + self.cfg.cav.retry_s, seen_broadcast: seen };
            }
        }
    }

    fn junction_broadcast(&self, l: usize) -> f64 {
        self.links[l].junction.map(|j| self.junctions[j].last_broadcast).unwrap_or(f64::NEG_INFINITY)
    }

    /// Reference acceleration of a CAV inside a control zone.
    fn cav_reference(&mut self, t: f64, l: usize, j: usize, id: usize, pred_gap: Option<(f64, f64)>) -> f64 {
        let retry = match &self.vehicles[id].cav {
            CavMode::Free => true,
            CavMode::Hold { retry_at, seen_broadcast } => {
                t + EPS >= *retry_at || self.junction_broadcast(l) > *seen_broadcast
            }
            CavMode::Planned { .. } => false,
        };
        if retry {
            self.try_plan(t, l, j, id);
        } else if let CavMode::Planned { assignment, plan } = self.vehicles[id].cav.clone() {
            if t > assignment.green.end + EPS {
                let link = self.links[l].id;
                self.log.events.push(Event::Hold { t, vehicle: id as u32, link, reason: "missed green".into() });
                let seen = self.junction_broadcast(l);
                self.vehicles[id].cav = CavMode::Hold { retry_at: t + self.cfg.cav.retry_s, seen_broadcast: seen };
            } else if (self.vehicles[id].s - plan.position(t)).abs() > self.cfg.cav.safety.replan_threshold {
                let t_pr = self.leader_crossing(t, l, j);
                let greens = self.cav_greens(l);
                let ego = self.state_of(id);
                let link = self.links[l].id;
                let outcome = check_and_replan(&plan, &assignment, t, &ego, t_pr, &greens, &self.cfg.cav.safety, &self.cfg.sim.bounds);
                match outcome {
                    Ok(Replan::Keep) => {}
                    Ok(Replan::Refresh(p)) => {
                        self.log.events.push(Event::Replan { t, vehicle: id as u32, link, t_cr: p.t_cr, phi: phi(&p), reassigned: false });
                        self.vehicles[id].cav = CavMode::Planned { assignment, plan: p };
                    }
                    Ok(Replan::Reassign(a, p)) => {
                        self.log.events.push(Event::Replan { t, vehicle: id as u32, link, t_cr: p.t_cr, phi: phi(&p), reassigned: true });
                        self.vehicles[id].cav = CavMode::Planned { assignment: a, plan: p };
                    }
                    Err(e) => {
                        self.log.events.push(Event::Hold { t, vehicle: id as u32, link, reason: e.to_string() });
                        let seen = self.junction_broadcast(l);
                        self.vehicles[id].cav = CavMode::Hold { retry_at: t + self.cfg.cav.retry_s, seen_broadcast: seen };
                    }
                }
            }
        }

        match &self.vehicles[id].cav {
            CavMode::Planned { plan, .. } => {
                let veh = &self.vehicles[id];
                plan.control(t)
                    + self.cfg.cav.track_kp * (plan.position(t) - veh.s)
                    + self.cfg.cav.track_kv * (plan.speed(t) - veh.v)
            }
            _ => self.hold_control(t, l, id, pred_gap),
        }
    }

    /// Held CAV: behaves like a driver at the line but stops along the
    /// energy-optimal rest profile when that is gentler than IDM.
    fn hold_control(&mut self, t: f64, l: usize, id: usize, pred_gap: Option<(f64, f64)>) -> f64 {
        let rule = self.cfg.sim.stop_line;
        let params = self.hdv_params[l];
        let veh = &self.vehicles[id];
        let open = stop_line_open(t, veh.s, veh.v, &self.greens[l], veh.committed, &rule, &params);
        let idm = hdv_command(veh.s, veh.v, open, pred_gap, &rule, &params, &self.cfg.sim.bounds);
        if open {
            self.vehicles[id].committed = true;
            return idm;
        }
        let room = -veh.s - rule.stop_margin;
        if room <= 0.05 || veh.v <= 0.0 {
            return idm;
        }
        let rest = -2.0 * veh.v * veh.v / (3.0 * room);
        let own = hdv_command(veh.s, veh.v, false, None, &rule, &params, &self.cfg.sim.bounds);
        if own < rest {
            // the ghost dominates; follow the gentler rest profile unless the predecessor is closer
            let behind_pred = pred_gap.map(|(g, _)| g < room).unwrap_or(false);
            if behind_pred { idm } else { rest.max(idm) }
        } else {
            idm
        }
    }

    fn advance(&mut self, t: f64, dt: f64) {
        let tc = t + dt;
        for l in 0..self.lanes.len() {
            let vmax = self.links[l].vmax;
            for &id in &self.lanes[l] {
                let v = &mut self.vehicles[id as usize];
                let (s, speed) = integrate(v.s, v.v, v.u, dt, vmax);
                v.s = s;
                v.v = speed;
            }
            for k in 1..self.lanes[l].len() {
                let (lead, follow) = (self.lanes[l][k - 1] as usize, self.lanes[l][k] as usize);
                let gap = self.vehicles[lead].s - self.vehicles[follow].s - VEHICLE_LENGTH_M;
                if gap <= 0.0 {
                    self.log.collisions += 1;
                    self.log.events.push(Event::Collision {
                        t: tc,
                        follower: follow as u32,
                        leader: lead as u32,
                        link: self.links[l].id,
                        gap,
                    });
                }
            }
            while let Some(&id) = self.lanes[l].front() {
                if self.vehicles[id as usize].s < 0.0 {
                    break;
                }
                self.lanes[l].pop_front();
                self.cross(l, id as usize, tc);
            }
        }
    }

    fn cross(&mut self, l: usize, id: usize, tc: f64) {
        let dt = self.cfg.sim.dt;
        let exits = self.vehicles[id].exits_here();
        let legal = exits
            || self.links[l].junction.is_none()
            || self.greens[l].iter().any(|g| g.start - dt - EPS <= tc && tc <= g.end + dt + EPS);
        if !legal {
            self.log.signal_violations += 1;
        }
        let link = self.links[l].id;
        self.log.events.push(Event::Crossing { t: tc, vehicle: id as u32, link, legal });
        self.last_cross[l] = tc;
        if let Some(router) = self.router.as_mut() {
            router.record_traversal(l, self.vehicles[id].link_entry, tc);
        }
        let veh = &mut self.vehicles[id];
        if exits {
            self.arrived += 1;
            self.log.trips.push(Trip { vehicle: id as u32, class: veh.class, od: veh.od, depart: veh.depart, arrive: tc });
            self.log.events.push(Event::Arrival { t: tc, vehicle: id as u32, trip_s: tc - veh.depart });
            return;
        }
        veh.pos += 1;
        veh.link_entry = tc;
        veh.committed = false;
        veh.cav = CavMode::Free;
        let next = veh.link();
        self.buffers[next].push_back((id as u32, tc + self.cfg.sim.junction_s));
    }
}

fn phi(p: &TrajectoryPlan) -> [f64; 4] {
    [p.phi3, p.phi2, p.phi1, p.phi0]
}
