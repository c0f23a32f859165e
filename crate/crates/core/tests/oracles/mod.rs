//! Reference implementations used as test oracles. They are written from the
//! model definitions and share no code with the library beyond plain data.

#![allow(dead_code)]

use std::collections::{BTreeMap, BinaryHeap};

use traffic_core::network::{LinkId, NetworkGraph, NodeId};

/// One approach as seen by the delay oracle.
#[derive(Debug, Clone)]
pub struct Approach {
    pub link: LinkId,
    pub phase: usize,
    pub avg_green: f64,
    pub free_speed: f64,
    /// (distance to the stop line, speed), closest first.
    pub vehicles: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct Junction {
    pub phases: usize,
    pub headway: f64,
    pub clearance: f64,
    pub lost_time: f64,
    pub startup_delay: f64,
    pub stop_speed: f64,
}

/// Total signal-induced delay when the green of step `h` is `greens[h]`.
pub fn total_delay(j: &Junction, approaches: &[Approach], greens: &[f64]) -> f64 {
    let mut start = Vec::new();
    let mut end = Vec::new();
    for (h, &g) in greens.iter().enumerate() {
        let s = if h == 0 { 0.0 } else { end[h - 1] + j.clearance };
        start.push(s);
        end.push(s + g);
    }
    let horizon_end = *end.last().unwrap();
    let closing_phase = (greens.len() - 1) % j.phases;

    let mut total = 0.0;
    for a in approaches {
        let mut free = Vec::new();
        for &(d, v) in &a.vehicles {
            let own = d / a.free_speed + if v < j.stop_speed { j.startup_delay } else { 0.0 };
            let t = match free.last() {
                Some(&p) => f64::max(own, p + j.headway),
                None => own,
            };
            free.push(t);
        }
        let open: Vec<usize> = (0..greens.len())
            .filter(|&h| h % j.phases == a.phase && greens[h] > 0.0)
            .filter(|&h| end[h] - j.lost_time - j.headway >= start[h])
            .collect();
        let cycles_after = ((a.phase + j.phases - closing_phase - 1) % j.phases + 1) as f64;
        let mut prev: Option<f64> = None;
        for &f in &free {
            let r = match prev {
                Some(p) => f64::max(f, p + j.headway),
                None => f,
            };
            let t = if open.iter().any(|&h| start[h] <= r && r <= end[h] - j.lost_time - j.headway) {
                r
            } else if let Some(&h) = open.iter().find(|&&h| start[h] > r) {
                start[h]
            } else {
                f64::max(r, horizon_end + a.avg_green * cycles_after)
            };
            total += t - f;
            prev = Some(t);
        }
    }
    total
}

/// Minimum delay over every discharge-count assignment of the second cycle,
/// enumerating each served link's count independently.
pub fn brute_force_min(
    j: &Junction,
    phase_links: &[Vec<LinkId>],
    approaches: &[Approach],
    committed_max: &[u32],
    n_max: u32,
) -> f64 {
    let m = j.phases;
    let green = |max: u32| if max == 0 { 0.0 } else { max as f64 * j.headway + j.lost_time };
    let mut greens: Vec<f64> = committed_max.iter().map(|&c| green(c)).collect();
    greens.resize(2 * m, 0.0);

    let slots: Vec<usize> = (0..m).flat_map(|h| std::iter::repeat_n(h, phase_links[h].len())).collect();
    let mut counts = vec![0u32; slots.len()];
    let mut best = f64::INFINITY;
    loop {
        let mut step_max = vec![0u32; m];
        for (k, &h) in slots.iter().enumerate() {
            step_max[h] = step_max[h].max(counts[k]);
        }
        for h in 0..m {
            greens[m + h] = green(step_max[h]);
        }
        best = best.min(total_delay(j, approaches, &greens));

        let mut k = 0;
        loop {
            if k == counts.len() {
                return best;
            }
            if counts[k] < n_max {
                counts[k] += 1;
                break;
            }
            counts[k] = 0;
            k += 1;
        }
    }
}

/// Composite Simpson rule with `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels.is_multiple_of(2));
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}

/// Linear inequality `a * u <= b`.
#[derive(Debug, Clone, Copy)]
pub struct Constraint {
    pub a: f64,
    pub b: f64,
}

/// Minimize `(u - target)^2 / 2` over a scalar subject to `hard` and `soft`
/// constraints by enumerating active sets. When hard and soft together are
/// infeasible, minimizes the total soft violation over the hard-feasible
/// set, then the objective.
pub fn scalar_qp(target: f64, hard: &[Constraint], soft: &[Constraint]) -> f64 {
    let all: Vec<Constraint> = hard.iter().chain(soft).copied().collect();
    let mut candidates = vec![target];
    candidates.extend(all.iter().filter(|c| c.a != 0.0).map(|c| c.b / c.a));
    let slack = |c: &Constraint, u: f64| c.a * u - c.b;
    let tol = |u: f64| 1e-12 * (1.0 + u.abs());
    let feasible = |set: &[Constraint], u: f64| set.iter().all(|c| slack(c, u) <= tol(u) * c.a.abs().max(1.0));
    let objective = |u: f64| 0.5 * (u - target) * (u - target);

    let best_by = |pool: Vec<f64>, key: &dyn Fn(f64) -> (f64, f64)| {
        pool.into_iter()
            .min_by(|&x, &y| key(x).partial_cmp(&key(y)).unwrap())
    };
    let fully: Vec<f64> = candidates.iter().copied().filter(|&u| feasible(&all, u)).collect();
    if let Some(u) = best_by(fully, &|u| (0.0, objective(u))) {
        return u;
    }
    let hard_ok: Vec<f64> = candidates.iter().copied().filter(|&u| feasible(hard, u)).collect();
    let violation = |u: f64| soft.iter().map(|c| slack(c, u).max(0.0)).sum::<f64>();
    best_by(hard_ok, &|u| (violation(u), objective(u))).expect("hard constraints are feasible")
}

/// Free-flow shortest path by Dijkstra.
pub fn dijkstra(graph: &NetworkGraph, origin: NodeId, destination: NodeId) -> Option<(f64, Vec<LinkId>)> {
    #[derive(PartialEq)]
    struct Item(f64, NodeId);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            o.0.partial_cmp(&self.0).unwrap().then(o.1.cmp(&self.1))
        }
    }
    let mut dist: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut via: BTreeMap<NodeId, LinkId> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(origin, 0.0);
    heap.push(Item(0.0, origin));
    while let Some(Item(d, n)) = heap.pop() {
        if d > dist[&n] {
            continue;
        }
        for l in graph.links().iter().filter(|l| l.from == n) {
            let nd = d + l.length_m / l.vmax_mps;
            if dist.get(&l.to).is_none_or(|&old| nd < old) {
                dist.insert(l.to, nd);
                via.insert(l.to, l.id);
                heap.push(Item(nd, l.to));
            }
        }
    }
    let total = *dist.get(&destination)?;
    let mut links = Vec::new();
    let mut n = destination;
    while n != origin {
        let l = via[&n];
        links.push(l);
        n = graph.link(l).unwrap().from;
    }
    links.reverse();
    Some((total, links))
}

/// Every simple path from `origin` to `destination` with free-flow time at
/// most `budget`, by depth-first search, sorted by time then link ids.
pub fn simple_paths_within(
    graph: &NetworkGraph,
    origin: NodeId,
    destination: NodeId,
    budget: f64,
) -> Vec<(f64, Vec<LinkId>)> {
    #[allow(clippy::too_many_arguments)]
    fn walk(
        graph: &NetworkGraph,
        node: NodeId,
        destination: NodeId,
        budget: f64,
        cost: f64,
        visited: &mut Vec<NodeId>,
        links: &mut Vec<LinkId>,
        out: &mut Vec<(f64, Vec<LinkId>)>,
    ) {
        if node == destination {
            out.push((cost, links.clone()));
            return;
        }
        for l in graph.links().iter().filter(|l| l.from == node) {
            let c = cost + l.length_m / l.vmax_mps;
            if c > budget + 1e-9 || visited.contains(&l.to) {
                continue;
            }
            visited.push(l.to);
            links.push(l.id);
            walk(graph, l.to, destination, budget, c, visited, links, out);
            links.pop();
            visited.pop();
        }
    }
    let mut out = Vec::new();
    walk(graph, origin, destination, budget, 0.0, &mut vec![origin], &mut Vec::new(), &mut out);
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    out
}
