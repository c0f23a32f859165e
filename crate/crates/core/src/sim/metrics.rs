//! Recorded outputs of a run and their CSV / JSON-lines export.
//!
//! Exported files:
//! - `accumulation.csv`: `time_s` (end of bin), `vehicles` (time-averaged
//!   network accumulation over the bin)
//! - `edge_volumes.csv`: `edge`, `cumulative_count` (vehicles that entered
//!   the link), `time_avg_count` (mean vehicles on the link and its entry queue)
//! - `od_times.csv`: `origin`, `destination`, `mean_min` (mean completed trip
//!   time in minutes, empty without trips), `n_trips`
//! - `events.jsonl`: one JSON object per event, in time order

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleClass;
use crate::network::{LinkId, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Spawn { t: f64, vehicle: u32, class: VehicleClass, origin: NodeId, destination: NodeId, path: Vec<LinkId> },
    EntryBlocked { t: f64, vehicle: u32, link: LinkId },
    LinkEntry { t: f64, vehicle: u32, link: LinkId, speed: f64 },
    Crossing { t: f64, vehicle: u32, link: LinkId, legal: bool },
    Arrival { t: f64, vehicle: u32, trip_s: f64 },
    Broadcast { t: f64, intersection: NodeId, eta: Vec<f64> },
    Plan { t: f64, vehicle: u32, link: LinkId, t_cr: f64, phi: [f64; 4] },
    Replan { t: f64, vehicle: u32, link: LinkId, t_cr: f64, phi: [f64; 4], reassigned: bool },
    Hold { t: f64, vehicle: u32, link: LinkId, reason: String },
    SafetyInfeasible { t: f64, vehicle: u32, link: LinkId },
    Collision { t: f64, follower: u32, leader: u32, link: LinkId, gap: f64 },
}

/// Counts at the end of one bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSnapshot {
    pub spawned: u64,
    pub in_network: u64,
    pub arrived: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub vehicle: u32,
    pub class: VehicleClass,
    pub od: usize,
    pub depart: f64,
    pub arrive: f64,
}

/// A routing decision with the cost of every candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub t: f64,
    pub vehicle: u32,
    pub chosen: usize,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub bin_width: f64,
    pub duration: f64,
    /// Time-averaged network accumulation per bin.
    pub accumulation: Vec<f64>,
    pub snapshots: Vec<BinSnapshot>,
    pub edges: Vec<LinkId>,
    pub edge_entries: Vec<u64>,
    /// Integral of each link's vehicle count over the run, veh·s.
    pub edge_occupancy: Vec<f64>,
    pub od_pairs: Vec<(NodeId, NodeId)>,
    pub trips: Vec<Trip>,
    pub assignments: Vec<AssignmentRecord>,
    pub events: Vec<Event>,
    pub signal_violations: u64,
    pub collisions: u64,
    pub safety_infeasible: u64,
    pub rejected_spawns: u64,
}

impl MetricsLog {
    pub fn empty(bin_width: f64, duration: f64, edges: Vec<LinkId>, od_pairs: Vec<(NodeId, NodeId)>) -> Self {
        let n = edges.len();
        MetricsLog {
            bin_width,
            duration,
            accumulation: Vec::new(),
            snapshots: Vec::new(),
            edge_entries: vec![0; n],
            edge_occupancy: vec![0.0; n],
            edges,
            od_pairs,
            trips: Vec::new(),
            assignments: Vec::new(),
            events: Vec::new(),
            signal_violations: 0,
            collisions: 0,
            safety_infeasible: 0,
            rejected_spawns: 0,
        }
    }

    pub fn peak_accumulation(&self) -> f64 {
        self.accumulation.iter().copied().fold(0.0, f64::max)
    }

    /// Conservation holds at every bin.
    pub fn is_conserved(&self) -> bool {
        self.snapshots.iter().all(|s| s.spawned == s.in_network + s.arrived)
    }

    /// Mean completed-trip time per OD pair in minutes, with trip counts.
    pub fn od_times(&self) -> Vec<(NodeId, NodeId, Option<f64>, usize)> {
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for trip in &self.trips {
            let e = sums.entry(trip.od).or_insert((0.0, 0));
            e.0 += trip.arrive - trip.depart;
            e.1 += 1;
        }
        self.od_pairs
            .iter()
            .enumerate()
            .map(|(i, &(o, d))| match sums.get(&i) {
                Some(&(sum, n)) => (o, d, Some(sum / n as f64 / 60.0), n),
                None => (o, d, None, 0),
            })
            .collect()
    }

    /// Average over OD pairs with completed trips of their mean trip time, minutes.
    pub fn mean_od_time_min(&self) -> f64 {
        let means: Vec<f64> = self.od_times().iter().filter_map(|r| r.2).collect();
        if means.is_empty() {
            0.0
        } else {
            means.iter().sum::<f64>() / means.len() as f64
        }
    }

    pub fn summary(&self) -> Summary {
        let last = self.snapshots.last().copied().unwrap_or(BinSnapshot { spawned: 0, in_network: 0, arrived: 0 });
        Summary {
            ttt: total_travel_time(self).by_accumulation,
            mean_od_min: self.mean_od_time_min(),
            peak_accumulation: self.peak_accumulation(),
            spawned: last.spawned,
            arrived: last.arrived,
            signal_violations: self.signal_violations,
            collisions: self.collisions,
        }
    }
}

/// Headline numbers of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ttt: f64,
    pub mean_od_min: f64,
    pub peak_accumulation: f64,
    pub spawned: u64,
    pub arrived: u64,
    pub signal_violations: u64,
    pub collisions: u64,
}

/// Total travel time, veh·s, computed from the accumulation series and from
/// the per-edge occupancy integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TravelTime {
    pub by_accumulation: f64,
    pub by_edges: f64,
}

pub fn total_travel_time(log: &MetricsLog) -> TravelTime {
    TravelTime {
        by_accumulation: log.accumulation.iter().sum::<f64>() * log.bin_width,
        by_edges: log.edge_occupancy.iter().sum(),
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_default()
}

/// Write the four output files into `dir`, creating it if needed.
pub fn export_metrics(log: &MetricsLog, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;

    let mut f = io::BufWriter::new(fs::File::create(dir.join("accumulation.csv"))?);
    writeln!(f, "time_s,vehicles")?;
    for (i, a) in log.accumulation.iter().enumerate() {
        writeln!(f, "{:.1},{a:.4}", (i + 1) as f64 * log.bin_width)?;
    }
    f.flush()?;

    let mut f = io::BufWriter::new(fs::File::create(dir.join("edge_volumes.csv"))?);
    writeln!(f, "edge,cumulative_count,time_avg_count")?;
    if !log.accumulation.is_empty() {
        let span = log.accumulation.len() as f64 * log.bin_width;
        for ((e, n), occ) in log.edges.iter().zip(&log.edge_entries).zip(&log.edge_occupancy) {
            writeln!(f, "{e},{n},{:.4}", occ / span)?;
        }
    }
    f.flush()?;

    let mut f = io::BufWriter::new(fs::File::create(dir.join("od_times.csv"))?);
    writeln!(f, "origin,destination,mean_min,n_trips")?;
    if !log.accumulation.is_empty() {
        for (o, d, mean, n) in log.od_times() {
            writeln!(f, "{o},{d},{},{n}", fmt_opt(mean))?;
        }
    }
    f.flush()?;

    let mut f = io::BufWriter::new(fs::File::create(dir.join("events.jsonl"))?);
    for e in &log.events {
        serde_json::to_writer(&mut f, e)?;
        writeln!(f)?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_with_trips() -> MetricsLog {
        let mut log = MetricsLog::empty(10.0, 1800.0, vec![1], vec![(1, 2)]);
        for (v, dur) in [(1, 600.0), (2, 1200.0)] {
            log.trips.push(Trip { vehicle: v, class: VehicleClass::Hdv, od: 0, depart: 0.0, arrive: dur });
        }
        log.accumulation = vec![2.0; 180];
        log
    }

    #[test]
    fn od_mean_in_minutes() {
        let log = log_with_trips();
        assert_eq!(log.od_times(), vec![(1, 2, Some(15.0), 2)]);
        assert_eq!(log.mean_od_time_min(), 15.0);
    }

    #[test]
    fn empty_log_exports_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let log = MetricsLog::empty(10.0, 0.0, vec![1, 2], vec![(1, 2)]);
        export_metrics(&log, dir.path()).unwrap();
        for (name, header) in [
            ("accumulation.csv", "time_s,vehicles\n"),
            ("edge_volumes.csv", "edge,cumulative_count,time_avg_count\n"),
            ("od_times.csv", "origin,destination,mean_min,n_trips\n"),
            ("events.jsonl", ""),
        ] {
            assert_eq!(fs::read_to_string(dir.path().join(name)).unwrap(), header);
        }
        assert_eq!(total_travel_time(&log).by_accumulation, 0.0);
    }

    #[test]
    fn single_vehicle_integral() {
        let mut log = MetricsLog::empty(10.0, 300.0, vec![1], vec![]);
        log.accumulation = vec![1.0; 30];
        log.edge_occupancy = vec![300.0];
        let j = total_travel_time(&log);
        assert_eq!(j.by_accumulation, 300.0);
        assert_eq!(j.by_edges, 300.0);
    }

    #[test]
    fn two_vehicle_occupancy_table() {
        // vehicle A on edge 1 for bins 0-2, vehicle B on edge 2 for bins 1-4
        let occupancy = [[1, 0], [1, 1], [1, 1], [0, 1], [0, 1]];
        let mut log = MetricsLog::empty(10.0, 50.0, vec![1, 2], vec![]);
        log.accumulation = occupancy.iter().map(|r| (r[0] + r[1]) as f64).collect();
        log.edge_occupancy = (0..2).map(|e| occupancy.iter().map(|r| r[e] as f64 * 10.0).sum()).collect();
        let hand = 10.0 * (1 + 2 + 2 + 1 + 1) as f64;
        let j = total_travel_time(&log);
        assert_eq!(j.by_accumulation, hand);
        assert_eq!(j.by_edges, hand);
    }

    #[test]
    fn export_writes_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = log_with_trips();
        log.events.push(Event::Arrival { t: 600.0, vehicle: 1, trip_s: 600.0 });
        export_metrics(&log, dir.path()).unwrap();
        let od = fs::read_to_string(dir.path().join("od_times.csv")).unwrap();
        assert_eq!(od.lines().nth(1), Some("1,2,15.0000,2"));
        let acc = fs::read_to_string(dir.path().join("accumulation.csv")).unwrap();
        assert_eq!(acc.lines().count(), 181);
        let ev = fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
        assert_eq!(ev.trim(), r#"{"kind":"arrival","t":600.0,"vehicle":1,"trip_s":600.0}"#);
    }
}
