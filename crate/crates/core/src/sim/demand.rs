//! Seeded spawn process: per OD pair, arrivals on a uniform headway lattice,
//! each displaced by a uniform jitter of a fraction of the headway.

use rand::Rng;

use super::config::OdDemand;
use crate::dynamics::VehicleClass;

/// One vehicle due to enter the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spawn {
    pub od: usize,
    pub time: f64,
    pub class: VehicleClass,
}

/// Next spawn time of every OD pair.
#[derive(Debug, Clone)]
pub struct DemandGenerator {
    pairs: Vec<OdDemand>,
    /// Unjittered slot of the next arrival, and its jittered time.
    slot: Vec<f64>,
    next: Vec<f64>,
    jitter: f64,
    penetration: f64,
}

impl DemandGenerator {
    /// The lattice of each pair starts uniformly within its first headway.
    pub fn new<R: Rng>(pairs: &[OdDemand], jitter: f64, penetration: f64, rng: &mut R) -> Self {
        let mut slot = Vec::with_capacity(pairs.len());
        let mut next = Vec::with_capacity(pairs.len());
        for p in pairs {
            let u: f64 = rng.gen();
            let j: f64 = rng.gen_range(-1.0..=1.0);
            if p.rate_veh_h > 0.0 {
                let h = 3600.0 / p.rate_veh_h;
                slot.push(u * h);
                next.push((u * h + jitter * j * h).max(0.0));
            } else {
                slot.push(f64::INFINITY);
                next.push(f64::INFINITY);
            }
        }
        DemandGenerator { pairs: pairs.to_vec(), slot, next, jitter, penetration }
    }

    pub fn pairs(&self) -> &[OdDemand] {
        &self.pairs
    }

    /// Vehicles due at or before `clock`, in OD order. Every spawn draws its
    /// class and the jitter of the next arrival, whatever the penetration.
    pub fn spawn_demand<R: Rng>(&mut self, clock: f64, rng: &mut R) -> Vec<Spawn> {
        let mut out = Vec::new();
        for (od, pair) in self.pairs.iter().enumerate() {
            while self.next[od] <= clock {
                let draw: f64 = rng.gen();
                let class = if draw < self.penetration { VehicleClass::Cav } else { VehicleClass::Hdv };
                out.push(Spawn { od, time: self.next[od], class });
                let h = 3600.0 / pair.rate_veh_h;
                let j: f64 = rng.gen_range(-1.0..=1.0);
                self.slot[od] += h;
                self.next[od] = self.slot[od] + self.jitter * j * h;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn count(rate: f64, pen: f64, seed: u64) -> (usize, usize) {
        let pairs = [OdDemand { origin: 1, destination: 2, rate_veh_h: rate }];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = DemandGenerator::new(&pairs, 0.2, pen, &mut rng);
        let mut total = 0;
        let mut cav = 0;
        for step in 0..21000 {
            for s in g.spawn_demand(step as f64 * 0.1, &mut rng) {
                total += 1;
                cav += usize::from(s.class == VehicleClass::Cav);
            }
        }
        (total, cav)
    }

    #[test]
    fn headcount_over_reference_duration() {
        for seed in 0..10 {
            let (n, _) = count(250.0, 0.5, seed);
            assert!((143..=147).contains(&n), "seed {seed}: {n}");
        }
    }

    #[test]
    fn headways_stay_within_jitter() {
        let pairs = [OdDemand { origin: 1, destination: 2, rate_veh_h: 250.0 }];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = DemandGenerator::new(&pairs, 0.2, 0.5, &mut rng);
        let times: Vec<f64> = (0..21000).flat_map(|k| g.spawn_demand(k as f64 * 0.1, &mut rng)).map(|s| s.time).collect();
        for w in times.windows(2) {
            let gap = w[1] - w[0];
            assert!((14.4 * 0.6 - 1e-9..=14.4 * 1.4 + 1e-9).contains(&gap), "{gap}");
        }
    }

    #[test]
    fn zero_penetration_is_all_hdv() {
        assert_eq!(count(250.0, 0.0, 3).1, 0);
    }

    #[test]
    fn zero_rate_never_spawns() {
        assert_eq!(count(0.0, 0.5, 3).0, 0);
    }
}
