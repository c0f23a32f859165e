//! Mixed-traffic network simulation with a two-layer controller.
//!
//! The upper layer routes connected automated vehicles (CAVs) by predicted
//! marginal cost; the lower layer jointly retimes each signal over a
//! receding two-cycle horizon and plans energy-optimal CAV approaches among
//! human-driven vehicles (HDVs).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cav;
pub mod dynamics;
pub mod network;
pub mod routing;
pub mod signal;
pub mod sim;

use serde::{Deserialize, Serialize};

/// Closed time interval `[start, end]` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Interval { start, end }
    }

    /// Unbounded interval for approaches without a signal.
    pub fn always(from: f64) -> Self {
        Interval { start: from, end: f64::INFINITY }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }
}
