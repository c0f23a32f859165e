//! Per-intersection signal control: phase timing, crossing-time and delay
//! estimation, discharge-count optimization and the receding-horizon loop.

mod controller;
mod estimate;
mod optimize;
mod timing;

pub use controller::{fixed_time_plans, ApproachMeasurement, FixedTimePlan, SignalController};
pub use estimate::{
    estimated_delays, free_flow_crossing_times, signalized_crossing_times, LinkQueueSnapshot,
    QueuedVehicle, StartupDelay,
};
pub use optimize::{
    check_committed, green_durations_from_counts, optimize_discharge, plan_delay, DischargePlan,
    SignalError, SignalParams,
};
pub use timing::{compute_phase_timing, green_intervals_for_link, BroadcastRecord, PhaseSchedule};
