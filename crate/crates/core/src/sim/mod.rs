//! Structured two-route airspace simulation.

mod events;
mod kinematics;
mod reward;
mod routes;
mod spawn;
mod traffic;

pub use events::{pairwise_separation, EventDetector, StepEvents};
pub use kinematics::{
    advance_waypoint, step_aircraft, wrap_angle, Action, AircraftState, RouteCursor, StepResult, WaypointUpdate, Wind,
    CRUISE_SPEED, DELTA_V, KNOT, V_MAX, V_MIN,
};
pub use reward::{compute_reward, RewardParams};
pub use routes::{Route, RouteNetwork};
pub use spawn::{censored_mean_gap, spawn_traffic};
pub use traffic::{
    write_event_log, Aircraft, Airspace, AgentOutcome, EventKind, EventRecord, Scenario, StepOutcome, TrafficState,
};
