//! Discrete-time point-mass kinematics with waypoint-switching heading.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Metres per second in one knot.
pub const KNOT: f64 = 0.514444;
/// Speed envelope of the simulated airframe (m/s).
pub const V_MIN: f64 = 7.5;
pub const V_MAX: f64 = 36.0;
pub const CRUISE_SPEED: f64 = 20.0;
/// Speed-command quantum: 5 kn.
pub const DELTA_V: f64 = 5.0 * KNOT;

/// Wrap an angle into (-pi, pi].
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Wind {
    pub east: f64,
    pub north: f64,
}

impl Wind {
    pub const CALM: Wind = Wind { east: 0.0, north: 0.0 };

    pub fn new(east: f64, north: f64) -> Self {
        Self { east, north }
    }
}

/// One aircraft's kinematic row `[x, y, heading, speed, dist_to_goal, prev_cmd]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AircraftState {
    /// East position (m).
    pub x: f64,
    /// North position (m).
    pub y: f64,
    /// Heading (rad), counter-clockwise from east.
    pub heading: f64,
    /// Ground-relative speed (m/s).
    pub speed: f64,
    /// Remaining along-route distance (m).
    pub dist_to_goal: f64,
    /// Previous speed command (m/s, signed).
    pub prev_cmd: f64,
}

impl AircraftState {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64, dist_to_goal: f64, prev_cmd: f64) -> Self {
        Self { x, y, heading, speed, dist_to_goal, prev_cmd }
    }

    pub fn to_row(&self) -> [f64; 6] {
        [self.x, self.y, self.heading, self.speed, self.dist_to_goal, self.prev_cmd]
    }

    pub fn from_row(r: &[f64; 6]) -> Self {
        Self::new(r[0], r[1], r[2], r[3], r[4], r[5])
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.to_row().iter().all(|v| v.is_finite())
    }
}

/// Discrete speed adjustment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Slower = 0,
    Hold = 1,
    Faster = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Slower, Action::Hold, Action::Faster];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// Signed command in steps of the speed quantum (-1, 0, +1).
    pub fn steps(self) -> f64 {
        self as usize as f64 - 1.0
    }

    pub fn command(self, delta_v: f64) -> f64 {
        self.steps() * delta_v
    }
}

/// The part of a route an aircraft still has to fly.
#[derive(Clone, Copy, Debug)]
pub struct RouteCursor<'a> {
    pub waypoints: &'a [[f64; 2]],
    /// Index of the waypoint currently being flown to.
    pub next: usize,
    pub capture_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaypointUpdate {
    pub heading: f64,
    pub next: usize,
    /// Set when the final waypoint was captured.
    pub arrived: bool,
}

/// Heading switch at waypoint capture. A no-op outside the capture radius.
pub fn advance_waypoint(s: &AircraftState, cursor: RouteCursor<'_>) -> WaypointUpdate {
    let unchanged = WaypointUpdate { heading: s.heading, next: cursor.next, arrived: false };
    let Some(target) = cursor.waypoints.get(cursor.next) else {
        return WaypointUpdate { arrived: true, ..unchanged };
    };
    let d = (target[0] - s.x).hypot(target[1] - s.y);
    if d > cursor.capture_radius {
        return unchanged;
    }
    match cursor.waypoints.get(cursor.next + 1) {
        Some(after) => WaypointUpdate {
            heading: (after[1] - s.y).atan2(after[0] - s.x),
            next: cursor.next + 1,
            arrived: false,
        },
        None => WaypointUpdate { arrived: true, ..unchanged },
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub state: AircraftState,
    pub next_waypoint: usize,
    pub arrived: bool,
}

/// Advance one aircraft by one time step under speed command `u` (m/s).
///
/// The command saturates so that the new speed stays inside
/// `[V_MIN, V_MAX]`; position and distance-to-go use that saturated
/// speed, which keeps the step consistent with the speed it reports.
pub fn step_aircraft(
    s: &AircraftState,
    u: f64,
    wind: Wind,
    dt: f64,
    route: Option<RouteCursor<'_>>,
) -> Result<StepResult> {
    if !s.is_finite() || !u.is_finite() || !wind.east.is_finite() || !wind.north.is_finite() {
        return Err(Error::NonFinite("aircraft step input"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let speed = (s.speed + u).clamp(V_MIN, V_MAX);
    let (sin, cos) = s.heading.sin_cos();
    let mut next = AircraftState {
        x: s.x + (speed * cos + wind.east) * dt,
        y: s.y + (speed * sin + wind.north) * dt,
        heading: s.heading,
        speed,
        dist_to_goal: s.dist_to_goal - speed * dt,
        prev_cmd: u,
    };
    let (mut next_wp, mut arrived) = (0, false);
    if let Some(cursor) = route {
        let upd = advance_waypoint(&next, cursor);
        next.heading = upd.heading;
        next_wp = upd.next;
        arrived = upd.arrived;
    }
    if next.dist_to_goal <= 0.0 {
        // Off-track drift (e.g. strong wind) can miss the final capture.
        next.dist_to_goal = 0.0;
        arrived = route.is_some();
    }
    Ok(StepResult { state: next, next_waypoint: next_wp, arrived })
}
