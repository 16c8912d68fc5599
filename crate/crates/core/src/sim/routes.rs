//! Structured two-route airspace: the routes first cross, then merge onto a
//! shared final segment.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    pub waypoints: Vec<[f64; 2]>,
    pub length: f64,
}

impl Route {
    pub fn new(waypoints: Vec<[f64; 2]>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::Config("a route needs at least two waypoints".into()));
        }
        if waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("route waypoint"));
        }
        let length = waypoints
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum();
        Ok(Self { waypoints, length })
    }

    pub fn entry(&self) -> [f64; 2] {
        self.waypoints[0]
    }

    /// Heading of the first leg.
    pub fn entry_heading(&self) -> f64 {
        let [a, b] = [self.waypoints[0], self.waypoints[1]];
        (b[1] - a[1]).atan2(b[0] - a[0])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RouteNetwork {
    pub routes: Vec<Route>,
    pub capture_radius: f64,
}

impl RouteNetwork {
    pub fn new(routes: Vec<Route>, capture_radius: f64) -> Result<Self> {
        if routes.is_empty() {
            return Err(Error::Config("route network has no routes".into()));
        }
        if !(capture_radius > 0.0) {
            return Err(Error::Config("capture radius must be positive".into()));
        }
        Ok(Self { routes, capture_radius })
    }

    /// Default layout, mirror-symmetric about the diagonal. Route 0 enters
    /// from the west, route 1 from the south; both pass the crossing
    /// waypoint (2000, 2000) after 2 km and the merge waypoint (5000, 5000)
    /// after about 7.16 km, then share a diagonal leg. Each is 10 km long.
    pub fn default_waypoints() -> Vec<Vec<[f64; 2]>> {
        let pre_merge = 2000.0 + 2000.0 + 1000f64.hypot(3000.0);
        let leg = (10_000.0 - pre_merge) / std::f64::consts::SQRT_2;
        let exit = [5000.0 + leg, 5000.0 + leg];
        vec![
            vec![[0.0, 2000.0], [2000.0, 2000.0], [4000.0, 2000.0], [5000.0, 5000.0], exit],
            vec![[2000.0, 0.0], [2000.0, 2000.0], [2000.0, 4000.0], [5000.0, 5000.0], exit],
        ]
    }

    pub fn default_network() -> Self {
        let routes = Self::default_waypoints()
            .into_iter()
            .map(|w| Route::new(w).expect("default route is valid"))
            .collect();
        Self::new(routes, 100.0).expect("default network is valid")
    }
}
