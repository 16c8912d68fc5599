//! True-state reward: proximity penalty per detected intruder plus a
//! quadratic speed-command penalty.

use crate::error::Result;
use crate::observation::{assemble_state, StateMatrix, ROWS};
use crate::sim::{TrafficState, DELTA_V};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardParams {
    pub alpha: f64,
    /// Per metre.
    pub beta: f64,
    pub c_nmac: f64,
    pub lambda_u: f64,
    /// Speed quantum (m/s).
    pub delta_v: f64,
    /// Protected (NMAC) radius (m).
    pub d_pz: f64,
    /// Detection radius (m).
    pub d_r: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self { alpha: 0.1, beta: 2e-4, c_nmac: 1.0, lambda_u: 0.001, delta_v: DELTA_V, d_pz: 100.0, d_r: 500.0 }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.c_nmac, self.lambda_u, self.delta_v, self.d_pz, self.d_r];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.delta_v == 0.0 {
            return Err(crate::Error::Config("reward parameters must be finite and non-negative".into()));
        }
        if self.d_pz >= self.d_r {
            return Err(crate::Error::Config("protected radius must be smaller than detection radius".into()));
        }
        Ok(())
    }

    /// Proximity penalty for one intruder at distance `d`. The NMAC branch
    /// is tested first since it is nested inside the loss-of-separation one.
    pub fn proximity(&self, d: f64) -> f64 {
        if d <= self.d_pz {
            -self.alpha + self.beta * d - self.c_nmac
        } else if d <= self.d_r {
            -self.alpha + self.beta * d
        } else {
            0.0
        }
    }

    /// Control-effort penalty for a command `u` in m/s.
    pub fn effort(&self, u: f64) -> f64 {
        let steps = u / self.delta_v;
        -self.lambda_u * steps * steps
    }

    /// Reward for the ownship of a true next-state matrix.
    pub fn from_state(&self, next: &StateMatrix, u: f64) -> f64 {
        let prox: f64 = (1..ROWS).filter(|&r| next.row_valid(r)).map(|r| self.proximity(next.intruder_distance(r))).sum();
        prox + self.effort(u)
    }
}

/// Reward of `ownship` given the true traffic after the step.
pub fn compute_reward(params: &RewardParams, next_traffic: &TrafficState, ownship: u32, u: f64) -> Result<f64> {
    let s = assemble_state(next_traffic, ownship, params.d_r)?;
    Ok(params.from_state(&s, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Aircraft, AircraftState};

    fn traffic(intruder_at: Option<f64>) -> TrafficState {
        let mk = |id, x| Aircraft { id, state: AircraftState::new(x, 0.0, 0.0, 20.0, 5000.0, 0.0), route: 0, next_waypoint: 1 };
        let mut aircraft = vec![mk(0, 0.0)];
        if let Some(d) = intruder_at {
            aircraft.push(mk(1, d));
        }
        TrafficState { aircraft, time: 0.0 }
    }

    #[test]
    fn reward_cases() {
        let p = RewardParams::default();
        let r = compute_reward(&p, &traffic(Some(50.0)), 0, 0.0).unwrap();
        assert!((r - (-1.09)).abs() < 1e-12, "{r}");
        let r = compute_reward(&p, &traffic(Some(300.0)), 0, 0.0).unwrap();
        assert!((r - (-0.04)).abs() < 1e-12, "{r}");
        let r = compute_reward(&p, &traffic(Some(800.0)), 0, p.delta_v).unwrap();
        assert!((r - (-0.001)).abs() < 1e-15, "{r}");
        let r = compute_reward(&p, &traffic(None), 0, -p.delta_v).unwrap();
        assert!((r - (-0.001)).abs() < 1e-15, "{r}");
    }

    #[test]
    fn proximity_monotone_on_detection_disc() {
        let p = RewardParams::default();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..=5000 {
            let d = i as f64 * 0.1;
            let q = p.proximity(d);
            assert!(q >= prev, "d = {d}");
            prev = q;
        }
        assert_eq!(p.proximity(500.0 + 1e-9), 0.0);
    }

    #[test]
    fn validate_rejects_inverted_radii() {
        let p = RewardParams { d_pz: 600.0, ..Default::default() };
        assert!(p.validate().is_err());
        assert!(RewardParams::default().validate().is_ok());
    }
}
