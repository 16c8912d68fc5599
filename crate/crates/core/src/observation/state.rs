use crate::error::{Error, Result};
use crate::sim::TrafficState;

/// Columns per aircraft row.
pub const STATE_DIM: usize = 6;
/// Intruder rows per ownship observation.
pub const MAX_INTRUDERS: usize = 5;
pub const ROWS: usize = 1 + MAX_INTRUDERS;

/// Column indices of an aircraft row.
pub mod col {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const HEADING: usize = 2;
    pub const SPEED: usize = 3;
    pub const DIST_TO_GOAL: usize = 4;
    pub const PREV_CMD: usize = 5;
}

/// Ownship row followed by up to [`MAX_INTRUDERS`] intruder rows, in absolute
/// coordinates. Rows whose mask bit is clear hold zeros and carry no
/// information.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateMatrix {
    pub rows: [[f64; STATE_DIM]; ROWS],
    pub mask: [bool; MAX_INTRUDERS],
}

impl Default for StateMatrix {
    fn default() -> Self {
        Self { rows: [[0.0; STATE_DIM]; ROWS], mask: [false; MAX_INTRUDERS] }
    }
}

impl StateMatrix {
    pub fn ownship_only(row: [f64; STATE_DIM]) -> Self {
        let mut s = Self::default();
        s.rows[0] = row;
        s
    }

    /// Row 0 is always valid; row `r > 0` is valid when `mask[r - 1]` is set.
    #[inline]
    pub fn row_valid(&self, r: usize) -> bool {
        r == 0 || self.mask[r - 1]
    }

    pub fn intruder_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn valid_rows(&self) -> impl Iterator<Item = usize> + '_ {
        (0..ROWS).filter(|&r| self.row_valid(r))
    }

    /// Planar distance from the ownship to intruder row `r`.
    pub fn intruder_distance(&self, r: usize) -> f64 {
        let (o, i) = (&self.rows[0], &self.rows[r]);
        (o[col::X] - i[col::X]).hypot(o[col::Y] - i[col::Y])
    }

    pub fn flatten(&self) -> [f64; ROWS * STATE_DIM] {
        let mut out = [0.0; ROWS * STATE_DIM];
        for (r, row) in self.rows.iter().enumerate() {
            out[r * STATE_DIM..(r + 1) * STATE_DIM].copy_from_slice(row);
        }
        out
    }

    pub fn from_flat(flat: &[f64], mask: [bool; MAX_INTRUDERS]) -> Result<Self> {
        if flat.len() != ROWS * STATE_DIM {
            return Err(Error::Shape(format!("expected {} values, got {}", ROWS * STATE_DIM, flat.len())));
        }
        let mut s = Self { mask, ..Self::default() };
        for (r, row) in s.rows.iter_mut().enumerate() {
            row.copy_from_slice(&flat[r * STATE_DIM..(r + 1) * STATE_DIM]);
        }
        Ok(s)
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }

    /// Zero every masked row.
    pub fn scrub_masked(&mut self) {
        for r in 1..ROWS {
            if !self.mask[r - 1] {
                self.rows[r] = [0.0; STATE_DIM];
            }
        }
    }
}

/// Build the ownship's state matrix: intruders within `detect_radius`
/// (inclusive), nearest first, at most [`MAX_INTRUDERS`].
pub fn assemble_state(traffic: &TrafficState, ownship: u32, detect_radius: f64) -> Result<StateMatrix> {
    let own = traffic.get(ownship).ok_or(Error::UnknownAircraft(ownship))?;
    let [ox, oy] = own.state.position();
    let mut near: Vec<(f64, u32, usize)> = traffic
        .aircraft
        .iter()
        .enumerate()
        .filter(|(_, a)| a.id != ownship)
        .map(|(i, a)| ((a.state.x - ox).hypot(a.state.y - oy), a.id, i))
        .filter(|(d, _, _)| *d <= detect_radius)
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut s = StateMatrix::ownship_only(own.state.to_row());
    for (slot, &(_, _, i)) in near.iter().take(MAX_INTRUDERS).enumerate() {
        s.rows[slot + 1] = traffic.aircraft[i].state.to_row();
        s.mask[slot] = true;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Aircraft, AircraftState};

    fn at(id: u32, x: f64, y: f64) -> Aircraft {
        Aircraft { id, state: AircraftState::new(x, y, 0.0, 20.0, 5000.0, 0.0), route: 0, next_waypoint: 1 }
    }

    #[test]
    fn no_intruders_in_range() {
        let t = TrafficState { aircraft: vec![at(1, 0.0, 0.0), at(2, 900.0, 0.0)], time: 0.0 };
        let s = assemble_state(&t, 1, 500.0).unwrap();
        assert_eq!(s.mask, [false; MAX_INTRUDERS]);
        assert_eq!(s.rows[0][0], 0.0);
        assert_eq!(s.rows[0][col::SPEED], 20.0);
        assert!(s.rows[1..].iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn keeps_nearest_five() {
        let mut ac = vec![at(0, 0.0, 0.0)];
        let dists = [400.0, 100.0, 300.0, 50.0, 450.0, 200.0, 250.0];
        for (i, d) in dists.iter().enumerate() {
            ac.push(at(i as u32 + 1, *d, 0.0));
        }
        let t = TrafficState { aircraft: ac, time: 0.0 };
        let s = assemble_state(&t, 0, 500.0).unwrap();
        assert_eq!(s.mask, [true; MAX_INTRUDERS]);
        let got: Vec<f64> = (1..ROWS).map(|r| s.intruder_distance(r)).collect();
        assert_eq!(got, vec![50.0, 100.0, 200.0, 250.0, 300.0]);
    }

    #[test]
    fn detection_radius_is_inclusive() {
        let t = TrafficState { aircraft: vec![at(1, 0.0, 0.0), at(2, 500.0, 0.0)], time: 0.0 };
        let s = assemble_state(&t, 1, 500.0).unwrap();
        assert_eq!(s.intruder_count(), 1);
    }

    #[test]
    fn unknown_ownship() {
        let t = TrafficState { aircraft: vec![at(1, 0.0, 0.0)], time: 0.0 };
        assert!(matches!(assemble_state(&t, 9, 500.0), Err(Error::UnknownAircraft(9))));
    }
}
