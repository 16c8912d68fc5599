//! Onset detection for NMAC and loss-of-separation events, plus the running
//! minimum pairwise separation.

use std::collections::BTreeSet;

use super::TrafficState;

type Pair = (u32, u32);

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepEvents {
    pub nmac_onsets: Vec<Pair>,
    pub los_onsets: Vec<Pair>,
    /// Smallest pairwise distance this step; `None` with fewer than two aircraft.
    pub min_separation: Option<f64>,
}

/// Counts an event once per aircraft pair per entry into the radius; a pair
/// that stays inside is not counted again until it has left.
#[derive(Clone, Debug)]
pub struct EventDetector {
    d_pz: f64,
    d_r: f64,
    inside_pz: BTreeSet<Pair>,
    inside_r: BTreeSet<Pair>,
}

impl EventDetector {
    pub fn new(d_pz: f64, d_r: f64) -> Self {
        Self { d_pz, d_r, inside_pz: BTreeSet::new(), inside_r: BTreeSet::new() }
    }

    pub fn update(&mut self, traffic: &TrafficState) -> StepEvents {
        let mut pz = BTreeSet::new();
        let mut r = BTreeSet::new();
        let mut min_sep: Option<f64> = None;
        let ac = &traffic.aircraft;
        for i in 0..ac.len() {
            for j in i + 1..ac.len() {
                let d = (ac[i].state.x - ac[j].state.x).hypot(ac[i].state.y - ac[j].state.y);
                min_sep = Some(min_sep.map_or(d, |m| m.min(d)));
                let pair = (ac[i].id.min(ac[j].id), ac[i].id.max(ac[j].id));
                if d <= self.d_pz {
                    pz.insert(pair);
                }
                if d <= self.d_r {
                    r.insert(pair);
                }
            }
        }
        let events = StepEvents {
            nmac_onsets: pz.difference(&self.inside_pz).copied().collect(),
            los_onsets: r.difference(&self.inside_r).copied().collect(),
            min_separation: min_sep,
        };
        self.inside_pz = pz;
        self.inside_r = r;
        events
    }
}

/// Distances from `ownship` to every other aircraft, in traffic order.
pub fn pairwise_separation(traffic: &TrafficState, ownship: u32) -> crate::Result<Vec<f64>> {
    let own = traffic.get(ownship).ok_or(crate::Error::UnknownAircraft(ownship))?;
    Ok(traffic
        .aircraft
        .iter()
        .filter(|a| a.id != ownship)
        .map(|a| (a.state.x - own.state.x).hypot(a.state.y - own.state.y))
        .collect())
}
