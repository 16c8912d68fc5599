use std::collections::VecDeque;
use std::io::Write;

use super::events::{EventDetector, StepEvents};
use super::kinematics::{step_aircraft, Action, AircraftState, RouteCursor, Wind, CRUISE_SPEED};
use super::reward::RewardParams;
use super::routes::RouteNetwork;
use super::spawn::spawn_traffic;
use crate::error::{Error, Result};
use crate::observation::{assemble_state, StateMatrix};
use crate::rng::{stream, tags};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aircraft {
    pub id: u32,
    pub state: AircraftState,
    pub route: usize,
    pub next_waypoint: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrafficState {
    pub aircraft: Vec<Aircraft>,
    /// Simulation time (s).
    pub time: f64,
}

impl TrafficState {
    pub fn get(&self, id: u32) -> Option<&Aircraft> {
        self.aircraft.iter().find(|a| a.id == id)
    }

    pub fn ids(&self) -> Vec<u32> {
        self.aircraft.iter().map(|a| a.id).collect()
    }
}

/// Everything that defines the airspace apart from the episode seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub network: RouteNetwork,
    /// Poisson arrival rate per route (aircraft/s).
    pub arrival_rate: f64,
    pub min_headway: f64,
    pub wind: Wind,
    /// Episode horizon (s).
    pub episode_length: f64,
    pub dt: f64,
    pub entry_speed: f64,
    pub reward: RewardParams,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            network: RouteNetwork::default_network(),
            arrival_rate: 1.0 / 60.0,
            min_headway: 30.0,
            wind: Wind::CALM,
            episode_length: 3000.0,
            dt: 1.0,
            entry_speed: CRUISE_SPEED,
            reward: RewardParams::default(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return Err(Error::Config("arrival_rate must be non-negative".into()));
        }
        if !(self.min_headway >= 0.0) || !(self.episode_length > 0.0) || !(self.dt > 0.0) {
            return Err(Error::Config("headway, episode length and dt must be positive".into()));
        }
        if !(self.entry_speed >= super::V_MIN && self.entry_speed <= super::V_MAX) {
            return Err(Error::Config("entry speed outside the speed envelope".into()));
        }
        Ok(())
    }
}

/// Per-aircraft result of one step, computed on the true traffic after
/// motion and before arrivals are removed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentOutcome {
    pub id: u32,
    pub action: Action,
    /// Command actually issued (m/s).
    pub command: f64,
    pub next_state: StateMatrix,
    pub reward: f64,
    /// The aircraft reached its destination and left the airspace.
    pub done: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutcome {
    pub agents: Vec<AgentOutcome>,
    pub events: StepEvents,
    pub spawned: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Spawn,
    Exit,
    Nmac,
    Los,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Spawn => "spawn",
            EventKind::Exit => "exit",
            EventKind::Nmac => "nmac",
            EventKind::Los => "los",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub kind: EventKind,
}

/// One simulated episode of the two-route airspace.
#[derive(Clone, Debug)]
pub struct Airspace {
    scenario: Scenario,
    traffic: TrafficState,
    schedule: Vec<VecDeque<f64>>,
    next_id: u32,
    detector: EventDetector,
    log: Option<Vec<EventRecord>>,
}

impl Airspace {
    /// Build an episode; spawn schedules are drawn from the episode seed.
    pub fn new(scenario: &Scenario, episode_seed: u64) -> Result<Self> {
        scenario.validate()?;
        let mut schedule = Vec::with_capacity(scenario.network.routes.len());
        for route in 0..scenario.network.routes.len() {
            let mut rng = stream(&[episode_seed, tags::TRAFFIC, route as u64]);
            let times = if scenario.arrival_rate > 0.0 {
                spawn_traffic(&mut rng, scenario.arrival_rate, scenario.min_headway, scenario.episode_length)?
            } else {
                Vec::new()
            };
            schedule.push(times.into());
        }
        let mut sim = Self {
            scenario: scenario.clone(),
            traffic: TrafficState::default(),
            schedule,
            next_id: 0,
            detector: EventDetector::new(scenario.reward.d_pz, scenario.reward.d_r),
            log: None,
        };
        sim.spawn_due();
        Ok(sim)
    }

    /// Start from an explicit traffic picture with no further arrivals.
    pub fn from_traffic(scenario: &Scenario, traffic: TrafficState) -> Result<Self> {
        scenario.validate()?;
        let next_id = traffic.aircraft.iter().map(|a| a.id + 1).max().unwrap_or(0);
        Ok(Self {
            scenario: scenario.clone(),
            schedule: vec![VecDeque::new(); scenario.network.routes.len()],
            next_id,
            detector: EventDetector::new(scenario.reward.d_pz, scenario.reward.d_r),
            log: None,
            traffic,
        })
    }

    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn traffic(&self) -> &TrafficState {
        &self.traffic
    }

    pub fn time(&self) -> f64 {
        self.traffic.time
    }

    pub fn events(&self) -> &[EventRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    /// Horizon reached, or every scheduled aircraft has come and gone.
    pub fn is_done(&self) -> bool {
        self.traffic.time >= self.scenario.episode_length
            || (self.traffic.aircraft.is_empty() && self.schedule.iter().all(|q| q.is_empty()))
    }

    /// True state matrix of one aircraft.
    pub fn state_of(&self, id: u32) -> Result<StateMatrix> {
        assemble_state(&self.traffic, id, self.scenario.reward.d_r)
    }

    fn spawn_due(&mut self) -> Vec<u32> {
        let mut spawned = Vec::new();
        for (route_idx, queue) in self.schedule.iter_mut().enumerate() {
            while queue.front().is_some_and(|t| *t <= self.traffic.time) {
                queue.pop_front();
                let route = &self.scenario.network.routes[route_idx];
                let [x, y] = route.entry();
                let id = self.next_id;
                self.next_id += 1;
                let state = AircraftState::new(x, y, route.entry_heading(), self.scenario.entry_speed, route.length, 0.0);
                self.traffic.aircraft.push(Aircraft { id, state, route: route_idx, next_waypoint: 1 });
                spawned.push(id);
                if let Some(log) = self.log.as_mut() {
                    log.push(EventRecord { time: self.traffic.time, id, x, y, v: state.speed, kind: EventKind::Spawn });
                }
            }
        }
        spawned
    }

    /// Advance every aircraft by one step. `actions[i]` commands
    /// `traffic().aircraft[i]`.
    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        let n = self.traffic.aircraft.len();
        if actions.len() != n {
            return Err(Error::Shape(format!("{} actions for {} aircraft", actions.len(), n)));
        }
        let sc = &self.scenario;
        let mut arrived = vec![false; n];
        let mut moved = self.traffic.clone();
        for (i, ac) in moved.aircraft.iter_mut().enumerate() {
            let u = actions[i].command(sc.reward.delta_v);
            let route = &sc.network.routes[ac.route];
            let cursor = RouteCursor { waypoints: &route.waypoints, next: ac.next_waypoint, capture_radius: sc.network.capture_radius };
            let res = step_aircraft(&ac.state, u, sc.wind, sc.dt, Some(cursor))?;
            ac.state = res.state;
            ac.next_waypoint = res.next_waypoint;
            arrived[i] = res.arrived;
        }
        moved.time += sc.dt;

        let mut agents = Vec::with_capacity(n);
        for (i, ac) in moved.aircraft.iter().enumerate() {
            let next_state = assemble_state(&moved, ac.id, sc.reward.d_r)?;
            let command = actions[i].command(sc.reward.delta_v);
            agents.push(AgentOutcome {
                id: ac.id,
                action: actions[i],
                command,
                reward: sc.reward.from_state(&next_state, command),
                next_state,
                done: arrived[i],
            });
        }
        let events = self.detector.update(&moved);
        if let Some(log) = self.log.as_mut() {
            let t = moved.time;
            let mut push = |id: u32, kind| {
                if let Some(a) = moved.get(id) {
                    log.push(EventRecord { time: t, id, x: a.state.x, y: a.state.y, v: a.state.speed, kind });
                }
            };
            for &(a, b) in &events.nmac_onsets {
                push(a, EventKind::Nmac);
                push(b, EventKind::Nmac);
            }
            for &(a, b) in &events.los_onsets {
                push(a, EventKind::Los);
                push(b, EventKind::Los);
            }
            for (i, ac) in moved.aircraft.iter().enumerate() {
                if arrived[i] {
                    push(ac.id, EventKind::Exit);
                }
            }
        }
        let mut keep = arrived.iter().map(|a| !a);
        moved.aircraft.retain(|_| keep.next().unwrap());
        self.traffic = moved;
        let spawned = self.spawn_due();
        Ok(StepOutcome { agents, events, spawned })
    }
}

/// Write an event log as CSV: `time,id,x,y,v,event`.
pub fn write_event_log<W: Write>(events: &[EventRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "id", "x", "y", "v", "event"])?;
    for e in events {
        w.write_record(&[
            format!("{}", e.time),
            e.id.to_string(),
            format!("{:.3}", e.x),
            format!("{:.3}", e.y),
            format!("{:.3}", e.v),
            e.kind.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hold_all(sim: &Airspace) -> Vec<Action> {
        vec![Action::Hold; sim.traffic().aircraft.len()]
    }

    #[test]
    fn spawned_aircraft_fly_their_route_and_exit() {
        let sc = Scenario::default();
        let mut sim = Airspace::new(&sc, 5).unwrap().with_event_log();
        let mut exits = 0;
        while !sim.is_done() {
            let out = sim.step(&hold_all(&sim)).unwrap();
            for a in &out.agents {
                assert!(a.next_state.rows[0][4] >= 0.0);
                exits += a.done as usize;
            }
        }
        assert!(exits > 20, "{exits}");
        let spawns = sim.events().iter().filter(|e| e.kind == EventKind::Spawn).count();
        assert!(spawns >= exits);
        let mut buf = Vec::new();
        write_event_log(sim.events(), &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("time,id,x,y,v,event\n"));
    }

    #[test]
    fn reward_matches_next_state() {
        let sc = Scenario::default();
        let mut sim = Airspace::new(&sc, 9).unwrap();
        for _ in 0..600 {
            let out = sim.step(&hold_all(&sim)).unwrap();
            for a in &out.agents {
                assert_eq!(a.reward, sc.reward.from_state(&a.next_state, a.command));
            }
        }
    }

    #[test]
    fn same_seed_same_episode() {
        let sc = Scenario::default();
        let run = |seed| {
            let mut sim = Airspace::new(&sc, seed).unwrap();
            let mut trace = Vec::new();
            while !sim.is_done() {
                let acts: Vec<Action> = sim.traffic().aircraft.iter().map(|a| Action::from_index(a.id as usize % 3).unwrap()).collect();
                let out = sim.step(&acts).unwrap();
                trace.extend(out.agents.iter().map(|a| a.reward.to_bits()));
            }
            trace
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn empty_scenario_finishes_immediately() {
        let sc = Scenario { arrival_rate: 0.0, ..Scenario::default() };
        let sim = Airspace::new(&sc, 1).unwrap();
        assert!(sim.is_done());
    }

    #[test]
    fn wrong_action_count() {
        let sc = Scenario::default();
        let mut sim = Airspace::new(&sc, 1).unwrap();
        assert!(sim.step(&[Action::Hold; 3]).is_err() || sim.traffic().aircraft.len() == 3);
    }
}
