use std::collections::{BTreeMap, HashMap};

use crate::adversary::fo_perturbation;
use crate::error::Result;
use crate::net::{log_softmax, Network, Tape, NUM_ACTIONS};
use crate::observation::{sample_observation, CorruptionBounds, StateMatrix};
use crate::rng::{derive_seed, stream, tags, SimRng};
use crate::sim::{Action, Airspace, Scenario};

/// One pooled agent step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub id: u32,
    /// What the policy saw, possibly corrupted.
    pub obs: StateMatrix,
    /// True state at decision time.
    pub clean: StateMatrix,
    /// First-order adversarial version of `clean` under the teacher critic.
    pub xi: StateMatrix,
    /// Teacher action probabilities on `clean`.
    pub teacher_probs: Option<[f64; NUM_ACTIONS]>,
    pub action: Action,
    pub logp_old: f64,
    pub value_old: f64,
    pub reward: f64,
    pub command: f64,
    pub next_true: StateMatrix,
    pub corrupted: bool,
    pub done: bool,
}

/// Consecutive transitions of one aircraft, in buffer order.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub indices: Vec<usize>,
    /// Value of the observation following the last step (unused if terminal).
    pub bootstrap: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub transitions: Vec<Transition>,
    pub segments: Vec<Segment>,
    /// Undiscounted returns of aircraft whose flights ended in this batch.
    pub completed_returns: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    obs: StateMatrix,
    clean: StateMatrix,
    xi: StateMatrix,
    corrupted: bool,
    teacher_probs: Option<[f64; NUM_ACTIONS]>,
}

/// Persistent multi-agent experience source. Episodes roll over as needed so
/// consecutive batches continue the same flights.
pub struct Collector {
    scenario: Scenario,
    kappa: CorruptionBounds,
    seed: u64,
    episode: u64,
    env: Airspace,
    pending: HashMap<u32, Pending>,
    open: BTreeMap<u32, Vec<usize>>,
    returns: HashMap<u32, f64>,
    policy_rng: SimRng,
    corruption_rng: SimRng,
}

pub fn episode_seed(seed: u64, episode: u64) -> u64 {
    derive_seed(&[seed, tags::TRAFFIC, episode])
}

impl Collector {
    pub fn new(scenario: &Scenario, kappa: CorruptionBounds, seed: u64) -> Result<Self> {
        Ok(Self {
            env: Airspace::new(scenario, episode_seed(seed, 0))?,
            scenario: scenario.clone(),
            kappa,
            seed,
            episode: 0,
            pending: HashMap::new(),
            open: BTreeMap::new(),
            returns: HashMap::new(),
            policy_rng: stream(&[seed, tags::POLICY]),
            corruption_rng: stream(&[seed, tags::CORRUPTION]),
        })
    }

    pub fn episodes_started(&self) -> u64 {
        self.episode + 1
    }

    fn observe(&mut self, clean: StateMatrix, teacher: Option<(&Network, &mut Tape)>, rate: f64) -> Result<Pending> {
        match teacher {
            None => Ok(Pending { obs: clean, clean, xi: clean, corrupted: false, teacher_probs: None }),
            Some((t, tape)) => {
                let (_, grad) = t.input_gradient_with(&clean, tape)?;
                let probs = tape.output().dist().probs;
                let xi = fo_perturbation(&clean, &grad, &self.kappa)?.xi;
                let s = sample_observation(&clean, rate, &xi, &self.kappa, &mut self.corruption_rng)?;
                Ok(Pending { obs: s.observed, clean, xi, corrupted: s.corrupted, teacher_probs: Some(probs) })
            }
        }
    }

    fn close_open(&mut self, batch: &mut Batch, net: &Network, tape: &mut Tape) -> Result<()> {
        for (id, indices) in std::mem::take(&mut self.open) {
            if indices.is_empty() {
                continue;
            }
            let bootstrap = match self.pending.get(&id) {
                Some(p) => net.forward(&p.obs, tape)?.value,
                None => 0.0,
            };
            batch.segments.push(Segment { indices, bootstrap });
        }
        Ok(())
    }

    /// Gather at least `batch_size` transitions with `net` sampling actions.
    pub fn collect(
        &mut self,
        net: &Network,
        teacher: Option<&Network>,
        rate: f64,
        batch_size: usize,
    ) -> Result<Batch> {
        let mut batch = Batch::default();
        let mut tape = net.tape();
        let mut teacher_tape = teacher.map(|t| t.tape());
        while batch.transitions.len() < batch_size {
            if self.env.is_done() {
                self.close_open(&mut batch, net, &mut tape)?;
                batch.completed_returns.extend(self.env.traffic().ids().iter().filter_map(|id| self.returns.get(id)));
                self.pending.clear();
                self.returns.clear();
                self.episode += 1;
                self.env = Airspace::new(&self.scenario, episode_seed(self.seed, self.episode))?;
            }
            let ids = self.env.traffic().ids();
            let mut actions = Vec::with_capacity(ids.len());
            let mut decisions = Vec::with_capacity(ids.len());
            for &id in &ids {
                if !self.pending.contains_key(&id) {
                    let clean = self.env.state_of(id)?;
                    let p = self.observe(clean, teacher.zip(teacher_tape.as_mut()), rate)?;
                    self.pending.insert(id, p);
                }
                let p = self.pending[&id];
                let out = net.forward(&p.obs, &mut tape)?;
                let dist = out.dist();
                let action = dist.sample(&mut self.policy_rng);
                actions.push(action);
                decisions.push((p, log_softmax(&out.logits)[action.index()], out.value));
            }
            let step = self.env.step(&actions)?;
            for (ag, (p, logp, value)) in step.agents.iter().zip(decisions) {
                let idx = batch.transitions.len();
                batch.transitions.push(Transition {
                    id: ag.id,
                    obs: p.obs,
                    clean: p.clean,
                    xi: p.xi,
                    teacher_probs: p.teacher_probs,
                    action: ag.action,
                    logp_old: logp,
                    value_old: value,
                    reward: ag.reward,
                    command: ag.command,
                    next_true: ag.next_state,
                    corrupted: p.corrupted,
                    done: ag.done,
                });
                self.open.entry(ag.id).or_default().push(idx);
                *self.returns.entry(ag.id).or_insert(0.0) += ag.reward;
                if ag.done {
                    self.pending.remove(&ag.id);
                    let indices = self.open.remove(&ag.id).unwrap_or_default();
                    batch.segments.push(Segment { indices, bootstrap: 0.0 });
                    batch.completed_returns.push(self.returns.remove(&ag.id).unwrap_or(0.0));
                } else {
                    let next = self.observe(ag.next_state, teacher.zip(teacher_tape.as_mut()), rate)?;
                    self.pending.insert(ag.id, next);
                }
            }
        }
        self.close_open(&mut batch, net, &mut tape)?;
        Ok(batch)
    }
}
