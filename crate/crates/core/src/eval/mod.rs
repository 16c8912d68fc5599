//! Paired evaluation sweeps over corruption rates and the randomized
//! verification suites.
//!
//! Every policy at every rate flies the same episode seeds, and corruption
//! draws are keyed by (seed, episode, aircraft): the k-th observation of an
//! aircraft uses the same uniform for every policy and rate, so corrupted
//! steps are nested as the rate grows. Sampled actions are keyed the same
//! way, so both policies face common random numbers.

mod verify;

pub use verify::{run_suites, SuiteOptions, SuiteSummary, VerifyRow};

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::fo_perturbation;
use crate::error::{Error, Result};
use crate::net::Network;
use crate::observation::{in_box, sample_observation_with, CorruptionBounds, StateMatrix};
use crate::rng::{derive_seed, stream, tags, SimRng};
use crate::sim::{Airspace, Scenario};

/// `[eval]` section of the run configuration.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub rates: Vec<f64>,
    pub episodes: usize,
    pub actions: ActionRule,
}

/// How an evaluated policy turns its distribution into an action.
#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ActionRule {
    /// Draw from the policy, as in training.
    #[default]
    Sample,
    /// Most probable action.
    Mode,
}

/// 0, 0.05, ..., 1.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { rates: default_grid(), episodes: 100, actions: ActionRule::Sample }
    }
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() || self.rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config("eval.rates must be a non-empty list of rates in [0, 1]".into()));
        }
        if self.episodes == 0 {
            return Err(Error::Config("eval.episodes must be at least 1".into()));
        }
        Ok(())
    }
}

/// A policy and the frozen critic whose gradient drives its adversary.
#[derive(Clone, Copy, Debug)]
pub struct PolicyUnderTest<'a> {
    pub tag: &'a str,
    pub policy: &'a Network,
    pub teacher: &'a Network,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub rate: f64,
    pub policy: String,
    pub episode: usize,
    pub nmac: usize,
    pub los: usize,
    /// `inf` when no two aircraft ever coexisted.
    pub min_separation: f64,
    pub agent_steps: usize,
    pub observations: usize,
    pub corrupted: usize,
    pub box_violations: usize,
}

/// Aggregate over the episodes of one (rate, policy) cell. Minimum
/// separation statistics skip episodes without any aircraft pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRecord {
    pub rate: f64,
    pub policy: String,
    pub episodes: usize,
    pub nmac_mean: f64,
    pub nmac_std: f64,
    pub min_sep_mean: f64,
    pub min_sep_std: f64,
    pub min_sep_episodes: usize,
    pub observations: usize,
    pub corrupted: usize,
    pub box_violations: usize,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl EvalRecord {
    pub fn aggregate(rate: f64, policy: &str, episodes: &[EpisodeRecord]) -> Self {
        let nmac: Vec<f64> = episodes.iter().map(|e| e.nmac as f64).collect();
        let sep: Vec<f64> = episodes.iter().map(|e| e.min_separation).filter(|s| s.is_finite()).collect();
        let (nmac_mean, nmac_std) = mean_std(&nmac);
        let (min_sep_mean, min_sep_std) = mean_std(&sep);
        Self {
            rate,
            policy: policy.into(),
            episodes: episodes.len(),
            nmac_mean,
            nmac_std,
            min_sep_mean,
            min_sep_std,
            min_sep_episodes: sep.len(),
            observations: episodes.iter().map(|e| e.observations).sum(),
            corrupted: episodes.iter().map(|e| e.corrupted).sum(),
            box_violations: episodes.iter().map(|e| e.box_violations).sum(),
        }
    }
}

pub fn eval_episode_seed(seed: u64, episode: usize) -> u64 {
    derive_seed(&[seed, tags::EVAL, episode as u64])
}

struct Observer<'a> {
    rate: f64,
    kappa: &'a CorruptionBounds,
    teacher: &'a Network,
    tape: crate::net::Tape,
    streams: HashMap<u32, SimRng>,
    seed: u64,
    episode: usize,
    observations: usize,
    corrupted: usize,
    violations: usize,
}

impl Observer<'_> {
    fn observe(&mut self, id: u32, clean: StateMatrix) -> Result<StateMatrix> {
        let (seed, episode) = (self.seed, self.episode);
        let rng = self
            .streams
            .entry(id)
            .or_insert_with(|| stream(&[seed, tags::CORRUPTION, episode as u64, id as u64]));
        let (teacher, tape, kappa) = (self.teacher, &mut self.tape, self.kappa);
        let s = sample_observation_with(&clean, self.rate, kappa, rng, |s| {
            let (_, g) = teacher.input_gradient_with(s, tape)?;
            Ok(fo_perturbation(s, &g, kappa)?.xi)
        })?;
        self.observations += 1;
        if s.corrupted {
            self.corrupted += 1;
            if in_box(&s.observed, &clean, kappa).is_err() {
                self.violations += 1;
            }
        }
        Ok(s.observed)
    }
}

/// Fly one evaluation episode.
pub fn run_episode(
    scenario: &Scenario,
    kappa: &CorruptionBounds,
    put: &PolicyUnderTest,
    rate: f64,
    episode: usize,
    seed: u64,
    actions: ActionRule,
) -> Result<EpisodeRecord> {
    let mut env = Airspace::new(scenario, eval_episode_seed(seed, episode))?;
    let mut obs = Observer {
        rate,
        kappa,
        teacher: put.teacher,
        tape: put.teacher.tape(),
        streams: HashMap::new(),
        seed,
        episode,
        observations: 0,
        corrupted: 0,
        violations: 0,
    };
    let mut tape = put.policy.tape();
    let mut policy_streams: HashMap<u32, SimRng> = HashMap::new();
    let mut pending: HashMap<u32, StateMatrix> = HashMap::new();
    let (mut nmac, mut los, mut steps) = (0, 0, 0);
    let mut min_sep = f64::INFINITY;
    while !env.is_done() {
        let ids = env.traffic().ids();
        let mut chosen = Vec::with_capacity(ids.len());
        for &id in &ids {
            let o = match pending.remove(&id) {
                Some(o) => o,
                None => obs.observe(id, env.state_of(id)?)?,
            };
            let dist = put.policy.forward(&o, &mut tape)?.dist();
            chosen.push(match actions {
                ActionRule::Mode => dist.mode(),
                ActionRule::Sample => {
                    let rng = policy_streams
                        .entry(id)
                        .or_insert_with(|| stream(&[seed, tags::POLICY, episode as u64, id as u64]));
                    dist.sample(rng)
                }
            });
        }
        let out = env.step(&chosen)?;
        steps += out.agents.len();
        for ag in &out.agents {
            if !ag.done {
                pending.insert(ag.id, obs.observe(ag.id, ag.next_state)?);
            }
        }
        nmac += out.events.nmac_onsets.len();
        los += out.events.los_onsets.len();
        if let Some(d) = out.events.min_separation {
            min_sep = min_sep.min(d);
        }
    }
    Ok(EpisodeRecord {
        rate,
        policy: put.tag.into(),
        episode,
        nmac,
        los,
        min_separation: min_sep,
        agent_steps: steps,
        observations: obs.observations,
        corrupted: obs.corrupted,
        box_violations: obs.violations,
    })
}

/// Evaluate every policy at every rate on the same episodes.
pub fn evaluate(
    scenario: &Scenario,
    kappa: &CorruptionBounds,
    policies: &[PolicyUnderTest],
    settings: &EvalSettings,
    seed: u64,
) -> Result<(Vec<EvalRecord>, Vec<EpisodeRecord>)> {
    settings.validate()?;
    let (rates, episodes) = (&settings.rates, settings.episodes);
    let mut cells = Vec::new();
    let mut all = Vec::new();
    for &rate in rates {
        for put in policies {
            let eps = (0..episodes).map(|e| run_episode(scenario, kappa, put, rate, e, seed, settings.actions)).collect::<Result<Vec<_>>>()?;
            let rec = EvalRecord::aggregate(rate, put.tag, &eps);
            log::info!(
                "R {:.2} {}: NMAC {:.2} +/- {:.2}, min sep {:.1} m",
                rate, put.tag, rec.nmac_mean, rec.nmac_std, rec.min_sep_mean
            );
            cells.push(rec);
            all.extend(eps);
        }
    }
    Ok((cells, all))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
