use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::gae::{compute_gae, normalize_advantages};
use super::losses::{sample_loss, LossTapes, LossTerms, Sample};
use super::optim::Adam;
use super::rollout::{episode_seed, Batch, Collector};
use super::{RobustInit, TrainConfig};
use crate::adversary::fo_perturbation;
use crate::bounds::probe_budget;
use crate::error::{Error, Result};
use crate::net::{save_checkpoint, Featurizer, NetConfig, Network};
use crate::observation::{in_box, CorruptionBounds, StateMatrix};
use crate::rng::{stream, tags, SimRng};
use crate::sim::{Airspace, Scenario};

/// Frozen nominal policy and critic.
#[derive(Clone, Debug)]
pub struct TeacherBundle {
    net: Network,
    digest: String,
}

impl TeacherBundle {
    pub fn freeze(net: Network) -> Self {
        let digest = net.digest();
        Self { net, digest }
    }

    pub fn net(&self) -> &Network {
        &self.net
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn verify(&self) -> bool {
        self.net.digest() == self.digest
    }
}

/// Uniform draws from the curriculum rates on a dedicated stream.
pub struct CurriculumSampler {
    rates: Vec<f64>,
    rng: SimRng,
}

impl CurriculumSampler {
    pub fn new(rates: &[f64], seed: u64) -> Self {
        Self { rates: rates.to_vec(), rng: stream(&[seed, tags::CURRICULUM]) }
    }

    pub fn next_index(&mut self) -> usize {
        self.rng.random_range(0..self.rates.len())
    }

    pub fn next_rate(&mut self) -> f64 {
        let i = self.next_index();
        self.rates[i]
    }
}

/// Environment, model shape and bookkeeping shared by both phases.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: u64,
    pub scenario: Scenario,
    pub kappa: CorruptionBounds,
    pub net: NetConfig,
    pub features: Featurizer,
    /// Where to write the last finite parameters if training diverges.
    pub divergence_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            scenario: Scenario::default(),
            kappa: CorruptionBounds::default(),
            net: NetConfig::default(),
            features: Featurizer::default(),
            divergence_dir: None,
        }
    }
}

/// One row of the training curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationLog {
    pub phase: &'static str,
    pub iteration: usize,
    pub steps: usize,
    pub rate: f64,
    /// Mean undiscounted return of flights that ended this iteration.
    pub mean_return: Option<f64>,
    pub episodes_completed: usize,
    pub corrupted_fraction: f64,
    pub loss_clip: f64,
    pub loss_value: f64,
    pub entropy: f64,
    pub loss_inv: f64,
    pub loss_anchor: f64,
    pub loss_total: f64,
    pub budget: f64,
    pub digest: String,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub net: Network,
    pub log: Vec<IterationLog>,
}

enum Phase<'a> {
    Nominal,
    Robust(&'a TeacherBundle),
}

impl Phase<'_> {
    fn name(&self) -> &'static str {
        match self {
            Phase::Nominal => "nominal",
            Phase::Robust(_) => "robust",
        }
    }
}

/// Phase 1: PPO on clean observations.
pub fn pretrain_nominal(opts: &RunOptions, cfg: &TrainConfig) -> Result<TrainOutput> {
    let init = Network::new(opts.net, opts.features, &mut stream(&[opts.seed, tags::INIT]))?;
    let cfg = TrainConfig { lambda_inv: 0.0, lambda_anchor: 0.0, ..cfg.clone() };
    train_phase(opts, &cfg, Phase::Nominal, init)
}

/// Phase 2: PPO on R-contaminated observations with the teacher's
/// first-order adversary and the invariance and anchor regularisers.
pub fn robust_train(opts: &RunOptions, cfg: &TrainConfig, teacher: &TeacherBundle) -> Result<TrainOutput> {
    let init = match cfg.robust_init {
        RobustInit::Teacher => teacher.net().clone(),
        RobustInit::Fresh => Network::new(opts.net, opts.features, &mut stream(&[opts.seed, tags::INIT]))?,
    };
    let out = train_phase(opts, cfg, Phase::Robust(teacher), init)?;
    if !teacher.verify() {
        return Err(Error::Audit("teacher parameters changed during robust training".into()));
    }
    Ok(out)
}

fn audit(batch: &Batch, scenario: &Scenario, kappa: &CorruptionBounds) -> Result<()> {
    for (i, t) in batch.transitions.iter().enumerate() {
        let r = scenario.reward.from_state(&t.next_true, t.command);
        if r.to_bits() != t.reward.to_bits() {
            return Err(Error::Audit(format!("transition {i}: stored reward {} but true next state gives {r}", t.reward)));
        }
        if in_box(&t.xi, &t.clean, kappa).is_err() || (t.corrupted && in_box(&t.obs, &t.clean, kappa).is_err()) {
            return Err(Error::Audit(format!("transition {i}: adversarial state outside the uncertainty box")));
        }
    }
    Ok(())
}

fn advantages(batch: &Batch, cfg: &TrainConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = batch.transitions.len();
    let (mut adv, mut ret) = (vec![0.0; n], vec![0.0; n]);
    for seg in &batch.segments {
        let ts: Vec<_> = seg.indices.iter().map(|&i| &batch.transitions[i]).collect();
        let rewards: Vec<f64> = ts.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = ts.iter().map(|t| t.value_old).collect();
        let dones: Vec<bool> = ts.iter().map(|t| t.done).collect();
        let (a, r) = compute_gae(&rewards, &values, &dones, seg.bootstrap, cfg.gamma, cfg.gae_lambda)?;
        for (k, &i) in seg.indices.iter().enumerate() {
            adv[i] = a[k];
            ret[i] = r[k];
        }
    }
    normalize_advantages(&mut adv);
    Ok((adv, ret))
}

fn dump_divergence(opts: &RunOptions, phase: &Phase, last_good: &Network) {
    if let Some(dir) = &opts.divergence_dir {
        let path = dir.join(format!("{}_diverged.ckpt", phase.name()));
        match save_checkpoint(last_good, &path) {
            Ok(()) => warn!("saved last finite parameters to {}", path.display()),
            Err(e) => warn!("could not save divergence checkpoint: {e}"),
        }
    }
}

fn train_phase(opts: &RunOptions, cfg: &TrainConfig, phase: Phase, mut net: Network) -> Result<TrainOutput> {
    cfg.validate()?;
    opts.scenario.validate()?;
    let teacher = match phase {
        Phase::Nominal => None,
        Phase::Robust(t) => Some(t.net()),
    };
    let mut collector = Collector::new(&opts.scenario, opts.kappa, opts.seed)?;
    let mut curriculum = CurriculumSampler::new(&cfg.curriculum, opts.seed);
    let mut shuffle_rng = stream(&[opts.seed, tags::SHUFFLE]);
    let mut adam = Adam::new(net.num_params(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut tapes = LossTapes::new(&net);
    let mut grads = vec![0.0; net.num_params()];
    let mut log = Vec::new();
    let mut steps = 0;
    let mut iteration = 0;

    while steps < cfg.total_steps {
        let rate = match (&phase, cfg.fixed_rate) {
            (Phase::Nominal, _) => 0.0,
            (Phase::Robust(_), Some(r)) => r,
            (Phase::Robust(_), None) => curriculum.next_rate(),
        };
        let diverged = |e: Error, net: &Network| match e {
            Error::NonFinite(what) => {
                dump_divergence(opts, &phase, net);
                Error::Divergence { iteration, what }
            }
            e => e,
        };
        let batch = collector.collect(&net, teacher, rate, cfg.batch_size).map_err(|e| diverged(e, &net))?;
        audit(&batch, &opts.scenario, &opts.kappa)?;
        let (adv, ret) = advantages(&batch, cfg)?;
        steps += batch.transitions.len();

        let last_good = net.clone();
        let mut order: Vec<usize> = (0..batch.transitions.len()).collect();
        let mut mean = LossTerms::default();
        let mut count = 0usize;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut shuffle_rng);
            for chunk in order.chunks(cfg.minibatch_size) {
                grads.iter_mut().for_each(|g| *g = 0.0);
                for &i in chunk {
                    let s = Sample { transition: &batch.transitions[i], advantage: adv[i], ret: ret[i] };
                    let terms =
                        sample_loss(&net, &mut tapes, &s, cfg, Some(&mut grads)).map_err(|e| diverged(e, &last_good))?;
                    if let Some(what) = terms.first_non_finite() {
                        dump_divergence(opts, &phase, &last_good);
                        return Err(Error::Divergence { iteration, what });
                    }
                    mean.add(&terms);
                    count += 1;
                }
                let inv = 1.0 / chunk.len() as f64;
                grads.iter_mut().for_each(|g| *g *= inv);
                if grads.iter().any(|g| !g.is_finite()) {
                    dump_divergence(opts, &phase, &last_good);
                    return Err(Error::Divergence { iteration, what: "gradient" });
                }
                Adam::clip_norm(&mut grads, cfg.max_grad_norm);
                adam.step(net.params_mut(), &grads);
            }
        }
        if net.params().iter().any(|p| !p.is_finite()) {
            dump_divergence(opts, &phase, &last_good);
            return Err(Error::Divergence { iteration, what: "parameters" });
        }
        mean.scale(1.0 / count.max(1) as f64);

        let budget = match phase {
            Phase::Nominal => 0.0,
            Phase::Robust(_) => {
                let pairs: Vec<_> = batch.transitions.iter().map(|t| (t.clean, t.xi)).collect();
                probe_budget(&net, &pairs)?
            }
        };
        let n = batch.transitions.len() as f64;
        let completed = &batch.completed_returns;
        let entry = IterationLog {
            phase: phase.name(),
            iteration,
            steps,
            rate,
            mean_return: (!completed.is_empty()).then(|| completed.iter().sum::<f64>() / completed.len() as f64),
            episodes_completed: completed.len(),
            corrupted_fraction: batch.transitions.iter().filter(|t| t.corrupted).count() as f64 / n,
            loss_clip: mean.clip,
            loss_value: mean.value,
            entropy: mean.entropy,
            loss_inv: mean.inv,
            loss_anchor: mean.anchor,
            loss_total: mean.total,
            budget,
            digest: net.digest(),
        };
        info!(
            "{} iter {} steps {} R {:.2} return {:?} total {:.4} entropy {:.3} B {:.5}",
            entry.phase, iteration, steps, rate, entry.mean_return, entry.loss_total, entry.entropy, budget
        );
        log.push(entry);
        iteration += 1;
    }
    Ok(TrainOutput { net, log })
}

/// Mean `KL(pi(.|S) || pi(.|Xi))` over `(S, Xi)` pairs.
pub fn kl_budget_probe(net: &Network, pairs: &[(StateMatrix, StateMatrix)]) -> Result<f64> {
    probe_budget(net, pairs)
}

/// `(S, Xi)` pairs from held-out episodes flown by the teacher's greedy
/// policy, with `Xi` from the teacher critic's first-order adversary. Every
/// `stride`-th agent step is kept.
pub fn collect_probe_pairs(
    scenario: &Scenario,
    teacher: &TeacherBundle,
    kappa: &CorruptionBounds,
    seed: u64,
    count: usize,
    stride: usize,
) -> Result<Vec<(StateMatrix, StateMatrix)>> {
    let net = teacher.net();
    let mut tape = net.tape();
    let mut pairs = Vec::with_capacity(count);
    let mut k = 0usize;
    let mut episode = 0u64;
    while pairs.len() < count {
        let mut env = Airspace::new(scenario, episode_seed(seed, episode))?;
        while !env.is_done() && pairs.len() < count {
            let mut actions = Vec::new();
            for id in env.traffic().ids() {
                let s = env.state_of(id)?;
                let (_, grad) = net.input_gradient_with(&s, &mut tape)?;
                actions.push(tape.output().dist().mode());
                if k % stride.max(1) == 0 && pairs.len() < count {
                    pairs.push((s, fo_perturbation(&s, &grad, kappa)?.xi));
                }
                k += 1;
            }
            env.step(&actions)?;
        }
        episode += 1;
        if episode > 10_000 {
            return Err(Error::Empty("probe episodes produced no aircraft"));
        }
    }
    Ok(pairs)
}

pub fn write_training_log(path: &Path, log: &[IterationLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
