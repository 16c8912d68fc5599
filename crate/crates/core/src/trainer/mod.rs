//! Nominal PPO pretraining and robust PPO under R-contaminated observations.
//!
//! Both phases share one code path: the nominal phase is the robust phase
//! with no teacher, a zero corruption rate and no regularisers.

mod gae;
mod losses;
mod optim;
mod rollout;
mod run;

pub use gae::{compute_gae, normalize_advantages};
pub use losses::{ppo_losses, sample_loss, LossTapes, LossTerms, Sample};
pub use optim::Adam;
pub use rollout::{Collector, Transition};
pub use run::{
    collect_probe_pairs, kl_budget_probe, pretrain_nominal, robust_train, write_training_log, CurriculumSampler,
    IterationLog, RunOptions, TeacherBundle, TrainOutput,
};

use serde::Deserialize;

use crate::error::{Error, Result};

/// How the robust phase initialises its trainable parameters.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum RobustInit {
    /// Copy of the frozen teacher.
    Teacher,
    /// Fresh draw from the init stream, identical to the nominal phase.
    Fresh,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub lr: f64,
    pub epochs: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lambda_inv: f64,
    pub lambda_anchor: f64,
    pub curriculum: Vec<f64>,
    /// Overrides the curriculum with a constant rate.
    pub fixed_rate: Option<f64>,
    /// Pooled transitions per phase.
    pub total_steps: usize,
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub max_grad_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub robust_init: RobustInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            lr: 2.5e-4,
            epochs: 8,
            value_coef: 0.5,
            entropy_coef: 0.1,
            lambda_inv: 0.01,
            lambda_anchor: 0.01,
            curriculum: vec![0.0, 0.05, 0.15, 0.25, 0.35, 0.5],
            fixed_rate: None,
            total_steps: 200_000,
            batch_size: 4096,
            minibatch_size: 256,
            max_grad_norm: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            robust_init: RobustInit::Fresh,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("training.gamma must lie in [0, 1) and training.gae_lambda in [0, 1]");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("training.clip must lie in (0, 1)");
        }
        let coefs = [self.lr, self.value_coef, self.entropy_coef, self.lambda_inv, self.lambda_anchor, self.max_grad_norm];
        if coefs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || self.lr == 0.0 {
            return bad("training coefficients must be finite and non-negative, lr positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.minibatch_size == 0 || self.minibatch_size > self.batch_size {
            return bad("training.epochs, batch_size and minibatch_size must be positive with minibatch_size <= batch_size");
        }
        if self.curriculum.is_empty() || self.curriculum.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("training.curriculum must be a non-empty list of rates in [0, 1]");
        }
        if self.fixed_rate.is_some_and(|r| !(0.0..=1.0).contains(&r)) {
            return bad("training.fixed_rate must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("adam parameters out of range");
        }
        Ok(())
    }
}
