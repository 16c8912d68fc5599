use super::rollout::Transition;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::net::{log_softmax, Network, Tape, NUM_ACTIONS, PROB_FLOOR};

/// A stored transition with its advantage and return target.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a> {
    pub transition: &'a Transition,
    pub advantage: f64,
    pub ret: f64,
}

/// Loss components for one sample or a batch mean. `total` is
/// `clip + c_V value - c_H entropy + lambda_inv inv + lambda_anchor anchor`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub clip: f64,
    pub value: f64,
    pub entropy: f64,
    pub inv: f64,
    pub anchor: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn add(&mut self, o: &LossTerms) {
        self.clip += o.clip;
        self.value += o.value;
        self.entropy += o.entropy;
        self.inv += o.inv;
        self.anchor += o.anchor;
        self.total += o.total;
    }

    pub fn scale(&mut self, s: f64) {
        for v in [&mut self.clip, &mut self.value, &mut self.entropy, &mut self.inv, &mut self.anchor, &mut self.total] {
            *v *= s;
        }
    }

    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            (self.clip, "clip loss"),
            (self.value, "value loss"),
            (self.entropy, "entropy"),
            (self.inv, "invariance loss"),
            (self.anchor, "anchor loss"),
            (self.total, "total loss"),
        ]
        .into_iter()
        .find(|(v, _)| !v.is_finite())
        .map(|(_, n)| n)
    }
}

/// Scratch tapes for the observation, clean-state and adversarial passes.
pub struct LossTapes {
    obs: Tape,
    clean: Tape,
    adv: Tape,
}

impl LossTapes {
    pub fn new(net: &Network) -> Self {
        Self { obs: net.tape(), clean: net.tape(), adv: net.tape() }
    }
}

fn exp3(l: &[f64; NUM_ACTIONS]) -> [f64; NUM_ACTIONS] {
    [l[0].exp(), l[1].exp(), l[2].exp()]
}

/// Loss of one sample; when `grads` is given the parameter gradient of
/// `total` is added into it.
pub fn sample_loss(
    net: &Network,
    tapes: &mut LossTapes,
    s: &Sample,
    cfg: &TrainConfig,
    mut grads: Option<&mut [f64]>,
) -> Result<LossTerms> {
    let t = s.transition;
    let out = net.forward(&t.obs, &mut tapes.obs)?;
    let ls = log_softmax(&out.logits);
    let p = exp3(&ls);
    let a = t.action.index();
    let ratio = (ls[a] - t.logp_old).exp();
    let adv = s.advantage;
    let unclipped = ratio * adv;
    let clipped_ratio = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
    debug_assert!((clipped_ratio - 1.0).abs() <= cfg.clip);
    let clipped = clipped_ratio * adv;
    let clip = -unclipped.min(clipped);
    let dlogp = if unclipped <= clipped { -adv * ratio } else { 0.0 };
    let entropy = -(0..NUM_ACTIONS).map(|k| p[k] * ls[k]).sum::<f64>();
    let value = (out.value - s.ret).powi(2);

    let mut terms = LossTerms { clip, value, entropy, ..Default::default() };
    if let Some(g) = grads.as_deref_mut() {
        let mut dz = [0.0; NUM_ACTIONS];
        for k in 0..NUM_ACTIONS {
            let onehot = if k == a { 1.0 } else { 0.0 };
            dz[k] = dlogp * (onehot - p[k]) + cfg.entropy_coef * p[k] * (ls[k] + entropy);
        }
        let dv = cfg.value_coef * 2.0 * (out.value - s.ret);
        net.backward(&mut tapes.obs, &dz, dv, Some(g));
    }

    let use_inv = cfg.lambda_inv > 0.0;
    let use_anchor = cfg.lambda_anchor > 0.0 && t.teacher_probs.is_some();
    if use_inv || use_anchor {
        let zs = net.forward(&t.clean, &mut tapes.clean)?.logits;
        let lp = log_softmax(&zs);
        let ps = exp3(&lp);
        let mut dzs = [0.0; NUM_ACTIONS];
        if use_inv {
            let zx = net.forward(&t.xi, &mut tapes.adv)?.logits;
            let lq = log_softmax(&zx);
            let q = exp3(&lq);
            let kl = (0..NUM_ACTIONS).map(|k| ps[k] * (lp[k] - lq[k])).sum::<f64>();
            terms.inv = kl;
            if let Some(g) = grads.as_deref_mut() {
                let mut dzx = [0.0; NUM_ACTIONS];
                for k in 0..NUM_ACTIONS {
                    dzs[k] += cfg.lambda_inv * ps[k] * (lp[k] - lq[k] - kl);
                    dzx[k] = cfg.lambda_inv * (q[k] - ps[k]);
                }
                net.backward(&mut tapes.adv, &dzx, 0.0, Some(g));
            }
        }
        if use_anchor {
            let pbar = t.teacher_probs.expect("checked above");
            terms.anchor = (0..NUM_ACTIONS)
                .filter(|&k| pbar[k] > 0.0)
                .map(|k| pbar[k] * (pbar[k].max(PROB_FLOOR).ln() - lp[k]))
                .sum::<f64>();
            for k in 0..NUM_ACTIONS {
                dzs[k] += cfg.lambda_anchor * (ps[k] - pbar[k]);
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            net.backward(&mut tapes.clean, &dzs, 0.0, Some(g));
        }
    }
    terms.total = terms.clip + cfg.value_coef * terms.value - cfg.entropy_coef * terms.entropy
        + cfg.lambda_inv * terms.inv
        + cfg.lambda_anchor * terms.anchor;
    Ok(terms)
}

/// Batch-mean loss terms without gradients.
pub fn ppo_losses(net: &Network, samples: &[Sample], cfg: &TrainConfig) -> Result<LossTerms> {
    if samples.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let mut tapes = LossTapes::new(net);
    let mut acc = LossTerms::default();
    for s in samples {
        acc.add(&sample_loss(net, &mut tapes, s, cfg, None)?);
    }
    acc.scale(1.0 / samples.len() as f64);
    Ok(acc)
}
