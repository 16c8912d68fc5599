//! Categorical distribution over the three speed actions.

use rand::Rng;

use super::model::NUM_ACTIONS;
use crate::sim::Action;

/// Floor applied inside logarithms so that zero-probability actions never
/// produce `ln 0`.
pub const PROB_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionDistribution {
    pub probs: [f64; NUM_ACTIONS],
}

pub fn log_softmax(logits: &[f64; NUM_ACTIONS]) -> [f64; NUM_ACTIONS] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.map(|z| z - lse)
}

/// `KL(softmax(p) || softmax(q))` computed in log space.
pub fn kl_from_logits(p: &[f64; NUM_ACTIONS], q: &[f64; NUM_ACTIONS]) -> f64 {
    let (lp, lq) = (log_softmax(p), log_softmax(q));
    lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum()
}

impl ActionDistribution {
    pub fn new(probs: [f64; NUM_ACTIONS]) -> Option<Self> {
        let sum: f64 = probs.iter().sum();
        (probs.iter().all(|p| p.is_finite() && *p >= 0.0) && (sum - 1.0).abs() <= 1e-9).then_some(Self { probs })
    }

    pub fn uniform() -> Self {
        Self { probs: [1.0 / NUM_ACTIONS as f64; NUM_ACTIONS] }
    }

    pub fn from_logits(logits: &[f64; NUM_ACTIONS]) -> Self {
        Self { probs: log_softmax(logits).map(f64::exp) }
    }

    pub fn prob(&self, a: Action) -> f64 {
        self.probs[a.index()]
    }

    pub fn log_prob(&self, a: Action) -> f64 {
        self.prob(a).max(PROB_FLOOR).ln()
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    /// `KL(self || other)`. Terms with zero mass in `self` vanish; both
    /// arguments of the log ratio are floored at [`PROB_FLOOR`].
    pub fn kl(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| p * (p.max(PROB_FLOOR).ln() - q.max(PROB_FLOOR).ln()))
            .sum()
    }

    /// Total-variation distance.
    pub fn tv(&self, other: &Self) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(p, q)| (p - q).abs()).sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Action::from_index(i).unwrap();
            }
        }
        // u landed in the rounding gap above the cumulative sum
        let last = self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(NUM_ACTIONS - 1);
        Action::from_index(last).unwrap()
    }

    /// Most probable action; ties go to the lower index.
    pub fn mode(&self) -> Action {
        let mut best = 0;
        for i in 1..NUM_ACTIONS {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        Action::from_index(best).unwrap()
    }
}
