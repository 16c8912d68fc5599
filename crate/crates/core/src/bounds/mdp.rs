use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};

pub const MAX_STATES: usize = 20;
pub const MAX_ACTIONS: usize = 5;

/// Finite discounted MDP with explicit transition tensor `p[s][a][s']`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyMdp {
    pub states: usize,
    pub actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    pub gamma: f64,
}

/// Flat Dirichlet(1, ..., 1) draw.
fn dirichlet_ones<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn check_simplex(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("{what} is not a probability vector")));
    }
    Ok(())
}

impl ToyMdp {
    /// `transitions` is `states * actions * states` row-major, `rewards` is
    /// `states * actions`.
    pub fn new(states: usize, actions: usize, transitions: Vec<f64>, rewards: Vec<f64>, gamma: f64) -> Result<Self> {
        if !(1..=MAX_STATES).contains(&states) || !(1..=MAX_ACTIONS).contains(&actions) {
            return Err(Error::InvalidArgument(format!("toy MDP size {states}x{actions} out of range")));
        }
        if transitions.len() != states * actions * states || rewards.len() != states * actions {
            return Err(Error::Shape("toy MDP tables do not match the declared sizes".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("discount must lie in [0, 1), got {gamma}")));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("toy MDP rewards"));
        }
        for row in transitions.chunks(states) {
            check_simplex(row, "transition row")?;
        }
        Ok(Self { states, actions, transitions, rewards, gamma })
    }

    /// Dirichlet(1) transitions, rewards uniform in [-1, 1].
    pub fn random<R: Rng + ?Sized>(states: usize, actions: usize, gamma: f64, rng: &mut R) -> Result<Self> {
        let transitions = (0..states * actions).flat_map(|_| dirichlet_ones(states, rng)).collect();
        let rewards = (0..states * actions).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Self::new(states, actions, transitions, rewards, gamma)
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        let o = (s * self.actions + a) * self.states;
        &self.transitions[o..o + self.states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.actions + a]
    }

    /// State-to-state kernel under `pi`.
    pub fn kernel(&self, pi: &TabularPolicy) -> DMatrix<f64> {
        DMatrix::from_fn(self.states, self.states, |s, t| {
            (0..self.actions).map(|a| pi.prob(s, a) * self.transition(s, a)[t]).sum()
        })
    }
}

/// `pi(a | s)` for every state.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    pub actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(actions: usize, probs: Vec<f64>) -> Result<Self> {
        if actions == 0 || probs.is_empty() || probs.len() % actions != 0 {
            return Err(Error::Shape(format!("{} probabilities for {actions} actions", probs.len())));
        }
        for row in probs.chunks(actions) {
            check_simplex(row, "policy row")?;
        }
        Ok(Self { actions, probs })
    }

    pub fn random<R: Rng + ?Sized>(states: usize, actions: usize, rng: &mut R) -> Self {
        let probs = (0..states).flat_map(|_| dirichlet_ones(actions, rng)).collect();
        Self { actions, probs }
    }

    /// Per-state mixture `(1 - w) self + w other`.
    pub fn mix(&self, other: &Self, w: f64) -> Self {
        let probs = self.probs.iter().zip(&other.probs).map(|(p, q)| (1.0 - w) * p + w * q).collect();
        Self { actions: self.actions, probs }
    }

    pub fn states(&self) -> usize {
        self.probs.len() / self.actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.actions..(s + 1) * self.actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.actions + a]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyValues {
    pub v: Vec<f64>,
    /// `q[s * actions + a]`.
    pub q: Vec<f64>,
    pub actions: usize,
}

impl PolicyValues {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.actions + a]
    }

    pub fn q_max(&self) -> f64 {
        self.q.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

fn check_policy(mdp: &ToyMdp, pi: &TabularPolicy) -> Result<()> {
    if pi.actions != mdp.actions || pi.states() != mdp.states {
        return Err(Error::Shape("policy table does not match the MDP".into()));
    }
    Ok(())
}

/// Solve `(I - gamma P_pi) V = r_pi` and back up `Q`.
pub fn exact_policy_eval(mdp: &ToyMdp, pi: &TabularPolicy) -> Result<PolicyValues> {
    check_policy(mdp, pi)?;
    let n = mdp.states;
    let a = DMatrix::identity(n, n) - mdp.kernel(pi) * mdp.gamma;
    let r = DVector::from_fn(n, |s, _| (0..mdp.actions).map(|u| pi.prob(s, u) * mdp.reward(s, u)).sum());
    let v = a.lu().solve(&r).expect("I - gamma P is nonsingular for gamma < 1");
    let q = (0..n)
        .flat_map(|s| (0..mdp.actions).map(move |u| (s, u)))
        .map(|(s, u)| mdp.reward(s, u) + mdp.gamma * mdp.transition(s, u).iter().zip(v.iter()).map(|(p, v)| p * v).sum::<f64>())
        .collect();
    Ok(PolicyValues { v: v.iter().copied().collect(), q, actions: mdp.actions })
}
