use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::mdp::{exact_policy_eval, TabularPolicy, ToyMdp};
use super::{kl_divergence, total_variation};
use crate::error::{Error, Result};
use crate::net::Network;
use crate::observation::StateMatrix;

pub const RECORD_SLACK: f64 = 1e-9;

/// One measured gap against its bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheckRecord {
    pub trial: usize,
    pub tag: String,
    pub lhs: f64,
    pub rhs: f64,
    pub b: f64,
    pub q_max: f64,
    pub rate: f64,
    pub gamma: f64,
    /// Allowed excess of `lhs` over `rhs` (numerical slack plus Monte Carlo
    /// error where applicable).
    pub tolerance: f64,
    pub pass: bool,
}

impl BoundCheckRecord {
    fn new(tag: &str, lhs: f64, rhs: f64, b: f64, q_max: f64, rate: f64, gamma: f64, tolerance: f64) -> Self {
        Self { trial: 0, tag: tag.into(), lhs, rhs, b, q_max, rate, gamma, tolerance, pass: lhs <= rhs + tolerance }
    }
}

/// `TV(p, q) <= sqrt(KL(p || q) / 2)`.
pub fn pinsker_holds(p: &[f64], q: &[f64]) -> bool {
    total_variation(p, q) <= (0.5 * kl_divergence(p, q)).sqrt() + 1e-12
}

fn check_pair(mdp: &ToyMdp, p: &TabularPolicy, q: &TabularPolicy) -> Result<()> {
    if p.actions != mdp.actions || q.actions != mdp.actions || p.states() != mdp.states || q.states() != mdp.states {
        return Err(Error::Shape("policy tables do not match the MDP".into()));
    }
    Ok(())
}

/// Uniform state average of `|sum_u (p - q) Q^p|` against `Q_max sqrt(2B)`
/// with `B` the uniform average of `KL(p || q)`.
pub fn check_performance_bound(mdp: &ToyMdp, p: &TabularPolicy, q: &TabularPolicy) -> Result<BoundCheckRecord> {
    check_pair(mdp, p, q)?;
    let pv = exact_policy_eval(mdp, p)?;
    let n = mdp.states as f64;
    let b = (0..mdp.states).map(|s| kl_divergence(p.row(s), q.row(s))).sum::<f64>() / n;
    let lhs = (0..mdp.states)
        .map(|s| (0..mdp.actions).map(|a| (p.prob(s, a) - q.prob(s, a)) * pv.q(s, a)).sum::<f64>().abs())
        .sum::<f64>()
        / n;
    let q_max = pv.q_max();
    Ok(BoundCheckRecord::new("performance", lhs, q_max * (2.0 * b).sqrt(), b, q_max, 0.0, mdp.gamma, RECORD_SLACK))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutOptions {
    pub rollouts: usize,
    /// Rollouts stop once `gamma^k` falls below this.
    pub horizon_eps: f64,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self { rollouts: 100_000, horizon_eps: 1e-6 }
    }
}

/// Discounted weights of the states visited at steps `k >= 1` when step 0
/// follows `p` from a uniform start and later steps follow `m`, normalised to
/// a distribution.
fn contaminated_visitation(mdp: &ToyMdp, p: &TabularPolicy, m: &TabularPolicy) -> Vec<f64> {
    let n = mdp.states;
    let g = mdp.gamma;
    if g == 0.0 {
        return vec![1.0 / n as f64; n];
    }
    let mu0 = DVector::from_element(n, 1.0 / n as f64);
    let after_first = mdp.kernel(p).transpose() * mu0;
    let a = (DMatrix::identity(n, n) - mdp.kernel(m) * g).transpose();
    let d = a.lu().solve(&after_first).expect("I - gamma P is nonsingular for gamma < 1");
    let total: f64 = d.iter().sum();
    d.iter().map(|v| v / total).collect()
}

fn sample_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.iter().position(|c| u < *c).unwrap_or(cdf.len() - 1)
}

fn cdf_rows(rows: impl Iterator<Item = Vec<f64>>) -> Vec<Vec<f64>> {
    rows.map(|r| {
        let mut acc = 0.0;
        r.iter().map(|v| {
            acc += v;
            acc
        })
        .collect()
    })
    .collect()
}

/// Monte Carlo check of the discounted contamination bound.
///
/// The clean value `V^p` is exact; the contaminated value follows `p` at the
/// first step and the mixture `(1 - R) p + R q` afterwards, from a uniform
/// (stratified) start. `B` is the KL budget averaged over the discounted
/// state visitation of the contaminated rollout, which is the distribution
/// the per-step losses are taken under.
pub fn check_robust_value_bound<R: Rng + ?Sized>(
    mdp: &ToyMdp,
    p: &TabularPolicy,
    q: &TabularPolicy,
    rate: f64,
    opts: &RolloutOptions,
    rng: &mut R,
) -> Result<BoundCheckRecord> {
    check_pair(mdp, p, q)?;
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("contamination rate must lie in [0, 1), got {rate}")));
    }
    if opts.rollouts < 2 || !(opts.horizon_eps > 0.0 && opts.horizon_eps < 1.0) {
        return Err(Error::InvalidArgument("rollout options out of range".into()));
    }
    let (n, g) = (mdp.states, mdp.gamma);
    let m = p.mix(q, rate);
    let pv = exact_policy_eval(mdp, p)?;
    let q_max = pv.q_max();
    let weights = contaminated_visitation(mdp, p, &m);
    let b: f64 = weights.iter().enumerate().map(|(s, w)| w * kl_divergence(p.row(s), q.row(s))).sum();
    let rhs = if g == 0.0 { 0.0 } else { g * rate / (1.0 - g) * q_max * (2.0 * b).sqrt() };

    let horizon = if g == 0.0 { 1 } else { ((opts.horizon_eps.ln() / g.ln()).ceil() as usize).max(1) };
    let p_cdf = cdf_rows((0..n).map(|s| p.row(s).to_vec()));
    let m_cdf = cdf_rows((0..n).map(|s| m.row(s).to_vec()));
    let t_cdf = cdf_rows((0..n * mdp.actions).map(|i| mdp.transition(i / mdp.actions, i % mdp.actions).to_vec()));
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for i in 0..opts.rollouts {
        let start = i % n;
        let mut s = start;
        let (mut ret, mut disc) = (0.0, 1.0);
        for k in 0..horizon {
            let a = sample_index(if k == 0 { &p_cdf[s] } else { &m_cdf[s] }, rng);
            ret += disc * mdp.reward(s, a);
            disc *= g;
            s = sample_index(&t_cdf[s * mdp.actions + a], rng);
        }
        let x = pv.v[start] - ret;
        sum += x;
        sum_sq += x * x;
    }
    let count = opts.rollouts as f64;
    let lhs = sum / count;
    let var = ((sum_sq / count - lhs * lhs) * count / (count - 1.0)).max(0.0);
    let r_max = (0..n * mdp.actions).map(|i| mdp.reward(i / mdp.actions, i % mdp.actions).abs()).fold(0.0, f64::max);
    let truncation = g.powi(horizon as i32) * r_max / (1.0 - g);
    let tolerance = 3.0 * (var / count).sqrt() + truncation + RECORD_SLACK;
    Ok(BoundCheckRecord::new("robust_value", lhs, rhs, b, q_max, rate, g, tolerance))
}

/// Mean `KL(pi(.|S) || pi(.|Xi))` over probe pairs.
pub fn probe_budget(net: &Network, pairs: &[(StateMatrix, StateMatrix)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("probe dataset"));
    }
    let mut tape = net.tape();
    let mut total = 0.0;
    for (s, xi) in pairs {
        let p = net.forward(s, &mut tape)?.dist();
        let q = net.forward(xi, &mut tape)?.dist();
        total += p.kl(&q);
    }
    Ok(total / pairs.len() as f64)
}

/// Invariance budget of a trained network on probe pairs, with the critic's
/// largest `|V|` standing in for `Q_max`. The left side is the
/// total-variation step bound `2 Q_max TV`, averaged. Advisory only.
pub fn policy_probe_report(net: &Network, pairs: &[(StateMatrix, StateMatrix)]) -> Result<BoundCheckRecord> {
    let b = probe_budget(net, pairs)?;
    let mut tape = net.tape();
    let (mut q_max, mut tv): (f64, f64) = (0.0, 0.0);
    for (s, xi) in pairs {
        let clean = net.forward(s, &mut tape)?;
        let p = clean.dist();
        let q = net.forward(xi, &mut tape)?.dist();
        q_max = q_max.max(clean.value.abs());
        tv += p.tv(&q);
    }
    let tv = tv / pairs.len() as f64;
    Ok(BoundCheckRecord::new("probe", 2.0 * q_max * tv, q_max * (2.0 * b).sqrt(), b, q_max, 0.0, 0.0, RECORD_SLACK))
}
