//! Exact finite-MDP oracles and numerical checks of the KL-based
//! performance bounds.

mod checks;
mod mdp;

pub use checks::{
    check_performance_bound, check_robust_value_bound, pinsker_holds, policy_probe_report, probe_budget,
    BoundCheckRecord, RolloutOptions,
};
pub use mdp::{exact_policy_eval, PolicyValues, TabularPolicy, ToyMdp, MAX_ACTIONS, MAX_STATES};

use crate::net::PROB_FLOOR;

/// `KL(p || q)` with the probability floor applied inside the logarithms only;
/// terms with `p = 0` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi.max(PROB_FLOOR).ln() - qi.max(PROB_FLOOR).ln()))
        .sum::<f64>()
        .max(0.0)
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_values() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]) - std::f64::consts::LN_2).abs() < 1e-15);
        let (p, q) = ([0.2, 0.5, 0.3], [0.4, 0.4, 0.2]);
        let direct = 0.2 * (0.5f64).ln() + 0.5 * (1.25f64).ln() + 0.3 * (1.5f64).ln();
        assert!((kl_divergence(&p, &q) - direct).abs() < 1e-15);
        assert!((total_variation(&p, &q) - 0.2).abs() < 1e-15);
    }
}
