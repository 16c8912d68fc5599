//! Randomized certification of the first-order adversary and the KL
//! performance bounds.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::adversary::{
    brute_force_worst_case, estimate_lipschitz_grad, fo_perturbation, remainder_bound_check, BoxDomain, LinearValue,
    OracleOptions, QuadraticValue, TanhMlp, ValueFunction,
};
use crate::bounds::{
    check_performance_bound, check_robust_value_bound, pinsker_holds, BoundCheckRecord, RolloutOptions, TabularPolicy,
    ToyMdp, MAX_ACTIONS, MAX_STATES,
};
use crate::error::Result;
use crate::observation::{col, CorruptionBounds, StateMatrix, ROWS, STATE_DIM};
use crate::rng::{stream, tags, SimRng};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    pub linear_trials: usize,
    pub quadratic_trials: usize,
    pub network_trials: usize,
    pub performance_trials: usize,
    pub robust_trials: usize,
    pub robust_rates: Vec<f64>,
    pub rollouts: usize,
    /// Multiplies every right-hand side; only for testing the checker.
    pub rhs_scale: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            linear_trials: 1000,
            quadratic_trials: 1000,
            network_trials: 200,
            performance_trials: 1000,
            robust_trials: 200,
            robust_rates: vec![0.25, 0.5, 0.9],
            rollouts: 100_000,
            rhs_scale: 1.0,
        }
    }
}

impl SuiteOptions {
    /// Same trial count for every suite and short rollouts.
    pub fn quick(trials: usize, seed: u64) -> Self {
        Self {
            seed,
            linear_trials: trials,
            quadratic_trials: trials,
            network_trials: trials,
            performance_trials: trials,
            robust_trials: trials,
            rollouts: 2000,
            ..Self::default()
        }
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.linear_trials = trials;
        self.quadratic_trials = trials;
        self.network_trials = trials;
        self.performance_trials = trials;
        self.robust_trials = trials;
        self
    }
}

/// One checked inequality `lhs <= rhs + tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyRow {
    pub suite: &'static str,
    pub trial: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub b: Option<f64>,
    pub q_max: Option<f64>,
    pub rate: Option<f64>,
    pub gamma: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub suite: &'static str,
    pub trials: usize,
    pub violations: usize,
    pub seconds: f64,
}

/// Gap tolerated between the closed-form corner and the oracle minimum of
/// a linear value function.
pub const LINEAR_EXACTNESS_TOL: f64 = 1e-12;
const BOUND_SLACK: f64 = 1e-9;

fn trial_rng(seed: u64, suite: u64, trial: usize) -> SimRng {
    stream(&[seed, tags::BOUNDS, suite, trial as u64])
}

/// Random state with up to two intruders, headings away from the wrap so
/// the box is a plain box in raw coordinates, and per-element bounds drawn
/// around the default magnitudes (about a fifth of them zero).
pub fn random_linear_case<R: Rng + ?Sized>(rng: &mut R) -> (StateMatrix, CorruptionBounds) {
    let mut s = StateMatrix::default();
    let row = |rng: &mut R| {
        [
            rng.random_range(0.0..7000.0),
            rng.random_range(0.0..7000.0),
            rng.random_range(-2.8..2.8),
            rng.random_range(7.5..36.0),
            rng.random_range(0.0..10_000.0),
            rng.random_range(-1i32..=1) as f64 * 2.5722,
        ]
    };
    s.rows[0] = row(rng);
    for j in 0..rng.random_range(0..=2) {
        s.rows[j + 1] = row(rng);
        s.mask[j] = true;
    }
    let mut k = [[0.0; STATE_DIM]; ROWS];
    for r in 0..ROWS {
        for c in 0..STATE_DIM {
            if c != col::PREV_CMD && rng.random_bool(0.8) {
                k[r][c] = CorruptionBounds::DEFAULT_COLUMNS[c] * rng.random_range(0.1..2.0);
            }
        }
    }
    (s, CorruptionBounds::new(k).expect("bounds are non-negative"))
}

/// `|V(Xi_FO) - oracle min|` for a random linear critic on a state matrix.
pub fn linear_exactness_gap<R: Rng + ?Sized>(rng: &mut R) -> Result<f64> {
    let (s, kappa) = random_linear_case(rng);
    let f = LinearValue::random(ROWS * STATE_DIM, rng);
    let flat = s.flatten();
    let g = f.gradient(&flat);
    let mut grad = [[0.0; STATE_DIM]; ROWS];
    for r in 0..ROWS {
        grad[r].copy_from_slice(&g[r * STATE_DIM..(r + 1) * STATE_DIM]);
    }
    let xi = fo_perturbation(&s, &grad, &kappa)?.xi;
    let oracle = brute_force_worst_case(&f, &BoxDomain::from_state(&s, &kappa), &OracleOptions::default())?;
    Ok((f.value(&xi.flatten()) - oracle.value).abs())
}

fn random_box<R: Rng + ?Sized>(n: usize, kmin: f64, kmax: f64, rng: &mut R) -> BoxDomain {
    let center = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let kappa = (0..n).map(|_| rng.random_range(kmin..kmax)).collect();
    BoxDomain::new(center, kappa).expect("finite box")
}

fn row(suite: &'static str, trial: usize, lhs: f64, rhs: f64, tolerance: f64) -> VerifyRow {
    VerifyRow { suite, trial, lhs, rhs, tolerance, b: None, q_max: None, rate: None, gamma: None, pass: lhs <= rhs + tolerance }
}

fn bound_row(suite: &'static str, trial: usize, rec: &BoundCheckRecord, scale: f64) -> VerifyRow {
    let rhs = rec.rhs * scale;
    VerifyRow {
        suite,
        trial,
        lhs: rec.lhs,
        rhs,
        tolerance: rec.tolerance,
        b: Some(rec.b),
        q_max: Some(rec.q_max),
        rate: Some(rec.rate),
        gamma: Some(rec.gamma),
        pass: rec.lhs <= rhs + rec.tolerance,
    }
}

/// Run every suite; returns per-suite summaries and every checked row.
pub fn run_suites(opts: &SuiteOptions) -> Result<(Vec<SuiteSummary>, Vec<VerifyRow>)> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let oracle = OracleOptions::default();
    let mut finish = |name: &'static str, start: Instant, new_rows: Vec<VerifyRow>, rows: &mut Vec<VerifyRow>| {
        let s = SuiteSummary {
            suite: name,
            trials: new_rows.len(),
            violations: new_rows.iter().filter(|r| !r.pass).count(),
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("{}: {} checks, {} violations, {:.1} s", s.suite, s.trials, s.violations, s.seconds);
        summaries.push(s);
        rows.extend(new_rows);
    };

    let t = Instant::now();
    let mut out = Vec::new();
    for i in 0..opts.linear_trials {
        let gap = linear_exactness_gap(&mut trial_rng(opts.seed, 1, i))?;
        out.push(row("fo_linear_exactness", i, gap, LINEAR_EXACTNESS_TOL * opts.rhs_scale, 0.0));
    }
    finish("fo_linear_exactness", t, out, &mut rows);

    let t = Instant::now();
    let mut out = Vec::new();
    for i in 0..opts.quadratic_trials {
        let mut rng = trial_rng(opts.seed, 2, i);
        let n = rng.random_range(1..=6);
        let f = QuadraticValue::random(n, &mut rng);
        let d = random_box(n, 0.05, 1.0, &mut rng);
        let rep = remainder_bound_check(&f, &d, f.lipschitz(), &oracle)?;
        out.push(row("remainder_quadratic", i, rep.gap, rep.bound * opts.rhs_scale, BOUND_SLACK));
    }
    finish("remainder_quadratic", t, out, &mut rows);

    let t = Instant::now();
    let mut out = Vec::new();
    for i in 0..opts.network_trials {
        let mut rng = trial_rng(opts.seed, 3, i);
        let n = rng.random_range(1..=5);
        let f = TanhMlp::random(n, 8, &mut rng);
        let d = random_box(n, 0.05, 0.5, &mut rng);
        let l = 1.5 * estimate_lipschitz_grad(&f, &d, 2000, &mut rng)?;
        let rep = remainder_bound_check(&f, &d, l, &oracle)?;
        out.push(row("remainder_network", i, rep.gap, rep.bound * opts.rhs_scale, BOUND_SLACK));
    }
    finish("remainder_network", t, out, &mut rows);

    let t = Instant::now();
    let mut out = Vec::new();
    for i in 0..opts.performance_trials {
        let mut rng = trial_rng(opts.seed, 4, i);
        let (n, m) = (rng.random_range(1..=MAX_STATES), rng.random_range(2..=MAX_ACTIONS));
        let mdp = ToyMdp::random(n, m, rng.random_range(0.5..0.99), &mut rng)?;
        let (p, q) = (TabularPolicy::random(n, m, &mut rng), TabularPolicy::random(n, m, &mut rng));
        let rec = check_performance_bound(&mdp, &p, &q)?;
        let mut r = bound_row("performance_bound", i, &rec, opts.rhs_scale);
        r.pass &= (0..n).all(|s| pinsker_holds(p.row(s), q.row(s)));
        out.push(r);
    }
    finish("performance_bound", t, out, &mut rows);

    let t = Instant::now();
    let mut out = Vec::new();
    let ro = RolloutOptions { rollouts: opts.rollouts, ..Default::default() };
    for i in 0..opts.robust_trials {
        let mut rng = trial_rng(opts.seed, 5, i);
        let (n, m) = (rng.random_range(2..=10), rng.random_range(2..=MAX_ACTIONS));
        let mdp = ToyMdp::random(n, m, rng.random_range(0.5..0.9), &mut rng)?;
        let (p, q) = (TabularPolicy::random(n, m, &mut rng), TabularPolicy::random(n, m, &mut rng));
        for &rate in &opts.robust_rates {
            let rec = check_robust_value_bound(&mdp, &p, &q, rate, &ro, &mut rng)?;
            out.push(bound_row("robust_value_bound", i, &rec, opts.rhs_scale));
        }
    }
    finish("robust_value_bound", t, out, &mut rows);

    Ok((summaries, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suites_pass() {
        let (summary, rows) = run_suites(&SuiteOptions::quick(5, 1)).unwrap();
        assert_eq!(summary.len(), 5);
        assert!(rows.iter().all(|r| r.pass), "{:?}", rows.iter().find(|r| !r.pass));
    }

    #[test]
    fn shrunken_bounds_are_caught() {
        let opts = SuiteOptions { rhs_scale: 0.01, ..SuiteOptions::quick(5, 1) };
        let (summary, _) = run_suites(&opts).unwrap();
        assert!(summary.iter().map(|s| s.violations).sum::<usize>() > 0);
    }
}
