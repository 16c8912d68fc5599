//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Criteria 7 to 9 share one training and evaluation pipeline on the default
//! scenario (three 2e5-step runs plus 1200 evaluation episodes), which takes
//! well over an hour on a single core.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use robsep_core::bounds::{check_performance_bound, TabularPolicy, ToyMdp};
use robsep_core::eval::{evaluate, run_suites, EvalRecord, EvalSettings, PolicyUnderTest, SuiteOptions, SuiteSummary};
use robsep_core::net::{Featurizer, NetConfig, Network, NUM_ACTIONS};
use robsep_core::observation::{CorruptionBounds, StateMatrix, MAX_INTRUDERS, STATE_DIM};
use robsep_core::rng::{derive_seed, stream, tags};
use robsep_core::sim::Scenario;
use robsep_core::trainer::{
    collect_probe_pairs, kl_budget_probe, pretrain_nominal, robust_train, RobustInit, RunOptions, TeacherBundle,
    TrainConfig,
};

/// Bypasses the test harness's output capture so every verdict shows up in
/// a plain `cargo test` log.
fn report(id: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {id}: {verdict} {detail}");
    let _ = out.flush();
}

fn suites_only(f: impl FnOnce(&mut SuiteOptions)) -> SuiteOptions {
    let mut o = SuiteOptions::default().with_trials(0);
    o.seed = 2024;
    f(&mut o);
    o
}

fn violations(summary: &[SuiteSummary], suite: &str) -> (usize, usize) {
    let s = summary.iter().find(|s| s.suite == suite).expect("suite ran");
    (s.trials, s.violations)
}

#[test]
fn c1_first_order_adversary_is_exact_for_linear_values() {
    let t = Instant::now();
    let (summary, rows) = run_suites(&suites_only(|o| o.linear_trials = 1000)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let (n, bad) = violations(&summary, "fo_linear_exactness");
    let worst = rows.iter().map(|r| r.lhs).fold(0.0, f64::max);
    let pass = n == 1000 && bad == 0 && secs < 5.0;
    report(1, pass, &format!("{n} trials, {bad} gaps >= 1e-12, worst gap {worst:.2e}, {secs:.2} s"));
    assert!(pass);
}

#[test]
fn c2_second_order_remainder_bound() {
    let t = Instant::now();
    let (summary, rows) = run_suites(&suites_only(|o| {
        o.quadratic_trials = 1000;
        o.network_trials = 200;
    }))
    .unwrap();
    let secs = t.elapsed().as_secs_f64();
    let (nq, bq) = violations(&summary, "remainder_quadratic");
    let (nn, bn) = violations(&summary, "remainder_network");
    let tightest = rows.iter().filter(|r| r.rhs > 0.0).map(|r| r.lhs / r.rhs).fold(0.0, f64::max);
    let pass = nq == 1000 && nn == 200 && bq + bn == 0 && secs < 120.0;
    report(
        2,
        pass,
        &format!("quadratic {bq}/{nq}, network {bn}/{nn} violations, max gap/bound {tightest:.3}, {secs:.1} s"),
    );
    assert!(pass);
}

#[test]
fn c3_pinsker_performance_bound() {
    let t = Instant::now();
    let (summary, _) = run_suites(&suites_only(|o| o.performance_trials = 1000)).unwrap();
    let (n, bad) = violations(&summary, "performance_bound");

    // One state, two actions, gamma 1/2: Q = (1, -1) under the deterministic
    // policy, against the uniform policy.
    let mdp = ToyMdp::new(1, 2, vec![1.0, 1.0], vec![0.5, -1.5], 0.5).unwrap();
    let p = TabularPolicy::new(2, vec![1.0, 0.0]).unwrap();
    let q = TabularPolicy::new(2, vec![0.5, 0.5]).unwrap();
    let rec = check_performance_bound(&mdp, &p, &q).unwrap();
    let ln2 = std::f64::consts::LN_2;
    let hand = (rec.lhs - 1.0).abs() < 1e-12
        && (rec.b - ln2).abs() < 1e-12
        && (rec.rhs - (2.0 * ln2).sqrt()).abs() < 1e-12
        && rec.pass;
    let secs = t.elapsed().as_secs_f64();
    let pass = n == 1000 && bad == 0 && hand && secs < 60.0;
    report(
        3,
        pass,
        &format!("{bad}/{n} violations, hand case lhs {:.12} rhs {:.12}, {secs:.1} s", rec.lhs, rec.rhs),
    );
    assert!(pass);
}

#[test]
fn c4_discounted_contamination_bound() {
    let t = Instant::now();
    let (summary, rows) = run_suites(&suites_only(|o| o.robust_trials = 200)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let (n, bad) = violations(&summary, "robust_value_bound");
    let mut per_rate = String::new();
    for rate in [0.25, 0.5, 0.9] {
        let k = rows.iter().filter(|r| r.rate == Some(rate)).count();
        per_rate.push_str(&format!(" R={rate}:{k}"));
    }
    let pass = n == 600 && bad == 0 && secs < 600.0;
    report(4, pass, &format!("{bad}/{n} violations beyond 3 sigma,{per_rate} rows, {secs:.1} s"));
    assert!(pass);
}

fn random_state<R: Rng>(rng: &mut R) -> StateMatrix {
    let mut s = StateMatrix::default();
    let (cx, cy) = (rng.random_range(0.0..7000.0), rng.random_range(0.0..7000.0));
    let row = |rng: &mut R| {
        [
            cx + rng.random_range(-400.0..400.0),
            cy + rng.random_range(-400.0..400.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(7.5..36.0),
            rng.random_range(0.0..10_000.0),
            rng.random_range(-1i32..=1) as f64 * 2.5722,
        ]
    };
    s.rows[0] = row(rng);
    for j in 0..rng.random_range(1..=MAX_INTRUDERS) {
        s.rows[j + 1] = row(rng);
        s.mask[j] = true;
    }
    s
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Step used by every finite difference below.
const H: f64 = 1e-5;
/// One-sided slopes differing by more than this fraction of the gradient
/// norm mean the stencil straddles a LeakyReLU kink; smooth instances sit
/// below 1e-5.
const KINK_GAP: f64 = 1e-4;

/// Central differences of `f` along each probed direction, plus whether any
/// stencil crossed a kink.
fn stencils(f: impl Fn(usize, f64) -> f64, dirs: usize) -> (Vec<f64>, bool) {
    let (mut central, mut gaps) = (Vec::with_capacity(dirs), Vec::with_capacity(dirs));
    for i in 0..dirs {
        let (p, z, m) = (f(i, H), f(i, 0.0), f(i, -H));
        central.push((p - m) / (2.0 * H));
        gaps.push(((p - z) - (z - m)).abs() / H);
    }
    let scale = norm(&central).max(1e-300);
    let kinked = gaps.iter().any(|g| g / scale > KINK_GAP);
    (central, kinked)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-300)
}

/// Scalar `c . logits + d * value` through the network's own backward pass.
fn probe_loss(net: &Network, s: &StateMatrix, c: &[f64; NUM_ACTIONS], d: f64, grads: Option<&mut [f64]>) -> f64 {
    let mut tape = net.tape();
    let out = net.forward(s, &mut tape).unwrap();
    if let Some(g) = grads {
        net.backward(&mut tape, c, d, Some(g));
    }
    c.iter().zip(&out.logits).map(|(a, b)| a * b).sum::<f64>() + d * out.value
}

#[test]
fn c5_network_gradients_match_finite_differences() {
    let t = Instant::now();
    let mut rng = stream(&[5, 5]);
    let (mut worst_in, mut worst_par): (f64, f64) = (0.0, 0.0);
    let (mut checked, mut redrawn) = (0, 0);
    let mut draw = 0u64;
    while checked < 100 {
        let net = Network::new(NetConfig::default(), Featurizer::default(), &mut stream(&[5, draw])).unwrap();
        draw += 1;
        let s = random_state(&mut rng);

        let (_, g) = net.input_gradient(&s).unwrap();
        let cells: Vec<(usize, usize)> = s.valid_rows().flat_map(|r| (0..STATE_DIM).map(move |c| (r, c))).collect();
        let value_at = |i: usize, dx: f64| {
            let mut x = s;
            x.rows[cells[i].0][cells[i].1] += dx;
            net.evaluate(&x).unwrap().value
        };
        let (fd_in, kink_in) = stencils(value_at, cells.len());
        let an_in: Vec<f64> = cells.iter().map(|&(r, c)| g[r][c]).collect();

        let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let d = rng.random_range(-1.0..1.0);
        let mut grads = vec![0.0; net.num_params()];
        probe_loss(&net, &s, &c, d, Some(&mut grads));
        let idx: Vec<usize> = net
            .layout()
            .blocks
            .iter()
            .flat_map(|b| (0..3).map(|_| b.offset + rng.random_range(0..b.len())).collect::<Vec<_>>())
            .collect();
        let loss_at = |i: usize, dp: f64| {
            let mut n = net.clone();
            n.params_mut()[idx[i]] += dp;
            probe_loss(&n, &s, &c, d, None)
        };
        let (fd_par, kink_par) = stencils(loss_at, idx.len());
        let an_par: Vec<f64> = idx.iter().map(|&i| grads[i]).collect();

        if kink_in || kink_par {
            redrawn += 1;
            continue;
        }
        worst_in = worst_in.max(rel_err(&an_in, &fd_in));
        worst_par = worst_par.max(rel_err(&an_par, &fd_par));
        checked += 1;
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst_in < 1e-4 && worst_par < 1e-4 && secs < 60.0;
    report(
        5,
        pass,
        &format!(
            "{checked} instances, worst relative error input {worst_in:.2e}, parameters {worst_par:.2e}, \
             {redrawn} redrawn for a stencil across a kink, {secs:.1} s"
        ),
    );
    assert!(pass);
}

#[test]
fn c6_zero_rate_robust_phase_reduces_to_ppo() {
    let opts = RunOptions::new(66);
    // Batches overshoot 256 by however many aircraft step together, so the
    // budget is padded and the first 50 iterations are compared.
    let cfg = TrainConfig { total_steps: 256 * 56, batch_size: 256, minibatch_size: 64, epochs: 2, ..Default::default() };
    let nominal = pretrain_nominal(&opts, &cfg).unwrap();
    let teacher = TeacherBundle::freeze(nominal.net.clone());
    let reduced =
        TrainConfig { fixed_rate: Some(0.0), lambda_inv: 0.0, lambda_anchor: 0.0, robust_init: RobustInit::Fresh, ..cfg };
    let robust = robust_train(&opts, &reduced, &teacher).unwrap();
    let matched = nominal.log.iter().zip(&robust.log).take_while(|(a, b)| a.digest == b.digest).count();
    let pass = nominal.log.len() >= 50 && nominal.log.len() == robust.log.len() && matched >= 50;
    report(6, pass, &format!("{matched}/{} iterations with identical parameters", nominal.log.len()));
    assert!(pass);
}

const RATES: [f64; 6] = [0.0, 0.15, 0.35, 0.5, 0.75, 0.95];
const EPISODES: usize = 100;
const PIPELINE_SEED: u64 = 7;

struct Pipeline {
    seconds: f64,
    cells: Vec<EvalRecord>,
    /// Paired per-episode NMAC differences (robust minus nominal) at R = 0.
    zero_rate_diffs: Vec<f64>,
    budget_regularised: f64,
    budget_unregularised: f64,
}

impl Pipeline {
    fn cell(&self, rate: f64, policy: &str) -> &EvalRecord {
        self.cells.iter().find(|c| c.rate == rate && c.policy == policy).expect("evaluated cell")
    }
}

fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let t = Instant::now();
        let opts = RunOptions::new(PIPELINE_SEED);
        let cfg = TrainConfig::default();
        assert_eq!(cfg.total_steps, 200_000);
        let teacher = TeacherBundle::freeze(pretrain_nominal(&opts, &cfg).unwrap().net);
        let robust = robust_train(&opts, &cfg, &teacher).unwrap().net;
        let ablation = robust_train(&opts, &TrainConfig { lambda_inv: 0.0, ..cfg.clone() }, &teacher).unwrap().net;

        let scenario = Scenario::default();
        let kappa = CorruptionBounds::default();
        let probe_seed = derive_seed(&[PIPELINE_SEED, tags::BOUNDS]);
        let pairs = collect_probe_pairs(&scenario, &teacher, &kappa, probe_seed, 4000, 5).unwrap();
        let budget_regularised = kl_budget_probe(&robust, &pairs).unwrap();
        let budget_unregularised = kl_budget_probe(&ablation, &pairs).unwrap();

        let settings = EvalSettings { rates: RATES.to_vec(), episodes: EPISODES, ..Default::default() };
        let policies = [
            PolicyUnderTest { tag: "nominal", policy: teacher.net(), teacher: teacher.net() },
            PolicyUnderTest { tag: "robust", policy: &robust, teacher: teacher.net() },
        ];
        let (cells, episodes) = evaluate(&scenario, &kappa, &policies, &settings, PIPELINE_SEED).unwrap();
        let at_zero = |tag: &str| -> Vec<f64> {
            let mut v: Vec<_> = episodes.iter().filter(|e| e.rate == 0.0 && e.policy == tag).collect();
            v.sort_by_key(|e| e.episode);
            v.iter().map(|e| e.nmac as f64).collect()
        };
        let zero_rate_diffs = at_zero("robust").iter().zip(at_zero("nominal")).map(|(r, n)| r - n).collect();
        Pipeline { seconds: t.elapsed().as_secs_f64(), cells, zero_rate_diffs, budget_regularised, budget_unregularised }
    })
}

#[test]
fn c7_robust_policy_trends() {
    let p = pipeline();
    let mean_diff = p.zero_rate_diffs.iter().sum::<f64>() / p.zero_rate_diffs.len() as f64;
    let a = p.zero_rate_diffs.len() == EPISODES && mean_diff.abs() <= 1.0;
    let mut b = true;
    let mut c = true;
    let mut table = String::new();
    for &rate in &RATES {
        let (n, r) = (p.cell(rate, "nominal"), p.cell(rate, "robust"));
        table.push_str(&format!(
            "\n    R={rate:.2}: NMAC nominal {:.2} robust {:.2}; min sep nominal {:.1} robust {:.1}",
            n.nmac_mean, r.nmac_mean, n.min_sep_mean, r.min_sep_mean
        ));
        if rate >= 0.35 {
            b &= r.nmac_mean <= n.nmac_mean;
            c &= r.min_sep_mean >= n.min_sep_mean;
        }
    }
    let (n95, r95) = (p.cell(0.95, "nominal"), p.cell(0.95, "robust"));
    b &= r95.nmac_mean < n95.nmac_mean;
    let in_budget = p.seconds <= 4.0 * 3600.0;
    let pass = a && b && c && in_budget;
    report(
        7,
        pass,
        &format!(
            "(a) {a} paired R=0 diff {mean_diff:+.2}, (b) {b}, (c) {c}, pipeline {:.0} s{table}",
            p.seconds
        ),
    );
    assert!(pass);
}

#[test]
fn c8_corruption_statistics() {
    let p = pipeline();
    let rate = 0.35;
    let mut pass = true;
    let mut detail = String::new();
    for tag in ["nominal", "robust"] {
        let cell = p.cell(rate, tag);
        let n = cell.observations as f64;
        let sigma = (n * rate * (1.0 - rate)).sqrt();
        let within = (cell.corrupted as f64 - n * rate).abs() <= 3.0 * sigma;
        pass &= within && cell.box_violations == 0 && cell.corrupted > 0;
        detail.push_str(&format!(
            " {tag}: {}/{} corrupted ({:.4}, 3 sigma {:.4}), {} outside the box;",
            cell.corrupted,
            cell.observations,
            cell.corrupted as f64 / n,
            3.0 * sigma / n,
            cell.box_violations
        ));
    }
    report(8, pass, detail.trim().trim_end_matches(';'));
    assert!(pass);
}

#[test]
fn c9_invariance_regulariser_shrinks_budget() {
    let p = pipeline();
    let pass = p.budget_regularised < p.budget_unregularised;
    report(
        9,
        pass,
        &format!("B with lambda_inv 0.01 = {:.4e}, with lambda_inv 0 = {:.4e}", p.budget_regularised, p.budget_unregularised),
    );
    assert!(pass);
}
