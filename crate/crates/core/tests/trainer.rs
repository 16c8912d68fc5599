//! Loss gradients, loss identities and small end-to-end training runs.

use rand::Rng;
use robsep_core::adversary::fo_perturbation;
use robsep_core::net::{Featurizer, NetConfig, Network};
use robsep_core::observation::{CorruptionBounds, StateMatrix};
use robsep_core::rng::stream;
use robsep_core::sim::Action;
use robsep_core::trainer::{
    ppo_losses, pretrain_nominal, robust_train, sample_loss, CurriculumSampler, LossTapes, RobustInit, RunOptions,
    Sample, TeacherBundle, TrainConfig, Transition,
};

fn random_state<R: Rng>(rng: &mut R) -> StateMatrix {
    let mut s = StateMatrix::ownship_only([2000.0, 2000.0, 0.3, 20.0, 8000.0, 0.0]);
    for j in 0..rng.random_range(0..=3) {
        s.rows[j + 1] = [
            2000.0 + rng.random_range(-400.0..400.0),
            2000.0 + rng.random_range(-400.0..400.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(8.0..35.0),
            rng.random_range(0.0..10_000.0),
            0.0,
        ];
        s.mask[j] = true;
    }
    s
}

fn transition(net: &Network, teacher: &Network, rng: &mut impl Rng) -> Transition {
    let clean = random_state(rng);
    let (_, g) = teacher.input_gradient(&clean).unwrap();
    let xi = fo_perturbation(&clean, &g, &CorruptionBounds::default()).unwrap().xi;
    let corrupted = rng.random_bool(0.5);
    let obs = if corrupted { xi } else { clean };
    let action = Action::from_index(rng.random_range(0..3)).unwrap();
    let logp = net.evaluate(&obs).unwrap().dist().log_prob(action) + rng.random_range(-0.1..0.1);
    Transition {
        id: 0,
        obs,
        clean,
        xi,
        teacher_probs: Some(teacher.evaluate(&clean).unwrap().dist().probs),
        action,
        logp_old: logp,
        value_old: 0.0,
        reward: 0.0,
        command: 0.0,
        next_true: clean,
        corrupted,
        done: false,
    }
}

fn nets(seed: u64) -> (Network, Network) {
    let a = Network::new(NetConfig::default(), Featurizer::default(), &mut stream(&[seed, 1])).unwrap();
    let b = Network::new(NetConfig::default(), Featurizer::default(), &mut stream(&[seed, 2])).unwrap();
    (a, b)
}

#[test]
fn total_loss_gradient_matches_central_differences() {
    let cfg = TrainConfig { lambda_inv: 0.3, lambda_anchor: 0.2, ..Default::default() };
    let mut rng = stream(&[10]);
    for trial in 0..20 {
        let (net, teacher) = nets(trial);
        let t = transition(&net, &teacher, &mut rng);
        let s = Sample { transition: &t, advantage: rng.random_range(-2.0..2.0), ret: rng.random_range(-1.0..1.0) };
        let mut tapes = LossTapes::new(&net);
        let mut g = vec![0.0; net.num_params()];
        sample_loss(&net, &mut tapes, &s, &cfg, Some(&mut g)).unwrap();
        let loss = |n: &Network| sample_loss(n, &mut LossTapes::new(n), &s, &cfg, None).unwrap().total;
        let idx: Vec<usize> = (0..40).map(|_| rng.random_range(0..net.num_params())).collect();
        let (mut an, mut fd) = (Vec::new(), Vec::new());
        for &i in &idx {
            let h = 1e-5;
            let (mut p, mut m) = (net.clone(), net.clone());
            p.params_mut()[i] += h;
            m.params_mut()[i] -= h;
            fd.push((loss(&p) - loss(&m)) / (2.0 * h));
            an.push(g[i]);
        }
        let diff: f64 = an.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = an.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        assert!(diff / scale < 1e-4, "trial {trial}: {}", diff / scale);
    }
}

#[test]
fn loss_identities() {
    let (net, teacher) = nets(3);
    let mut rng = stream(&[11]);
    let cfg = TrainConfig::default();
    let mut ts: Vec<Transition> = (0..16).map(|_| transition(&net, &teacher, &mut rng)).collect();
    // theta = theta_old
    for t in &mut ts {
        t.logp_old = net.evaluate(&t.obs).unwrap().dist().log_prob(t.action);
    }
    let adv: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let samples: Vec<Sample> = ts.iter().zip(&adv).map(|(t, a)| Sample { transition: t, advantage: *a, ret: 0.0 }).collect();
    let l = ppo_losses(&net, &samples, &cfg).unwrap();
    let mean_adv = adv.iter().sum::<f64>() / 16.0;
    assert!((l.clip + mean_adv).abs() < 1e-12);

    // policy equals teacher and Xi = S
    for t in &mut ts {
        t.xi = t.clean;
        t.teacher_probs = Some(net.evaluate(&t.clean).unwrap().dist().probs);
    }
    let samples: Vec<Sample> = ts.iter().map(|t| Sample { transition: t, advantage: 0.5, ret: 0.0 }).collect();
    let l = ppo_losses(&net, &samples, &cfg).unwrap();
    assert!(l.inv.abs() < 1e-15 && l.anchor.abs() < 1e-12);

    // no regularisers reduces to the plain PPO objective
    let plain = TrainConfig { lambda_inv: 0.0, lambda_anchor: 0.0, ..Default::default() };
    let l = ppo_losses(&net, &samples, &plain).unwrap();
    assert_eq!(l.total, l.clip + 0.5 * l.value - 0.1 * l.entropy);
}

#[test]
fn curriculum_frequencies_within_three_sigma() {
    let rates = TrainConfig::default().curriculum;
    let mut c = CurriculumSampler::new(&rates, 99);
    let n = 10_000;
    let mut counts = vec![0usize; rates.len()];
    for _ in 0..n {
        counts[c.next_index()] += 1;
    }
    let p = 1.0 / rates.len() as f64;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for k in counts {
        assert!((k as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{k}");
    }
}

fn small_cfg() -> TrainConfig {
    TrainConfig { total_steps: 1024, batch_size: 256, minibatch_size: 64, epochs: 2, ..Default::default() }
}

#[test]
fn training_is_deterministic_and_teacher_frozen() {
    let opts = RunOptions::new(5);
    let a = pretrain_nominal(&opts, &small_cfg()).unwrap();
    let b = pretrain_nominal(&opts, &small_cfg()).unwrap();
    assert_eq!(a.net.digest(), b.net.digest());
    assert_eq!(a.log, b.log.clone());
    let teacher = TeacherBundle::freeze(a.net);
    let digest = teacher.digest().to_string();
    let r = robust_train(&opts, &small_cfg(), &teacher).unwrap();
    assert_eq!(teacher.net().digest(), digest);
    assert!(r.log.iter().all(|l| l.loss_total.is_finite() && l.budget >= 0.0));
    assert!(r.log.iter().any(|l| l.rate > 0.0 && l.corrupted_fraction > 0.0));
}

#[test]
fn zero_rate_without_regularisers_reproduces_nominal_updates() {
    let opts = RunOptions::new(8);
    let cfg = TrainConfig { total_steps: 256 * 5, ..small_cfg() };
    let nominal = pretrain_nominal(&opts, &cfg).unwrap();
    let teacher = TeacherBundle::freeze(nominal.net.clone());
    let robust_cfg =
        TrainConfig { fixed_rate: Some(0.0), lambda_inv: 0.0, lambda_anchor: 0.0, robust_init: RobustInit::Fresh, ..cfg };
    let robust = robust_train(&opts, &robust_cfg, &teacher).unwrap();
    assert_eq!(nominal.log.len(), robust.log.len());
    for (a, b) in nominal.log.iter().zip(&robust.log) {
        assert_eq!(a.digest, b.digest);
    }
}
