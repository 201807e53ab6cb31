use std::collections::BTreeSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rttp_core::mixdpo::{
    dpo_grad, dpo_loss, mean_loss, synthetic_dataset, train, DpoConfig, PolicyKind, PreferencePair,
    SyntheticPoolConfig, TabularPolicy,
};

fn random_policy(rng: &mut ChaCha8Rng, contexts: usize, vocab: usize, scale: f64) -> TabularPolicy {
    TabularPolicy::from_logits(
        (0..contexts).map(|i| format!("x{i}")).collect(),
        (0..vocab).map(|i| format!("y{i}")).collect(),
        (0..contexts * vocab).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// Logits on a 1/1024 grid, so shifting a row by a small power of two is exact.
fn grid_policy(rng: &mut ChaCha8Rng, contexts: usize, vocab: usize) -> TabularPolicy {
    TabularPolicy::from_logits(
        (0..contexts).map(|i| format!("x{i}")).collect(),
        (0..vocab).map(|i| format!("y{i}")).collect(),
        (0..contexts * vocab)
            .map(|_| rng.random_range(-5120i32..5120) as f64 / 1024.0)
            .collect(),
    )
    .unwrap()
}

fn random_pair(rng: &mut ChaCha8Rng, contexts: usize, vocab: usize) -> PreferencePair {
    let win = rng.random_range(0..vocab);
    let mut lose = rng.random_range(0..vocab - 1);
    if lose >= win {
        lose += 1;
    }
    PreferencePair {
        context: rng.random_range(0..contexts),
        win,
        lose,
        policy_kind: PolicyKind::OnPolicy,
    }
}

#[test]
fn loss_is_invariant_to_row_shifts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let theta = grid_policy(&mut rng, 3, 6);
        let reference = grid_policy(&mut rng, 3, 6);
        let pair = random_pair(&mut rng, 3, 6);
        let beta = rng.random_range(0.01..2.0);
        let base = dpo_loss(&theta, &reference, &pair, beta).unwrap();

        let shift = |p: &TabularPolicy, row: usize, by: f64| {
            let mut logits = p.logits().to_vec();
            for z in &mut logits[row * 6..(row + 1) * 6] {
                *z += by;
            }
            TabularPolicy::from_logits(p.contexts().to_vec(), p.vocabulary().to_vec(), logits).unwrap()
        };
        let t2 = shift(&theta, pair.context, 8.0);
        let r2 = shift(&reference, pair.context, -4.0);
        assert_eq!(dpo_loss(&t2, &reference, &pair, beta).unwrap(), base);
        assert_eq!(dpo_loss(&theta, &r2, &pair, beta).unwrap(), base);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-5;
    for _ in 0..30 {
        let theta = random_policy(&mut rng, 2, 5, 2.0);
        let reference = random_policy(&mut rng, 2, 5, 2.0);
        let batch: Vec<_> = (0..3).map(|_| random_pair(&mut rng, 2, 5)).collect();
        let beta = rng.random_range(0.05..1.0);
        let grad = dpo_grad(&theta, &reference, &batch, beta).unwrap();
        for i in 0..theta.logits().len() {
            let bump = |d: f64| {
                let mut l = theta.logits().to_vec();
                l[i] += d;
                let p = TabularPolicy::from_logits(theta.contexts().to_vec(), theta.vocabulary().to_vec(), l).unwrap();
                mean_loss(&p, &reference, &batch, beta).unwrap()
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            let scale = grad[i].abs().max(fd.abs());
            if scale > 1e-12 {
                assert!((grad[i] - fd).abs() / scale <= 1e-6, "entry {i}: {} vs {fd}", grad[i]);
            } else {
                assert!(fd.abs() < 1e-10);
            }
        }
    }
}

#[test]
fn on_policy_only_training_leaves_other_rows_fixed() {
    let (ds, policy) = synthetic_dataset(&SyntheticPoolConfig {
        n_contexts: 60,
        vocab_size: 20,
        ..SyntheticPoolConfig::default()
    })
    .unwrap();
    let cfg = DpoConfig {
        off_policy_fraction: 0.0,
        ..DpoConfig::default()
    };
    let out = train(&policy, &policy, &ds.pool, &cfg, 100).unwrap();
    let trained: BTreeSet<usize> = ds.pool.on_policy.iter().map(|p| p.context).collect();
    let mut untouched = 0;
    for c in 0..policy.n_contexts() {
        if !trained.contains(&c) {
            assert_eq!(out.policy.row(c), policy.row(c), "context {c}");
            untouched += 1;
        }
    }
    assert!(untouched > 0);
    assert!(out.metrics.iter().all(|m| m.off_fraction == 0.0));
}

#[test]
fn zero_margin_loss_is_ln2() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let theta = random_policy(&mut rng, 4, 7, 30.0);
        let pair = random_pair(&mut rng, 4, 7);
        let l = dpo_loss(&theta, &theta, &pair, rng.random_range(0.001..10.0)).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() <= 1e-12);
    }
}
