use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use typoprobe::metrics::{kl_uniform, macro_f1, spearman, ClassUniverse};

// Per-class precision/recall from scratch, averaged over the chosen classes.
fn reference_macro_f1(pred: &[usize], gold: &[usize], k: usize, all: bool) -> f64 {
    let mut total = 0.0;
    let mut counted = 0;
    for c in 0..k {
        let tp = pred.iter().zip(gold).filter(|(p, g)| **p == c && **g == c).count() as f64;
        let fp = pred.iter().zip(gold).filter(|(p, g)| **p == c && **g != c).count() as f64;
        let fn_ = pred.iter().zip(gold).filter(|(p, g)| **p != c && **g == c).count() as f64;
        if !all && tp + fn_ == 0.0 {
            continue;
        }
        counted += 1;
        if tp > 0.0 {
            total += 2.0 * tp / (2.0 * tp + fp + fn_);
        }
    }
    total / counted as f64
}

#[test]
fn macro_f1_matches_reference_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let k = rng.gen_range(2..=6);
        let n = rng.gen_range(1..=60);
        let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        for (universe, all) in [(ClassUniverse::GoldPresent, false), (ClassUniverse::All, true)] {
            let ours = macro_f1(&pred, &gold, k, universe).unwrap();
            let oracle = reference_macro_f1(&pred, &gold, k, all);
            assert!((ours - oracle).abs() < 1e-12, "{ours} vs {oracle}");
        }
    }
}

#[test]
fn macro_f1_hand_cases() {
    assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], 3, ClassUniverse::GoldPresent).unwrap(), 1.0);
    // constant prediction of the majority of a 3:1 split
    let f = macro_f1(&[0, 0, 0, 0], &[0, 0, 0, 1], 2, ClassUniverse::GoldPresent).unwrap();
    assert!((f - (6.0 / 7.0) / 2.0).abs() < 1e-12);
    // an absent class counts as zero only under the full universe
    let g = macro_f1(&[0, 0], &[0, 0], 3, ClassUniverse::All).unwrap();
    assert!((g - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn kl_hand_values() {
    assert_eq!(kl_uniform(&[0.25; 4]).unwrap(), 0.0);
    let one_hot = kl_uniform(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
    assert!((one_hot - 6f64.ln()).abs() < 1e-12);
    let two = kl_uniform(&[0.75, 0.25]).unwrap();
    let expected = 0.75 * (0.75f64 / 0.5).ln() + 0.25 * (0.25f64 / 0.5).ln();
    assert!((two - expected).abs() < 1e-12);
    assert!(kl_uniform(&[0.5, 0.6]).is_err());
    assert!(kl_uniform(&[]).is_err());
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let c: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    c / (vx * vy).sqrt()
}

#[test]
fn spearman_hand_values() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert!((spearman(&x, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!((spearman(&x, &[5.0, 3.0, 2.0, 1.0, 0.5]).unwrap() + 1.0).abs() < 1e-12);
    // no ties: 1 - 6 Σd² / (n(n²-1))
    let y = [3.0, 1.0, 2.0, 5.0, 4.0];
    let d2 = 4.0 + 1.0 + 1.0 + 1.0 + 1.0;
    assert!((spearman(&x, &y).unwrap() - (1.0 - 6.0 * d2 / 120.0)).abs() < 1e-12);
    assert_eq!(spearman(&x, &[1.0; 5]), None);
}

#[test]
fn spearman_with_ties_is_pearson_of_average_ranks() {
    let x = [1.0, 2.0, 2.0, 3.0, 7.0, 7.0, 7.0];
    let y = [0.3, 0.1, 0.2, 0.2, 0.9, 0.5, 0.5];
    let rx = [1.0, 2.5, 2.5, 4.0, 6.0, 6.0, 6.0];
    let ry = [4.0, 1.0, 2.5, 2.5, 7.0, 5.5, 5.5];
    assert!((spearman(&x, &y).unwrap() - pearson(&rx, &ry)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn kl_is_non_negative_and_bounded(raw in prop::collection::vec(0.0f64..10.0, 1..20)) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let s: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let kl = kl_uniform(&s).unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert!(kl <= (s.len() as f64).ln() + 1e-9);
    }

    #[test]
    fn macro_f1_lies_in_unit_interval(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..50)
    ) {
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        for u in [ClassUniverse::GoldPresent, ClassUniverse::All] {
            let f = macro_f1(&pred, &gold, 4, u).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn spearman_is_symmetric_and_bounded(
        xy in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..30)
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let Some(r) = spearman(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert!((r - spearman(&y, &x).unwrap()).abs() < 1e-12);
        }
    }
}
