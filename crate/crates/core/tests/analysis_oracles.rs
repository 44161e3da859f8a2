use std::collections::BTreeSet;

use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use typoprobe::analysis::{
    assemble_reports, joint_probabilities, pca, summary_table, tsne, tsne_objective, ReportGrouping, TsneConfig,
};
use typoprobe::metrics::{ClassUniverse, EvalReport, LayerSource, PredictionRecord};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

fn pairwise(x: &Array2<f64>) -> Vec<f64> {
    let n = x.nrows();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            out.push((&x.row(i) - &x.row(j)).mapv(|v| v * v).sum().sqrt());
        }
    }
    out
}

#[test]
fn pca_recovers_axis_aligned_covariance() {
    // four points whose sample covariance is diag(4, 1)
    let s = (3.0f64 / 2.0).sqrt();
    let x = array![[2.0 * s, 0.0], [-2.0 * s, 0.0], [0.0, s], [0.0, -s]];
    let p = pca(&x, 2).unwrap();
    assert!((p.explained_variance[0] - 4.0).abs() < 1e-9);
    assert!((p.explained_variance[1] - 1.0).abs() < 1e-9);
    assert!((p.components[[0, 0]] - 1.0).abs() < 1e-6);
    assert!(p.components[[0, 1]].abs() < 1e-6);
    assert!((p.components[[1, 1]] - 1.0).abs() < 1e-6);
    assert!((p.explained_variance_ratio.sum() - 1.0).abs() < 1e-12);
}

#[test]
fn full_rank_pca_preserves_distances() {
    let x = gaussian(30, 6, 1);
    let p = pca(&x, 6).unwrap();
    for (a, b) in pairwise(&x).iter().zip(pairwise(&p.projected)) {
        assert!((a - b).abs() < 1e-9);
    }
    let back = p.reconstruct();
    assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-9));
}

#[test]
fn pca_reconstructs_points_on_a_subspace() {
    // rank-2 data embedded in 5 dimensions plus an offset
    let coords = gaussian(40, 2, 2);
    let basis = gaussian(2, 5, 3);
    let x = coords.dot(&basis) + &array![1.0, -2.0, 0.5, 3.0, 0.0];
    let p = pca(&x, 2).unwrap();
    let back = p.reconstruct();
    assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-8));
    assert!(p.explained_variance_ratio.sum() > 1.0 - 1e-12);
}

#[test]
fn pca_ignores_row_order() {
    let x = gaussian(25, 4, 4);
    let mut order: Vec<usize> = (0..25).collect();
    order.reverse();
    order.swap(3, 17);
    let shuffled = x.select(ndarray::Axis(0), &order);
    let a = pca(&x, 3).unwrap();
    let b = pca(&shuffled, 3).unwrap();
    assert!(a.components.iter().zip(&b.components).all(|(u, v)| (u - v).abs() < 1e-9));
    for (i, &src) in order.iter().enumerate() {
        for k in 0..3 {
            assert!((b.projected[[i, k]] - a.projected[[src, k]]).abs() < 1e-9);
        }
    }
}

#[test]
fn tsne_gradient_matches_finite_differences() {
    let x = gaussian(15, 4, 5);
    let p = joint_probabilities(&x, 4.0).unwrap();
    let y = gaussian(15, 2, 6);
    let (_, grad) = tsne_objective(&p, &y);
    let h = 1e-6;
    for i in 0..15 {
        for d in 0..2 {
            let mut plus = y.clone();
            let mut minus = y.clone();
            plus[[i, d]] += h;
            minus[[i, d]] -= h;
            let numeric = (tsne_objective(&p, &plus).0 - tsne_objective(&p, &minus).0) / (2.0 * h);
            let rel = (numeric - grad[[i, d]]).abs() / numeric.abs().max(grad[[i, d]].abs()).max(1e-6);
            assert!(rel < 1e-4, "({i},{d}): {} vs {numeric}", grad[[i, d]]);
        }
    }
}

// Conditional row at precision `beta`, with its Shannon entropy.
fn conditional_row(d2: &[f64], i: usize, beta: f64) -> (Vec<f64>, f64) {
    let w: Vec<f64> = d2.iter().enumerate().map(|(j, d)| if j == i { 0.0 } else { (-d * beta).exp() }).collect();
    let z: f64 = w.iter().sum();
    let row: Vec<f64> = w.iter().map(|v| v / z).collect();
    let h = -row.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    (row, h)
}

#[test]
fn tsne_affinities_match_bisection_oracle() {
    let n = 40;
    let x = gaussian(n, 3, 7);
    let perplexity = 10.0f64;
    let p = joint_probabilities(&x, perplexity).unwrap();
    let mut cond = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let d2: Vec<f64> = (0..n).map(|j| (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum()).collect();
        // entropy falls as beta grows; bisect in log space
        let (mut lo, mut hi) = (-30.0f64, 30.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if conditional_row(&d2, i, mid.exp()).1 > perplexity.ln() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (row, h) = conditional_row(&d2, i, lo.exp());
        assert!((h - perplexity.ln()).abs() < 1e-9);
        for j in 0..n {
            cond[[i, j]] = row[j];
        }
    }
    let oracle = (&cond + &cond.t()) / (2.0 * n as f64);
    assert!((p.sum() - 1.0).abs() < 1e-9);
    for (a, b) in p.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

fn silhouette(y: &Array2<f64>, labels: &[usize]) -> f64 {
    let n = y.nrows();
    let dist = |i: usize, j: usize| (&y.row(i) - &y.row(j)).mapv(|v| v * v).sum().sqrt();
    let mut total = 0.0;
    for i in 0..n {
        let mean_to = |c: usize| {
            let others: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == c).collect();
            others.iter().map(|&j| dist(i, j)).sum::<f64>() / others.len() as f64
        };
        let a = mean_to(labels[i]);
        let b = mean_to(1 - labels[i]);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

#[test]
fn tsne_separates_distant_clusters_deterministically() {
    let mut x = gaussian(100, 10, 8);
    let labels: Vec<usize> = (0..100).map(|i| i / 50).collect();
    for i in 50..100 {
        x[[i, 0]] += 20.0;
    }
    let config = TsneConfig { seed: 3, ..TsneConfig::default() };
    let y = tsne(&x, &config).unwrap();
    assert_eq!(y.dim(), (100, 2));
    assert!(silhouette(&y, &labels) > 0.5);
    let again = tsne(&x, &config).unwrap();
    assert!(y.iter().zip(&again).all(|(a, b)| a.to_bits() == b.to_bits()));
}

fn report(task: &str, model: &str, source: LayerSource, preds: &[(&str, usize, usize)]) -> EvalReport {
    let records = preds
        .iter()
        .enumerate()
        .map(|(i, &(l, g, p))| PredictionRecord { language: l.into(), sentence_id: i as u64, gold: g, predicted: p })
        .collect();
    let labels = ["x".to_string(), "y".to_string(), "z".to_string()];
    let mixing = (source == LayerSource::Mix).then(|| typoprobe::metrics::MixingSummary {
        weights: vec![0.5, 0.25, 0.25],
        lambda: 1.0,
        kl: 0.0589,
    });
    EvalReport::from_predictions(task, model, source, &labels, ClassUniverse::GoldPresent, records, mixing).unwrap()
}

fn random_preds(rng: &mut ChaCha8Rng) -> Vec<(&'static str, usize, usize)> {
    let langs = ["ukr", "swe", "pol", "spa"];
    (0..40)
        .map(|_| (langs[rng.gen_range(0..4)], rng.gen_range(0..3), rng.gen_range(0..3)))
        .collect()
}

#[test]
fn summary_has_one_row_per_task_and_baseline_last() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let models = ["baseline", "m1", "m2", "m3", "m4"];
    let mut reports = Vec::new();
    for t in 0..25 {
        for m in models {
            reports.push(report(&format!("{t}A"), m, LayerSource::Native, &random_preds(&mut rng)));
        }
        reports.push(report(&format!("{t}A"), "m1", LayerSource::Layer(2), &random_preds(&mut rng)));
    }
    let table = summary_table(&reports, "baseline").unwrap();
    let csv = table.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 26);
    assert_eq!(lines[0], "task,m1,m2,m3,m4,baseline");
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 6);
    }
    for r in reports.iter().filter(|r| r.layer_source == LayerSource::Native) {
        assert_eq!(table.cell(&r.task_id, &r.model_id), Some(r.macro_f1));
        let row = lines.iter().find(|l| l.starts_with(&format!("{},", r.task_id))).unwrap();
        let col = models.iter().position(|m| *m == r.model_id).unwrap();
        let col = if col == 0 { 5 } else { col };
        assert_eq!(row.split(',').nth(col).unwrap().parse::<f64>().unwrap(), r.macro_f1);
    }
}

// Macro-F1 over classes present in the gold labels, from scratch.
fn oracle_macro_f1(preds: &[(&str, usize, usize)]) -> f64 {
    let gold: BTreeSet<usize> = preds.iter().map(|p| p.1).collect();
    let mut sum = 0.0;
    for &c in &gold {
        let tp = preds.iter().filter(|p| p.1 == c && p.2 == c).count() as f64;
        let pred = preds.iter().filter(|p| p.2 == c).count() as f64;
        let actual = preds.iter().filter(|p| p.1 == c).count() as f64;
        if tp > 0.0 {
            sum += 2.0 * tp / (pred + actual);
        }
    }
    sum / gold.len() as f64
}

#[test]
fn subset_table_refilters_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut inputs = Vec::new();
    let mut reports = Vec::new();
    for (t, source) in [("1A", LayerSource::Native), ("1A", LayerSource::Mix), ("2A", LayerSource::Native)] {
        let preds = random_preds(&mut rng);
        reports.push(report(t, "m", source, &preds));
        inputs.push(preds);
    }
    let subset: BTreeSet<String> = ["ukr".to_string(), "pol".to_string()].into();
    let grouping = ReportGrouping { language_subset: Some(subset.clone()), ..ReportGrouping::default() };
    let dir = tempfile::tempdir().unwrap();
    let out = assemble_reports(&reports, &grouping, dir.path()).unwrap();
    assert!(out.files.iter().all(|f| f.exists()));
    let csv = std::fs::read_to_string(dir.path().join("tables/subset.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, preds) in rows.iter().zip(&inputs) {
        let cols: Vec<&str> = row.split(',').collect();
        let inside: Vec<_> = preds.iter().copied().filter(|p| subset.contains(p.0)).collect();
        let outside: Vec<_> = preds.iter().copied().filter(|p| !subset.contains(p.0)).collect();
        assert!((cols[3].parse::<f64>().unwrap() - oracle_macro_f1(&inside)).abs() < 1e-12);
        assert!((cols[4].parse::<f64>().unwrap() - oracle_macro_f1(&outside)).abs() < 1e-12);
    }
    let mixing = std::fs::read_to_string(dir.path().join("layers/m_mixing.csv")).unwrap();
    assert_eq!(mixing, "task,lambda,kl,weights\n1A,1,0.0589,0.5;0.25;0.25\n");
}
