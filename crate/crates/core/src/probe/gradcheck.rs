//! Central finite-difference check of the analytic gradients.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::mixing::{LayerStack, MixingProbeModel};
use super::mlp::ProbeModel;
use super::train::Trainable;
use crate::seed::rng_for;

/// Differences below this magnitude count as exact agreement.
const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckResult {
    pub max_rel_error: f64,
    /// (group name, max relative error within the group)
    pub per_group: Vec<(String, f64)>,
}

/// Compares analytic gradients of the batch loss against
/// `(L(p + eps) - L(p - eps)) / 2eps` for every parameter. The dropout mask,
/// if any, is held fixed so the loss is a deterministic function of the parameters.
pub fn grad_check<M: Trainable>(
    model: &M,
    x: &M::Input,
    labels: &[usize],
    epsilon: f64,
    dropout_mask: Option<&Array2<f64>>,
) -> GradCheckResult {
    let (_, analytic) = model.loss_and_grads(x, labels, dropout_mask);
    let loss_at = |m: &M| m.loss_and_grads(x, labels, dropout_mask).0;

    let mut per_group = Vec::new();
    let mut probe = model.clone();
    for (g, grad) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (i, &a) in grad.iter().enumerate() {
            let original = probe.params_mut()[g][i];
            probe.params_mut()[g][i] = original + epsilon;
            let plus = loss_at(&probe);
            probe.params_mut()[g][i] = original - epsilon;
            let minus = loss_at(&probe);
            probe.params_mut()[g][i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(ABS_FLOOR);
            worst = worst.max(rel);
        }
        per_group.push((M::GROUPS[g].to_string(), worst));
    }
    let max_rel_error = per_group.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    GradCheckResult {
        max_rel_error,
        per_group,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckCase {
    pub kind: &'static str,
    pub input_dim: usize,
    pub hidden_units: usize,
    pub num_classes: usize,
    pub num_layers: usize,
    pub batch_size: usize,
    pub with_dropout: bool,
    pub result: GradCheckResult,
}

fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

fn random_probe<R: Rng>(rng: &mut R, dim: usize, hidden: usize, classes: usize) -> ProbeModel {
    let labels = (0..classes).map(|c| format!("c{c}")).collect();
    let mut m = ProbeModel::new(dim, hidden, labels, rng);
    m.b1 = Array1::from_shape_simple_fn(hidden, || 0.1 * rng.sample::<f64, _>(StandardNormal));
    m.b2 = Array1::from_shape_simple_fn(classes, || 0.1 * rng.sample::<f64, _>(StandardNormal));
    m
}

fn random_mask<R: Rng>(rng: &mut R, rows: usize, hidden: usize) -> Option<Array2<f64>> {
    rng.gen_bool(0.5).then(|| {
        Array2::from_shape_simple_fn((rows, hidden), || if rng.gen_bool(0.5) { 2.0 } else { 0.0 })
    })
}

/// `configs` random plain probes and `configs` random mixing probes with input
/// dim <= 16, hidden <= 8, classes <= 4 and 2 <= L <= 6.
pub fn random_gradcheck_suite(configs: usize, seed: u64, epsilon: f64) -> Vec<GradCheckCase> {
    let mut rng = rng_for(seed, "gradcheck");
    let mut cases = Vec::with_capacity(2 * configs);
    for _ in 0..configs {
        let dim = rng.gen_range(1..=16);
        let hidden = rng.gen_range(1..=8);
        let classes = rng.gen_range(2..=4);
        let rows = rng.gen_range(1..=8);
        let model = random_probe(&mut rng, dim, hidden, classes);
        let x = normal_matrix(&mut rng, rows, dim, 1.0);
        let y: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..classes)).collect();
        let mask = random_mask(&mut rng, rows, hidden);
        cases.push(GradCheckCase {
            kind: "probe",
            input_dim: dim,
            hidden_units: hidden,
            num_classes: classes,
            num_layers: 0,
            batch_size: rows,
            with_dropout: mask.is_some(),
            result: grad_check(&model, &x, &y, epsilon, mask.as_ref()),
        });
    }
    for _ in 0..configs {
        let dim = rng.gen_range(1..=16);
        let hidden = rng.gen_range(1..=8);
        let classes = rng.gen_range(2..=4);
        let layers = rng.gen_range(2..=6);
        let rows = rng.gen_range(1..=8);
        let mut model = MixingProbeModel::new(random_probe(&mut rng, dim, hidden, classes), layers);
        model.a = Array1::from_shape_simple_fn(layers, || rng.sample::<f64, _>(StandardNormal));
        model.lambda = rng.gen_range(0.5..1.5);
        let stack = LayerStack::new((0..layers).map(|_| normal_matrix(&mut rng, rows, dim, 1.0)).collect())
            .expect("consistent shapes");
        let y: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..classes)).collect();
        let mask = random_mask(&mut rng, rows, hidden);
        cases.push(GradCheckCase {
            kind: "mixing",
            input_dim: dim,
            hidden_units: hidden,
            num_classes: classes,
            num_layers: layers,
            batch_size: rows,
            with_dropout: mask.is_some(),
            result: grad_check(&model, &stack, &y, epsilon, mask.as_ref()),
        });
    }
    cases
}
