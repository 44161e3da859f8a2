//! Exact t-SNE.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            seed: 0,
        }
    }
}

fn squared_distances(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Symmetrized input affinities `p_ij = (p_j|i + p_i|j) / 2n`, each conditional
/// row calibrated by binary search to the target perplexity.
pub fn joint_probabilities(x: &Array2<f64>, perplexity: f64) -> Result<Array2<f64>> {
    let n = x.nrows();
    if !(perplexity > 0.0) || (n as f64) < 3.0 * perplexity {
        return Err(Error::InvalidArgument(format!(
            "t-SNE with perplexity {perplexity} needs at least {} rows, got {n}",
            (3.0 * perplexity).ceil()
        )));
    }
    let dist = squared_distances(x);
    let target = perplexity.ln();
    let mut cond = Array2::zeros((n, n));
    for i in 0..n {
        let (mut beta, mut lo, mut hi) = (1.0, f64::NEG_INFINITY, f64::INFINITY);
        let mut row = vec![0.0; n];
        for _ in 0..100 {
            let min = (0..n).filter(|&j| j != i).map(|j| dist[[i, j]]).fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            for j in 0..n {
                row[j] = if j == i { 0.0 } else { (-(dist[[i, j]] - min) * beta).exp() };
                sum += row[j];
            }
            let mut entropy = 0.0;
            for (j, p) in row.iter_mut().enumerate() {
                *p /= sum;
                if j != i && *p > 0.0 {
                    entropy -= *p * p.ln();
                }
            }
            let diff = entropy - target;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
            }
        }
        for j in 0..n {
            cond[[i, j]] = row[j];
        }
    }
    let p = (&cond + &cond.t()) / (2.0 * n as f64);
    Ok(p.mapv(|v| v.max(1e-12)))
}

/// KL(P || Q) for the Student-t output affinities of `y`, and its gradient.
pub fn tsne_objective(p: &Array2<f64>, y: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = y.nrows();
    let mut num = Array2::zeros((n, n));
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = y.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = 1.0 / (1.0 + d);
            num[[i, j]] = v;
            num[[j, i]] = v;
            total += 2.0 * v;
        }
    }
    let mut kl = 0.0;
    let mut grad = Array2::zeros(y.dim());
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let q = (num[[i, j]] / total).max(1e-300);
            kl += p[[i, j]] * (p[[i, j]] / q).ln();
            let coef = 4.0 * (p[[i, j]] - num[[i, j]] / total) * num[[i, j]];
            for c in 0..y.ncols() {
                grad[[i, c]] += coef * (y[[i, c]] - y[[j, c]]);
            }
        }
    }
    (kl, grad)
}

/// Exact O(n^2) t-SNE to two dimensions with momentum and adaptive gains.
pub fn tsne(x: &Array2<f64>, config: &TsneConfig) -> Result<Array2<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("t-SNE input holds non-finite values".into()));
    }
    let p = joint_probabilities(x, config.perplexity)?;
    let n = x.nrows();
    let mut rng = rng_for(config.seed, "tsne/init");
    let mut y = Array2::from_shape_simple_fn((n, 2), || 1e-4 * rng.sample::<f64, _>(StandardNormal));
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let exaggerated = &p * config.early_exaggeration;

    for it in 0..config.iterations {
        let early = it < config.exaggeration_iterations;
        let (_, grad) = tsne_objective(if early { &exaggerated } else { &p }, &y);
        let momentum = if early { 0.5 } else { 0.8 };
        ndarray::Zip::from(&mut gains)
            .and(&grad)
            .and(&update)
            .for_each(|g, &dy, &u| {
                *g = if (dy > 0.0) != (u > 0.0) { *g + 0.2 } else { *g * 0.8 };
                *g = g.max(0.01);
            });
        update = momentum * &update - config.learning_rate * (&gains * &grad);
        y += &update;
        let mean = y.mean_axis(Axis(0)).expect("n > 0");
        y -= &mean;
    }
    Ok(y)
}

/// 2-D points of one layer space, keyed by language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub points: Vec<(f64, f64)>,
    pub color_key: Vec<String>,
    pub model_id: String,
    pub layer: String,
}

impl Projection2D {
    pub fn new(points: &Array2<f64>, color_key: Vec<String>, model_id: &str, layer: &str) -> Result<Self> {
        if points.ncols() != 2 || points.nrows() != color_key.len() {
            return Err(Error::DimensionMismatch {
                expected: color_key.len(),
                actual: points.nrows(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("projection holds non-finite coordinates".into()));
        }
        Ok(Projection2D {
            points: points.rows().into_iter().map(|r| (r[0], r[1])).collect(),
            color_key,
            model_id: model_id.to_string(),
            layer: layer.to_string(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("language,x,y\n");
        for ((x, y), k) in self.points.iter().zip(&self.color_key) {
            out.push_str(&format!("{k},{x},{y}\n"));
        }
        out
    }

    pub fn to_svg(&self) -> String {
        super::svg::scatter(&format!("{} {}", self.model_id, self.layer), &self.points, &self.color_key)
    }
}
