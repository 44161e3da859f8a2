use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// One hidden ReLU layer followed by a softmax output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    /// hidden x input
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// classes x hidden
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub class_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub classes: Vec<usize>,
    pub probabilities: Array2<f64>,
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) struct Forward {
    pub z1: Array2<f64>,
    /// post-ReLU, post-dropout activations
    pub hidden: Array2<f64>,
    pub logits: Array2<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ProbeGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// gradient with respect to the input rows
    pub input: Array2<f64>,
}

impl ProbeModel {
    /// Random init: hidden weights ~ N(0, 2/input_dim), output weights ~ N(0, 1/hidden), zero biases.
    pub fn new<R: Rng>(
        input_dim: usize,
        hidden_units: usize,
        class_labels: Vec<String>,
        rng: &mut R,
    ) -> Self {
        let classes = class_labels.len();
        let s1 = (2.0 / input_dim as f64).sqrt();
        let s2 = (1.0 / hidden_units as f64).sqrt();
        let w1 = Array2::from_shape_simple_fn((hidden_units, input_dim), || {
            s1 * rng.sample::<f64, _>(StandardNormal)
        });
        let w2 = Array2::from_shape_simple_fn((classes, hidden_units), || {
            s2 * rng.sample::<f64, _>(StandardNormal)
        });
        ProbeModel {
            w1,
            b1: Array1::zeros(hidden_units),
            w2,
            b2: Array1::zeros(classes),
            class_labels,
        }
    }

    pub fn zeros(input_dim: usize, hidden_units: usize, class_labels: Vec<String>) -> Self {
        let classes = class_labels.len();
        ProbeModel {
            w1: Array2::zeros((hidden_units, input_dim)),
            b1: Array1::zeros(hidden_units),
            w2: Array2::zeros((classes, hidden_units)),
            b2: Array1::zeros(classes),
            class_labels,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_units(&self) -> usize {
        self.w1.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.nrows()
    }

    /// `input*hidden + hidden*classes + hidden + classes`
    pub fn num_parameters(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub(crate) fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// `mask` multiplies the hidden activations (inverted dropout, already scaled).
    pub(crate) fn forward(&self, x: &ArrayView2<f64>, mask: Option<&Array2<f64>>) -> Forward {
        let z1 = x.dot(&self.w1.t()) + &self.b1;
        let mut hidden = z1.mapv(|v| v.max(0.0));
        if let Some(m) = mask {
            hidden *= m;
        }
        let logits = hidden.dot(&self.w2.t()) + &self.b2;
        Forward { z1, hidden, logits }
    }

    pub fn logits(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(self.forward(x, None).logits)
    }

    /// Softmax probabilities and argmax classes; no dropout.
    pub fn predict(&self, x: &ArrayView2<f64>) -> Result<Prediction> {
        let probabilities = softmax_rows(&self.logits(x)?);
        let classes = probabilities.rows().into_iter().map(argmax).collect();
        Ok(Prediction {
            classes,
            probabilities,
        })
    }

    /// Mean cross-entropy of `logits` against class indices.
    pub(crate) fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
        let total: f64 = logits
            .rows()
            .into_iter()
            .zip(labels)
            .map(|(row, &y)| {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let lse = max + row.mapv(|v| (v - max).exp()).sum().ln();
                lse - row[y]
            })
            .sum();
        total / labels.len() as f64
    }

    /// Loss and gradients of the mean cross-entropy over the batch.
    pub(crate) fn loss_and_grads(
        &self,
        x: &ArrayView2<f64>,
        labels: &[usize],
        mask: Option<&Array2<f64>>,
    ) -> (f64, ProbeGrads) {
        let fwd = self.forward(x, mask);
        let loss = Self::cross_entropy(&fwd.logits, labels);
        let n = labels.len() as f64;

        let mut d_logits = softmax_rows(&fwd.logits);
        for (mut row, &y) in d_logits.rows_mut().into_iter().zip(labels) {
            row[y] -= 1.0;
        }
        d_logits /= n;

        let w2 = d_logits.t().dot(&fwd.hidden);
        let b2 = d_logits.sum_axis(Axis(0));
        let mut d_hidden = d_logits.dot(&self.w2);
        if let Some(m) = mask {
            d_hidden *= m;
        }
        ndarray::Zip::from(&mut d_hidden)
            .and(&fwd.z1)
            .for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        let w1 = d_hidden.t().dot(x);
        let b1 = d_hidden.sum_axis(Axis(0));
        let input = d_hidden.dot(&self.w1);
        (loss, ProbeGrads { w1, b1, w2, b2, input })
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.w2].iter().all(|m| m.iter().all(|v| v.is_finite()))
            && [&self.b1, &self.b2].iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

impl ProbeGrads {
    pub(crate) fn flatten(self) -> Vec<Vec<f64>> {
        vec![
            self.w1.iter().copied().collect(),
            self.b1.to_vec(),
            self.w2.iter().copied().collect(),
            self.b2.to_vec(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn tie_goes_to_lowest_class() {
        let p = softmax_rows(&array![[2.0, 2.0]]);
        assert_eq!(p, array![[0.5, 0.5]]);
        assert_eq!(argmax(p.row(0)), 0);
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = ProbeModel::zeros(4, 3, labels(5));
        let x = array![[1.0, -2.0, 3.0, 0.5], [0.0, 0.0, 0.0, 9.0]];
        let pred = m.predict(&x.view()).unwrap();
        for v in pred.probabilities.iter() {
            assert_abs_diff_eq!(*v, 0.2, epsilon = 1e-15);
        }
        assert_eq!(pred.classes, vec![0, 0]);
    }

    #[test]
    fn softmax_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = ProbeModel::new(6, 4, labels(3), &mut rng);
        let x = Array2::from_shape_simple_fn((5, 6), || rng.sample::<f64, _>(StandardNormal));
        let pred = m.predict(&x.view()).unwrap();
        // direct evaluation: z = W2 relu(W1 x + b1) + b2, p = exp(z) / sum exp(z)
        for i in 0..5 {
            let mut z = [0.0; 3];
            for (c, zc) in z.iter_mut().enumerate() {
                let mut acc = m.b2[c];
                for h in 0..4 {
                    let mut pre = m.b1[h];
                    for j in 0..6 {
                        pre += m.w1[[h, j]] * x[[i, j]];
                    }
                    acc += m.w2[[c, h]] * pre.max(0.0);
                }
                *zc = acc;
            }
            let denom: f64 = z.iter().map(|v| v.exp()).sum();
            for (c, zc) in z.iter().enumerate() {
                assert_abs_diff_eq!(pred.probabilities[[i, c]], zc.exp() / denom, epsilon = 1e-12);
            }
            let row_sum: f64 = pred.probabilities.row(i).sum();
            assert_abs_diff_eq!(row_sum, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn parameter_count_for_mbert_sized_input() {
        let m = ProbeModel::zeros(768, 100, labels(4));
        assert_eq!(m.num_parameters(), 768 * 100 + 100 + 100 * 4 + 4);
        assert_eq!(m.num_parameters(), 77304);
    }

    #[test]
    fn dimension_mismatch() {
        let m = ProbeModel::zeros(3, 2, labels(2));
        assert!(matches!(
            m.predict(&array![[1.0, 2.0]].view()),
            Err(Error::DimensionMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn argmax_invariant_to_logit_shift() {
        let logits = array![[0.3, 1.2, -0.7], [5.0, 5.0, 1.0]];
        let shifted = &logits + 100.0;
        let a: Vec<usize> = softmax_rows(&logits).rows().into_iter().map(argmax).collect();
        let b: Vec<usize> = softmax_rows(&shifted).rows().into_iter().map(argmax).collect();
        assert_eq!(a, b);
    }
}
