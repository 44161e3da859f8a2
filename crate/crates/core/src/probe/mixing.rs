use ndarray::{Array1, Array2, Axis};

use super::mlp::{Prediction, ProbeModel};
use crate::error::{Error, Result};

/// Per-layer inputs for layers 1..=L, all with the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    layers: Vec<Array2<f64>>,
}

impl LayerStack {
    pub fn new(layers: Vec<Array2<f64>>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidArgument("no layers to mix".into()))?
            .dim();
        for l in &layers {
            if l.ncols() != first.1 {
                return Err(Error::DimensionMismatch {
                    expected: first.1,
                    actual: l.ncols(),
                });
            }
            if l.nrows() != first.0 {
                return Err(Error::InvalidArgument(format!(
                    "layers disagree on row count: {} vs {}",
                    first.0,
                    l.nrows()
                )));
            }
        }
        Ok(LayerStack { layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn rows(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn layers(&self) -> &[Array2<f64>] {
        &self.layers
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        LayerStack {
            layers: self.layers.iter().map(|l| l.select(Axis(0), idx)).collect(),
        }
    }
}

/// A probe fed with `lambda * sum_l softmax(a)[l] * h[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingProbeModel {
    pub probe: ProbeModel,
    /// one unnormalised weight per layer 1..=L
    pub a: Array1<f64>,
    pub lambda: f64,
}

impl MixingProbeModel {
    /// Uniform initial mixing (a = 0) with unit scale.
    pub fn new(probe: ProbeModel, num_layers: usize) -> Self {
        MixingProbeModel {
            probe,
            a: Array1::zeros(num_layers),
            lambda: 1.0,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.a.len()
    }

    /// s = softmax(a)
    pub fn weights(&self) -> Array1<f64> {
        let max = self.a.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let e = self.a.mapv(|v| (v - max).exp());
        let sum = e.sum();
        e / sum
    }

    pub fn num_parameters(&self) -> usize {
        self.probe.num_parameters() + self.a.len() + 1
    }

    pub(crate) fn check_input(&self, x: &LayerStack) -> Result<()> {
        if x.num_layers() != self.num_layers() {
            return Err(Error::DimensionMismatch {
                expected: self.num_layers(),
                actual: x.num_layers(),
            });
        }
        self.probe.check_input(&x.layers[0].view())
    }

    /// Returns `(lambda * sum s_l h_l, sum s_l h_l)`.
    pub(crate) fn mix(&self, x: &LayerStack) -> (Array2<f64>, Array2<f64>) {
        let s = self.weights();
        let mut unscaled = Array2::zeros(x.layers[0].raw_dim());
        for (layer, &w) in x.layers.iter().zip(s.iter()) {
            unscaled.scaled_add(w, layer);
        }
        (&unscaled * self.lambda, unscaled)
    }

    pub fn mixed_inputs(&self, x: &LayerStack) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(self.mix(x).0)
    }

    pub fn predict(&self, x: &LayerStack) -> Result<Prediction> {
        let mixed = self.mixed_inputs(x)?;
        self.probe.predict(&mixed.view())
    }

    pub(crate) fn loss(&self, x: &LayerStack, labels: &[usize]) -> f64 {
        let (mixed, _) = self.mix(x);
        let logits = self.probe.forward(&mixed.view(), None).logits;
        ProbeModel::cross_entropy(&logits, labels)
    }

    /// Gradients in the order: W1, b1, W2, b2, a, lambda.
    pub(crate) fn loss_and_grads(
        &self,
        x: &LayerStack,
        labels: &[usize],
        mask: Option<&Array2<f64>>,
    ) -> (f64, Vec<Vec<f64>>) {
        let (mixed, unscaled) = self.mix(x);
        let (loss, grads) = self.probe.loss_and_grads(&mixed.view(), labels, mask);
        let d_mixed = &grads.input;

        let d_lambda = (d_mixed * &unscaled).sum();
        let s = self.weights();
        let d_s: Array1<f64> = x
            .layers
            .iter()
            .map(|layer| self.lambda * (d_mixed * layer).sum())
            .collect();
        let s_dot = s.dot(&d_s);
        let d_a = &s * &(&d_s - s_dot);

        let mut flat = grads.flatten();
        flat.push(d_a.to_vec());
        flat.push(vec![d_lambda]);
        (loss, flat)
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.probe.params_mut();
        p.push(self.a.as_slice_mut().expect("standard layout"));
        p.push(std::slice::from_mut(&mut self.lambda));
        p
    }
}
