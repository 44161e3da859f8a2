use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::mixing::{LayerStack, MixingProbeModel};
use super::mlp::{Prediction, ProbeModel};
use super::ProbeConfig;
use crate::error::{Error, Result};
use crate::metrics::{macro_f1, ClassUniverse};
use crate::seed::rng_for;

/// Row-selectable model input.
pub trait Batch: Sized {
    fn rows(&self) -> usize;
    fn select_rows(&self, idx: &[usize]) -> Self;
}

impl Batch for Array2<f64> {
    fn rows(&self) -> usize {
        self.nrows()
    }

    fn select_rows(&self, idx: &[usize]) -> Self {
        self.select(Axis(0), idx)
    }
}

impl Batch for LayerStack {
    fn rows(&self) -> usize {
        LayerStack::rows(self)
    }

    fn select_rows(&self, idx: &[usize]) -> Self {
        self.select(idx)
    }
}

/// What the training loop needs from a model.
pub trait Trainable: Clone {
    type Input: Batch;
    /// Names of the parameter groups, in gradient order.
    const GROUPS: &'static [&'static str];

    fn check_input(&self, x: &Self::Input) -> Result<()>;
    fn hidden_units(&self) -> usize;
    fn num_classes(&self) -> usize;
    /// Mean cross-entropy without dropout.
    fn loss(&self, x: &Self::Input, labels: &[usize]) -> f64;
    /// Mean cross-entropy and gradients, one vector per parameter group.
    fn loss_and_grads(
        &self,
        x: &Self::Input,
        labels: &[usize],
        dropout_mask: Option<&Array2<f64>>,
    ) -> (f64, Vec<Vec<f64>>);
    fn predict(&self, x: &Self::Input) -> Result<Prediction>;
    /// Parameter groups in the same order as the gradients.
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
}

impl Trainable for ProbeModel {
    type Input = Array2<f64>;
    const GROUPS: &'static [&'static str] = &["W1", "b1", "W2", "b2"];

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        ProbeModel::check_input(self, &x.view())
    }

    fn hidden_units(&self) -> usize {
        ProbeModel::hidden_units(self)
    }

    fn num_classes(&self) -> usize {
        ProbeModel::num_classes(self)
    }

    fn loss(&self, x: &Array2<f64>, labels: &[usize]) -> f64 {
        ProbeModel::cross_entropy(&self.forward(&x.view(), None).logits, labels)
    }

    fn loss_and_grads(
        &self,
        x: &Array2<f64>,
        labels: &[usize],
        dropout_mask: Option<&Array2<f64>>,
    ) -> (f64, Vec<Vec<f64>>) {
        let (loss, grads) = ProbeModel::loss_and_grads(self, &x.view(), labels, dropout_mask);
        (loss, grads.flatten())
    }

    fn predict(&self, x: &Array2<f64>) -> Result<Prediction> {
        ProbeModel::predict(self, &x.view())
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        ProbeModel::params_mut(self)
    }
}

impl Trainable for MixingProbeModel {
    type Input = LayerStack;
    const GROUPS: &'static [&'static str] = &["W1", "b1", "W2", "b2", "a", "lambda"];

    fn check_input(&self, x: &LayerStack) -> Result<()> {
        MixingProbeModel::check_input(self, x)
    }

    fn hidden_units(&self) -> usize {
        self.probe.hidden_units()
    }

    fn num_classes(&self) -> usize {
        self.probe.num_classes()
    }

    fn loss(&self, x: &LayerStack, labels: &[usize]) -> f64 {
        MixingProbeModel::loss(self, x, labels)
    }

    fn loss_and_grads(
        &self,
        x: &LayerStack,
        labels: &[usize],
        dropout_mask: Option<&Array2<f64>>,
    ) -> (f64, Vec<Vec<f64>>) {
        MixingProbeModel::loss_and_grads(self, x, labels, dropout_mask)
    }

    fn predict(&self, x: &LayerStack) -> Result<Prediction> {
        MixingProbeModel::predict(self, x)
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        MixingProbeModel::params_mut(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_macro_f1\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.val_macro_f1));
        }
        out
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

/// Inverted dropout mask: kept units are scaled by 1/(1-rate).
fn dropout_mask<R: Rng>(rng: &mut R, rows: usize, units: usize, rate: f64) -> Option<Array2<f64>> {
    if rate == 0.0 {
        return None;
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    Some(Array2::from_shape_simple_fn((rows, units), || {
        if rng.gen::<f64>() < keep {
            scale
        } else {
            0.0
        }
    }))
}

fn check_labels(labels: &[usize], rows: usize, num_classes: usize, what: &str) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            actual: labels.len(),
        });
    }
    if rows == 0 {
        return Err(Error::EmptyResult(format!("{what} set is empty")));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::InvalidArgument(format!(
            "{what} label {bad} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

/// Mini-batch Adam with per-epoch validation and early stopping on validation
/// loss. Returns the parameters of the best validation epoch.
pub fn fit<M: Trainable>(
    mut model: M,
    train_x: &M::Input,
    train_y: &[usize],
    val_x: &M::Input,
    val_y: &[usize],
    config: &ProbeConfig,
) -> Result<(M, TrainingLog)> {
    config.validate()?;
    model.check_input(train_x)?;
    model.check_input(val_x)?;
    let k = model.num_classes();
    check_labels(train_y, train_x.rows(), k, "training")?;
    check_labels(val_y, val_x.rows(), k, "validation")?;
    if train_y.iter().collect::<BTreeSet<_>>().len() < 2 {
        return Err(Error::InvalidArgument("training set holds a single class".into()));
    }

    let mut shuffle_rng = rng_for(config.seed, "shuffle");
    let mut dropout_rng = rng_for(config.seed, "dropout");
    let mut adam = Adam::new(
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_epsilon,
    );

    let n = train_x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, model.clone());
    let mut log = TrainingLog::default();
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(config.batch_size) {
            let x = train_x.select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| train_y[i]).collect();
            let mask = dropout_mask(&mut dropout_rng, idx.len(), model.hidden_units(), config.dropout_rate);
            let (loss, grads) = model.loss_and_grads(&x, &y, mask.as_ref());
            loss_sum += loss * idx.len() as f64;
            adam.update(model.params_mut(), &grads);
        }

        let val_loss = model.loss(val_x, val_y);
        if !val_loss.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "validation loss diverged at epoch {epoch}"
            )));
        }
        let val_pred = model.predict(val_x)?;
        let val_macro_f1 = macro_f1(&val_pred.classes, val_y, k, ClassUniverse::GoldPresent)?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            val_loss,
            val_macro_f1,
        });

        if val_loss < best.0 {
            best = (val_loss, model.clone());
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log.stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }
    Ok((best.1, log))
}

#[derive(Debug, Clone)]
pub struct TrainedProbe {
    pub model: ProbeModel,
    pub log: TrainingLog,
}

#[derive(Debug, Clone)]
pub struct TrainedMixingProbe {
    pub model: MixingProbeModel,
    pub log: TrainingLog,
}

pub fn train_probe(
    train_x: &Array2<f64>,
    train_y: &[usize],
    val_x: &Array2<f64>,
    val_y: &[usize],
    class_labels: &[String],
    config: &ProbeConfig,
) -> Result<TrainedProbe> {
    if val_x.ncols() != train_x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: train_x.ncols(),
            actual: val_x.ncols(),
        });
    }
    let mut init = rng_for(config.seed, "init");
    let model = ProbeModel::new(train_x.ncols(), config.hidden_units, class_labels.to_vec(), &mut init);
    let (model, log) = fit(model, train_x, train_y, val_x, val_y, config)?;
    Ok(TrainedProbe { model, log })
}

/// Trains a probe over a learned scalar mix of layers 1..=L (L >= 2).
pub fn train_mixing_probe(
    train_x: &LayerStack,
    train_y: &[usize],
    val_x: &LayerStack,
    val_y: &[usize],
    class_labels: &[String],
    config: &ProbeConfig,
) -> Result<TrainedMixingProbe> {
    let layers = train_x.num_layers();
    if layers < 2 {
        return Err(Error::InvalidArgument(format!(
            "mixing needs at least 2 layers, got {layers}"
        )));
    }
    if val_x.num_layers() != layers || val_x.dim() != train_x.dim() {
        return Err(Error::DimensionMismatch {
            expected: train_x.dim(),
            actual: val_x.dim(),
        });
    }
    let mut init = rng_for(config.seed, "init");
    let probe = ProbeModel::new(train_x.dim(), config.hidden_units, class_labels.to_vec(), &mut init);
    let model = MixingProbeModel::new(probe, layers);
    let (model, log) = fit(model, train_x, train_y, val_x, val_y, config)?;
    Ok(TrainedMixingProbe { model, log })
}
