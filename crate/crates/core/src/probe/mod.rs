//! Probing classifiers.
//!
//! [`ProbeModel`] is a one-hidden-layer MLP (ReLU, softmax output) trained with
//! Adam on cross-entropy against one-hot targets. [`MixingProbeModel`] puts a
//! learned scalar mix of layers 1..=L in front of it:
//!
//! ```text
//! s = softmax(a)
//! h = lambda * sum_l s[l] * h[l]
//! ```
//!
//! Everything is computed in f64; embeddings are promoted on load.

mod adam;
mod baseline;
mod checkpoint;
mod gradcheck;
mod mixing;
mod mlp;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::Adam;
pub use baseline::{majority_baseline, majority_class, BASELINE_MODEL_ID};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointMeta, CheckpointModel};
pub use gradcheck::{grad_check, random_gradcheck_suite, GradCheckCase, GradCheckResult};
pub use mixing::{LayerStack, MixingProbeModel};
pub use mlp::{softmax_rows, Prediction, ProbeModel};
pub use train::{
    fit, train_mixing_probe, train_probe, Batch, EpochRecord, Trainable, TrainedMixingProbe, TrainedProbe,
    TrainingLog,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub hidden_units: usize,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden_units: 100,
            dropout_rate: 0.5,
            batch_size: 32,
            max_epochs: 20,
            patience: 5,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.hidden_units == 0 || self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return fail("hidden_units, batch_size, max_epochs and patience must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must lie in [0, 1)");
        }
        if self.patience > self.max_epochs {
            return fail("patience cannot exceed max_epochs");
        }
        if !(self.learning_rate > 0.0) || !(self.adam_epsilon > 0.0) {
            return fail("learning_rate and adam_epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}
