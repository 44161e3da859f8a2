use crate::error::{Error, Result};
use crate::metrics::{ClassUniverse, EvalReport, LayerSource, PredictionRecord};
use crate::taskbuild::ProbingTask;

pub const BASELINE_MODEL_ID: &str = "baseline";

/// Most frequent label; ties go to the lowest class index.
pub fn majority_class(labels: &[usize], num_classes: usize) -> usize {
    let mut counts = vec![0usize; num_classes];
    for &y in labels {
        counts[y] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// Predicts the most frequent training class for every test example.
pub fn majority_baseline(task: &ProbingTask, universe: ClassUniverse) -> Result<EvalReport> {
    if task.train.is_empty() {
        return Err(Error::EmptyResult(format!("task {} has no training examples", task.id())));
    }
    let train: Vec<usize> = task.train.iter().map(|e| e.label_index).collect();
    let majority = majority_class(&train, task.num_classes());
    let records = task
        .test
        .iter()
        .map(|e| PredictionRecord {
            language: e.sentence_ref.language.clone(),
            sentence_id: e.sentence_ref.sentence_id,
            gold: e.label_index,
            predicted: majority,
        })
        .collect();
    EvalReport::from_predictions(
        task.id(),
        BASELINE_MODEL_ID,
        LayerSource::Native,
        &task.spec.class_labels,
        universe,
        records,
        None,
    )
}
