//! Evaluation metrics and the per-run evaluation report.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which classes enter the macro average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassUniverse {
    /// Only classes that occur in the gold labels.
    #[default]
    GoldPresent,
    /// Every class of the task.
    All,
}

fn check_aligned(predictions: &[usize], gold: &[usize], num_classes: usize) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::EmptyResult("no predictions to score".into()));
    }
    if predictions.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            actual: predictions.len(),
        });
    }
    if let Some(&bad) = predictions.iter().chain(gold).find(|&&c| c >= num_classes) {
        return Err(Error::InvalidArgument(format!(
            "class {bad} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

/// Counts indexed `[gold][predicted]`.
pub fn confusion_matrix(predictions: &[usize], gold: &[usize], num_classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &g) in predictions.iter().zip(gold) {
        m[g][p] += 1;
    }
    m
}

/// Per-class F1, `None` for classes outside the chosen universe.
pub fn per_class_f1(
    predictions: &[usize],
    gold: &[usize],
    num_classes: usize,
    universe: ClassUniverse,
) -> Result<Vec<Option<f64>>> {
    check_aligned(predictions, gold, num_classes)?;
    let m = confusion_matrix(predictions, gold, num_classes);
    Ok((0..num_classes)
        .map(|c| {
            let tp = m[c][c];
            let gold_count: u64 = m[c].iter().sum();
            let pred_count: u64 = m.iter().map(|row| row[c]).sum();
            if universe == ClassUniverse::GoldPresent && gold_count == 0 {
                return None;
            }
            let precision = if pred_count == 0 { 0.0 } else { tp as f64 / pred_count as f64 };
            let recall = if gold_count == 0 { 0.0 } else { tp as f64 / gold_count as f64 };
            Some(if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            })
        })
        .collect())
}

pub fn macro_f1(
    predictions: &[usize],
    gold: &[usize],
    num_classes: usize,
    universe: ClassUniverse,
) -> Result<f64> {
    let scores: Vec<f64> = per_class_f1(predictions, gold, num_classes, universe)?
        .into_iter()
        .flatten()
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn accuracy(predictions: &[usize], gold: &[usize]) -> f64 {
    let correct = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    correct as f64 / predictions.len().max(1) as f64
}

pub fn per_language_accuracy<S: AsRef<str>>(
    predictions: &[usize],
    gold: &[usize],
    languages: &[S],
) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for ((p, g), lang) in predictions.iter().zip(gold).zip(languages) {
        let entry = counts.entry(lang.as_ref()).or_default();
        entry.0 += usize::from(p == g);
        entry.1 += 1;
    }
    counts
        .into_iter()
        .map(|(lang, (correct, total))| (lang.to_string(), correct as f64 / total as f64))
        .collect()
}

/// Natural-log KL divergence of `s` from the uniform distribution over `s.len()` entries.
pub fn kl_uniform(s: &[f64]) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::InvalidDistribution("empty".into()));
    }
    if s.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidDistribution("entries must be finite and non-negative".into()));
    }
    let total: f64 = s.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("sums to {total}")));
    }
    let n = s.len() as f64;
    Ok(s
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (p * n).ln())
        .sum::<f64>()
        .max(0.0))
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Where the probe's input came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerSource {
    Native,
    Layer(usize),
    Mix,
}

impl fmt::Display for LayerSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSource::Native => f.write_str("native"),
            LayerSource::Layer(l) => write!(f, "layer_{l}"),
            LayerSource::Mix => f.write_str("mix"),
        }
    }
}

impl FromStr for LayerSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(LayerSource::Native),
            "mix" => Ok(LayerSource::Mix),
            _ => s
                .strip_prefix("layer_")
                .and_then(|l| l.parse().ok())
                .map(LayerSource::Layer)
                .ok_or_else(|| Error::InvalidArgument(format!("bad layer source {s:?}"))),
        }
    }
}

impl Serialize for LayerSource {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerSource {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSummary {
    /// softmax of the per-layer scalars, layers 1..=L
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub language: String,
    pub sentence_id: u64,
    pub gold: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_id: String,
    pub model_id: String,
    pub layer_source: LayerSource,
    pub class_labels: Vec<String>,
    pub class_universe: ClassUniverse,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub num_test: usize,
    pub per_language_accuracy: BTreeMap<String, f64>,
    /// `[gold][predicted]`
    pub confusion: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingSummary>,
    #[serde(default)]
    pub predictions: Vec<PredictionRecord>,
}

pub const REPORT_CSV_HEADER: &str = "task_id,model_id,layer_source,macro_f1,accuracy,num_test,kl";

impl EvalReport {
    /// Scores `predictions` against the gold labels of `records`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_predictions(
        task_id: &str,
        model_id: &str,
        layer_source: LayerSource,
        class_labels: &[String],
        universe: ClassUniverse,
        records: Vec<PredictionRecord>,
        mixing: Option<MixingSummary>,
    ) -> Result<Self> {
        if (layer_source == LayerSource::Mix) != mixing.is_some() {
            return Err(Error::InvalidArgument(
                "mixing weights are reported exactly for mixing probes".into(),
            ));
        }
        let k = class_labels.len();
        let pred: Vec<usize> = records.iter().map(|r| r.predicted).collect();
        let gold: Vec<usize> = records.iter().map(|r| r.gold).collect();
        let langs: Vec<&str> = records.iter().map(|r| r.language.as_str()).collect();
        Ok(EvalReport {
            task_id: task_id.to_string(),
            model_id: model_id.to_string(),
            layer_source,
            class_labels: class_labels.to_vec(),
            class_universe: universe,
            macro_f1: macro_f1(&pred, &gold, k, universe)?,
            accuracy: accuracy(&pred, &gold),
            num_test: records.len(),
            per_language_accuracy: per_language_accuracy(&pred, &gold, &langs),
            confusion: confusion_matrix(&pred, &gold, k),
            mixing,
            predictions: records,
        })
    }

    /// Macro-F1 recomputed over the stored predictions whose language passes `keep`.
    pub fn macro_f1_where(&self, keep: impl Fn(&str) -> bool) -> Option<f64> {
        let (pred, gold): (Vec<usize>, Vec<usize>) = self
            .predictions
            .iter()
            .filter(|r| keep(&r.language))
            .map(|r| (r.predicted, r.gold))
            .unzip();
        macro_f1(&pred, &gold, self.class_labels.len(), self.class_universe).ok()
    }

    pub fn csv_row(&self) -> String {
        let kl = self.mixing.as_ref().map(|m| m.kl.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.task_id, self.model_id, self.layer_source, self.macro_f1, self.accuracy, self.num_test, kl
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{REPORT_CSV_HEADER}\n{}\n", self.csv_row())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_predictor() {
        let g = [0, 1, 2, 1];
        assert_eq!(macro_f1(&g, &g, 3, ClassUniverse::GoldPresent).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_binary_case() {
        // gold [A,A,B], predicted [A,B,B]: both classes have F1 = 2/3
        let f1 = macro_f1(&[0, 1, 1], &[0, 0, 1], 2, ClassUniverse::GoldPresent).unwrap();
        assert_abs_diff_eq!(f1, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn total_miss_over_gold_classes() {
        let f1 = macro_f1(&[1, 1], &[0, 0], 2, ClassUniverse::GoldPresent).unwrap();
        assert_eq!(f1, 0.0);
    }

    #[test]
    fn universe_flag_changes_denominator() {
        // majority class predicted everywhere, single-class gold
        let pred = [0, 0, 0];
        let gold = [0, 0, 0];
        assert_eq!(macro_f1(&pred, &gold, 2, ClassUniverse::GoldPresent).unwrap(), 1.0);
        assert_eq!(macro_f1(&pred, &gold, 2, ClassUniverse::All).unwrap(), 0.5);
    }

    #[test]
    fn invalid_inputs() {
        assert!(macro_f1(&[], &[], 2, ClassUniverse::All).is_err());
        assert!(macro_f1(&[0], &[0, 1], 2, ClassUniverse::All).is_err());
        assert!(macro_f1(&[2], &[0], 2, ClassUniverse::All).is_err());
    }

    #[test]
    fn per_language_counts() {
        // eng: 2 of 3 correct; fra: 1 of 3 correct
        let pred = [0, 1, 1, 0, 0, 1];
        let gold = [0, 1, 0, 1, 1, 1];
        let langs = ["eng", "eng", "eng", "fra", "fra", "fra"];
        let acc = per_language_accuracy(&pred, &gold, &langs);
        assert_abs_diff_eq!(acc["eng"], 2.0 / 3.0);
        assert_abs_diff_eq!(acc["fra"], 1.0 / 3.0);
        assert_eq!(acc.len(), 2);
        let single = per_language_accuracy(&[1, 1], &[1, 1], &["spa", "spa"]);
        assert_eq!(single, BTreeMap::from([("spa".to_string(), 1.0)]));
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_uniform(&[0.25; 4]).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_uniform(&[1.0, 0.0]).unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
        let expected = 0.5 * 1.5f64.ln() + 2.0 * 0.25 * 0.75f64.ln();
        assert_abs_diff_eq!(kl_uniform(&[0.5, 0.25, 0.25]).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.05889, epsilon = 1e-5);
        assert!(kl_uniform(&[0.5, 0.6]).is_err());
        assert!(kl_uniform(&[-0.5, 1.5]).is_err());
        assert!(kl_uniform(&[]).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert_abs_diff_eq!(spearman(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0);
        assert_abs_diff_eq!(spearman(&[1., 2., 3.], &[1., 5., 9.]).unwrap(), 1.0);
        assert_eq!(spearman(&[1., 2., 3.], &[1., 1., 1.]), None);
        // ties get average ranks: y ranks [1.5, 1.5, 3]
        let r = spearman(&[1., 2., 3.], &[0., 0., 1.]).unwrap();
        assert_abs_diff_eq!(r, 0.8660254037844387, epsilon = 1e-12);
    }

    #[test]
    fn layer_source_strings() {
        for s in [LayerSource::Native, LayerSource::Layer(4), LayerSource::Mix] {
            assert_eq!(s.to_string().parse::<LayerSource>().unwrap(), s);
        }
        assert_eq!(serde_json::to_string(&LayerSource::Layer(2)).unwrap(), "\"layer_2\"");
    }

    #[test]
    fn report_consistency() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let records: Vec<PredictionRecord> = [(0, 0, "x"), (1, 0, "x"), (1, 1, "y")]
            .iter()
            .enumerate()
            .map(|(i, &(g, p, l))| PredictionRecord {
                language: l.into(),
                sentence_id: i as u64,
                gold: g,
                predicted: p,
            })
            .collect();
        let r = EvalReport::from_predictions(
            "T",
            "m",
            LayerSource::Native,
            &labels,
            ClassUniverse::GoldPresent,
            records,
            None,
        )
        .unwrap();
        assert_eq!(r.confusion.iter().flatten().sum::<u64>(), 3);
        assert_eq!(r.confusion, vec![vec![1, 0], vec![1, 1]]);
        assert_eq!(r.macro_f1_where(|l| l == "y"), Some(1.0));
        assert!(r.to_csv().starts_with(REPORT_CSV_HEADER));
        assert!(EvalReport::from_predictions(
            "T",
            "m",
            LayerSource::Mix,
            &labels,
            ClassUniverse::GoldPresent,
            r.predictions.clone(),
            None
        )
        .is_err());
    }
}
