//! Probing datasets: every sentence of a language carries that language's
//! feature value. Train languages and test languages never overlap; the
//! validation split is carved out of one side with a seeded uniform draw.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::catalog::TaskSpec;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const DEFAULT_VAL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceRef {
    pub language: String,
    pub sentence_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub sentence_ref: SentenceRef,
    pub label_index: usize,
    pub text: String,
}

impl LabeledExample {
    pub fn language(&self) -> &str {
        &self.sentence_ref.language
    }

    pub fn one_hot(&self, num_classes: usize) -> Vec<f64> {
        let mut v = vec![0.0; num_classes];
        v[self.label_index] = 1.0;
        v
    }
}

/// A labeled dataset before the validation split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnsplitTask {
    pub spec: TaskSpec,
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationSource {
    Test,
    Train,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbingTask {
    pub spec: TaskSpec,
    pub train: Vec<LabeledExample>,
    pub val: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

impl ProbingTask {
    pub fn id(&self) -> &str {
        &self.spec.feature_id
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes()
    }
}

fn label_corpus(spec: &TaskSpec, corpus: &Corpus) -> Vec<LabeledExample> {
    let label_index = spec.label_of[&corpus.language];
    corpus
        .sentences
        .iter()
        .map(|s| LabeledExample {
            sentence_ref: SentenceRef {
                language: corpus.language.clone(),
                sentence_id: s.id,
            },
            label_index,
            text: s.text.clone(),
        })
        .collect()
}

/// Labels every sentence of every included language with the language's class.
pub fn build_task(spec: &TaskSpec, corpora: &BTreeMap<String, Corpus>) -> Result<UnsplitTask> {
    let lookup = |lang: &str| {
        corpora
            .get(lang)
            .ok_or_else(|| Error::MissingCorpus(lang.to_string()))
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for pair in &spec.included_pairs {
        train.extend(label_corpus(spec, lookup(&pair.train_lang)?));
        test.extend(label_corpus(spec, lookup(&pair.test_lang)?));
    }
    Ok(UnsplitTask {
        spec: spec.clone(),
        train,
        test,
    })
}

/// Moves a seeded uniform `val_fraction` of one side into the validation set.
pub fn split_task(
    task: UnsplitTask,
    val_fraction: f64,
    source: ValidationSource,
    seed: u64,
) -> Result<ProbingTask> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let UnsplitTask { spec, train, test } = task;
    let side = match source {
        ValidationSource::Test => &test,
        ValidationSource::Train => &train,
    };
    if side.is_empty() {
        return Err(Error::EmptyResult(format!("task {} has no {source:?} examples", spec.feature_id)));
    }
    let n_val = (val_fraction * side.len() as f64).round() as usize;
    if n_val == 0 {
        return Err(Error::EmptyResult(format!(
            "validation fraction {val_fraction} of {} examples rounds to zero",
            side.len()
        )));
    }
    if n_val == side.len() {
        return Err(Error::EmptyResult(format!(
            "validation fraction {val_fraction} leaves no held-out {source:?} examples"
        )));
    }
    let mut rng = rng_for(seed, &format!("split/{}", spec.feature_id));
    let mut chosen = vec![false; side.len()];
    for i in index::sample(&mut rng, side.len(), n_val) {
        chosen[i] = true;
    }
    let split = |examples: Vec<LabeledExample>| {
        let (mut val, mut rest) = (Vec::new(), Vec::new());
        for (ex, is_val) in examples.into_iter().zip(&chosen) {
            if *is_val {
                val.push(ex);
            } else {
                rest.push(ex);
            }
        }
        (val, rest)
    };
    Ok(match source {
        ValidationSource::Test => {
            let (val, test) = split(test);
            ProbingTask { spec, train, val, test }
        }
        ValidationSource::Train => {
            let (val, train) = split(train);
            ProbingTask { spec, train, val, test }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSidecar {
    pub spec: TaskSpec,
    pub counts: SplitCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

pub fn split_path(dir: &Path, task_id: &str, split: &str) -> PathBuf {
    dir.join(format!("{task_id}.{split}.tsv"))
}

pub fn sidecar_path(dir: &Path, task_id: &str) -> PathBuf {
    dir.join(format!("{task_id}.json"))
}

fn clean_text(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}

fn write_examples(path: &Path, examples: &[LabeledExample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for ex in examples {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            ex.sentence_ref.language,
            ex.sentence_ref.sentence_id,
            ex.label_index,
            clean_text(&ex.text)
        )
        .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_examples(path: &Path, num_classes: usize) -> Result<Vec<LabeledExample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = lineno as u64 + 1;
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(4, '\t').collect();
        if parts.len() != 4 {
            return Err(Error::parse(path, line_no, "expected `language<TAB>sentence_id<TAB>label_index<TAB>text`"));
        }
        let sentence_id = parts[1]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad sentence id {:?}", parts[1])))?;
        let label_index: usize = parts[2]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad label index {:?}", parts[2])))?;
        if label_index >= num_classes {
            return Err(Error::parse(
                path,
                line_no,
                format!("label {label_index} out of range for {num_classes} classes"),
            ));
        }
        out.push(LabeledExample {
            sentence_ref: SentenceRef {
                language: parts[0].to_string(),
                sentence_id,
            },
            label_index,
            text: parts[3].to_string(),
        });
    }
    Ok(out)
}

/// Writes `<id>.{train,val,test}.tsv` and the `<id>.json` sidecar into `dir`.
pub fn write_task(dir: &Path, task: &ProbingTask) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let id = task.id();
    write_examples(&split_path(dir, id, "train"), &task.train)?;
    write_examples(&split_path(dir, id, "val"), &task.val)?;
    write_examples(&split_path(dir, id, "test"), &task.test)?;
    let sidecar = TaskSidecar {
        spec: task.spec.clone(),
        counts: SplitCounts {
            train: task.train.len(),
            val: task.val.len(),
            test: task.test.len(),
        },
    };
    let path = sidecar_path(dir, id);
    let json = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_task(dir: &Path, task_id: &str) -> Result<ProbingTask> {
    let path = sidecar_path(dir, task_id);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sidecar: TaskSidecar = serde_json::from_str(&text)?;
    let k = sidecar.spec.num_classes();
    let task = ProbingTask {
        train: read_examples(&split_path(dir, task_id, "train"), k)?,
        val: read_examples(&split_path(dir, task_id, "val"), k)?,
        test: read_examples(&split_path(dir, task_id, "test"), k)?,
        spec: sidecar.spec,
    };
    let counts = (task.train.len(), task.val.len(), task.test.len());
    let expected = (sidecar.counts.train, sidecar.counts.val, sidecar.counts.test);
    if counts != expected {
        return Err(Error::InvalidArgument(format!(
            "task {task_id}: split sizes {counts:?} disagree with sidecar {expected:?}"
        )));
    }
    Ok(task)
}
