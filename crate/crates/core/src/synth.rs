//! Synthetic embedding sets with a planted class signal.
//!
//! Every sentence vector at layer `l` is
//!
//! ```text
//! alpha * w(l) * u[class] + offset * v[lang] + noise,   noise ~ N(0, sigma^2 I)
//! ```
//!
//! with seeded unit directions `u` per class and `v` per language. Languages are
//! grouped into consecutive (train, test) pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::catalog::{Category, LanguagePair, TaskSpec};
use crate::embedstore::{EmbeddingHeader, EmbeddingSet};
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::taskbuild::{LabeledExample, SentenceRef, UnsplitTask};

pub const SYNTH_MODEL_ID: &str = "synth";
pub const SYNTH_TASK_ID: &str = "SYN";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerProfile {
    Constant,
    /// `w(l) = rate^l`
    Decay(f64),
    /// signal only at this layer (1-based)
    SingleLayer(usize),
}

impl LayerProfile {
    pub fn weight(&self, layer: usize) -> f64 {
        match *self {
            LayerProfile::Constant => 1.0,
            LayerProfile::Decay(rate) => rate.powi(layer as i32),
            LayerProfile::SingleLayer(l) => f64::from(u8::from(l == layer)),
        }
    }
}

impl fmt::Display for LayerProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerProfile::Constant => f.write_str("constant"),
            LayerProfile::Decay(r) => write!(f, "decay:{r}"),
            LayerProfile::SingleLayer(l) => write!(f, "single:{l}"),
        }
    }
}

impl FromStr for LayerProfile {
    type Err = Error;

    /// `constant`, `decay:<rate>` or `single:<layer>`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad layer profile {s:?}"));
        match s.split_once(':') {
            None if s == "constant" => Ok(LayerProfile::Constant),
            Some(("decay", r)) => r.parse().map(LayerProfile::Decay).map_err(|_| bad()),
            Some(("single", l)) => l.parse().map(LayerProfile::SingleLayer).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl Serialize for LayerProfile {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerProfile {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLanguage {
    pub code: String,
    pub class_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub model_id: String,
    pub task_id: String,
    /// Consecutive entries form (train, test) pairs.
    pub languages: Vec<SyntheticLanguage>,
    pub dim: usize,
    pub num_layers: usize,
    pub sentences_per_language: usize,
    pub signal_strength: f64,
    pub noise_sigma: f64,
    pub layer_profile: LayerProfile,
    pub subspace_offset: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// `num_languages` languages `s1, s2, ...`; pair `p` (0-based) gets class `c{p % num_classes}`,
    /// shared by both of its languages.
    pub fn with_languages(num_languages: usize, num_classes: usize) -> Vec<SyntheticLanguage> {
        (0..num_languages)
            .map(|i| SyntheticLanguage {
                code: format!("s{}", i + 1),
                class_label: format!("c{}", (i / 2) % num_classes.max(1)),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        let safe = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
        if !safe(&self.model_id) || !safe(&self.task_id) {
            return fail("model and task ids must be non-empty and alphanumeric".into());
        }
        if self.languages.is_empty() || !self.languages.len().is_multiple_of(2) {
            return fail(format!("need an even, non-zero number of languages, got {}", self.languages.len()));
        }
        let mut codes: Vec<&str> = self.languages.iter().map(|l| l.code.as_str()).collect();
        codes.sort_unstable();
        codes.dedup();
        if codes.len() != self.languages.len() {
            return fail("language codes must be distinct".into());
        }
        if self.dim == 0 || self.num_layers == 0 || self.sentences_per_language == 0 {
            return fail("dim, num_layers and sentences_per_language must be positive".into());
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return fail(format!("signal strength must be >= 0, got {}", self.signal_strength));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise sigma must be > 0, got {}", self.noise_sigma));
        }
        if !self.subspace_offset.is_finite() {
            return fail("subspace offset must be finite".into());
        }
        match self.layer_profile {
            LayerProfile::SingleLayer(l) if l == 0 || l > self.num_layers => {
                fail(format!("signal layer {l} outside 1..={}", self.num_layers))
            }
            LayerProfile::Decay(r) if !r.is_finite() => fail("decay rate must be finite".into()),
            _ => Ok(()),
        }
    }

    pub fn pairs(&self) -> Vec<LanguagePair> {
        self.languages
            .chunks(2)
            .enumerate()
            .map(|(i, p)| LanguagePair::new(i + 1, &p[0].code, &p[1].code).expect("distinct codes"))
            .collect()
    }

    pub fn task_spec(&self) -> Result<TaskSpec> {
        let labels: BTreeMap<String, String> = self
            .languages
            .iter()
            .map(|l| (l.code.clone(), l.class_label.clone()))
            .collect();
        TaskSpec::from_labels(&self.task_id, "synthetic planted feature", Category::WO, &self.pairs(), &labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub sets: BTreeMap<String, EmbeddingSet>,
    pub task: UnsplitTask,
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Array1<f64> {
    loop {
        let v = Array1::from_shape_simple_fn(dim, || rng.sample::<f64, _>(StandardNormal));
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

/// Sentence ids of the generated sets: `1..=sentences_per_language` in every language.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let task_spec = spec.task_spec()?;
    let (n, d, layers) = (spec.sentences_per_language, spec.dim, spec.num_layers);

    let class_dirs: Vec<Array1<f64>> = task_spec
        .class_labels
        .iter()
        .map(|c| unit_vector(&mut rng_for(spec.seed, &format!("synth/class/{c}")), d))
        .collect();

    let mut sets = BTreeMap::new();
    for lang in &spec.languages {
        let class = task_spec.label_of[&lang.code];
        let lang_dir = unit_vector(&mut rng_for(spec.seed, &format!("synth/lang/{}", lang.code)), d);
        let mut noise_rng = rng_for(spec.seed, &format!("synth/noise/{}", lang.code));
        let mut mats = Vec::with_capacity(layers);
        for l in 1..=layers {
            let mean = spec.signal_strength * spec.layer_profile.weight(l) * &class_dirs[class]
                + spec.subspace_offset * &lang_dir;
            let mut m = Array2::<f32>::zeros((n, d));
            for mut row in m.rows_mut() {
                for (out, mu) in row.iter_mut().zip(mean.iter()) {
                    let eps: f64 = noise_rng.sample(StandardNormal);
                    *out = (mu + spec.noise_sigma * eps) as f32;
                }
            }
            mats.push(m);
        }
        let header = EmbeddingHeader {
            model_id: spec.model_id.clone(),
            language: lang.code.clone(),
            num_sentences: n,
            sentence_ids: (1..=n as u64).collect(),
            num_layers: layers,
            layer_dims: vec![d; layers],
            has_layer0: false,
            has_native: true,
            native_dim: d,
            dtype: "f32".into(),
            endianness: "LE".into(),
            extra: BTreeMap::from([
                ("layer_profile".to_string(), serde_json::json!(spec.layer_profile.to_string())),
                ("signal_strength".to_string(), serde_json::json!(spec.signal_strength)),
                ("noise_sigma".to_string(), serde_json::json!(spec.noise_sigma)),
                ("seed".to_string(), serde_json::json!(spec.seed)),
            ]),
        };
        let native = mats.last().cloned();
        let set = EmbeddingSet { header, layers: mats, native };
        set.validate()?;
        sets.insert(lang.code.clone(), set);
    }

    let examples = |code: &str| -> Vec<LabeledExample> {
        (1..=n as u64)
            .map(|id| LabeledExample {
                sentence_ref: SentenceRef { language: code.to_string(), sentence_id: id },
                label_index: task_spec.label_of[code],
                text: format!("synthetic sentence {id}"),
            })
            .collect()
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for pair in &task_spec.included_pairs {
        train.extend(examples(&pair.train_lang));
        test.extend(examples(&pair.test_lang));
    }
    Ok(SyntheticData {
        sets,
        task: UnsplitTask { spec: task_spec, train, test },
    })
}
