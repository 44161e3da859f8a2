//! Typological feature catalog and probing-task selection.
//!
//! The catalog is loaded from a flat CSV snapshot of WALS with one row per
//! (feature, language) annotation. Selection keeps a language pair only when
//! both of its languages are annotated for a feature, and keeps a feature only
//! when enough languages survive and they disagree on the value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WALS_HEADER: [&str; 5] = [
    "feature_id",
    "feature_name",
    "category",
    "language_code",
    "value_label",
];

pub const DEFAULT_MIN_LANGS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    /// Nominal categories
    Nom,
    /// Verbal categories
    Verb,
    /// Word order
    WO,
    /// Simple clauses
    SC,
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Nom" => Ok(Category::Nom),
            "Verb" => Ok(Category::Verb),
            "WO" => Ok(Category::WO),
            "SC" => Ok(Category::SC),
            other => Err(format!("unknown category {other:?} (expected Nom, Verb, WO or SC)")),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::Nom => "Nom",
            Category::Verb => "Verb",
            Category::WO => "WO",
            Category::SC => "SC",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub id: String,
    pub name: String,
    pub category: Category,
    /// Language code -> value label.
    pub values: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    features: IndexMap<String, FeatureSpec>,
}

impl FeatureCatalog {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&FeatureSpec> {
        self.features.get(id)
    }

    /// Features in the order they first appear in the snapshot.
    pub fn features(&self) -> impl Iterator<Item = &FeatureSpec> {
        self.features.values()
    }

    pub fn value(&self, feature: &str, language: &str) -> Option<&str> {
        self.get(feature)?.values.get(language).map(String::as_str)
    }

    /// Adds a single annotation, creating the feature on first sight.
    pub fn insert(
        &mut self,
        id: &str,
        name: &str,
        category: Category,
        language: &str,
        value: &str,
    ) -> Result<()> {
        let feature = self
            .features
            .entry(id.to_string())
            .or_insert_with(|| FeatureSpec {
                id: id.to_string(),
                name: name.to_string(),
                category,
                values: BTreeMap::new(),
            });
        if feature.name != name || feature.category != category {
            return Err(Error::InvalidArgument(format!(
                "feature {id} appears with conflicting name or category"
            )));
        }
        if feature.values.contains_key(language) {
            return Err(Error::DuplicateAnnotation {
                feature: id.to_string(),
                language: language.to_string(),
            });
        }
        feature
            .values
            .insert(language.to_string(), value.to_string());
        Ok(())
    }
}

/// Loads a WALS snapshot in the `feature_id,feature_name,category,language_code,value_label`
/// layout. A zero-byte file yields an empty catalog.
pub fn load_wals(path: impl AsRef<Path>) -> Result<FeatureCatalog> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wals(&bytes, path)
}

pub fn parse_wals(bytes: &[u8], path: &Path) -> Result<FeatureCatalog> {
    let mut catalog = FeatureCatalog::default();
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(catalog);
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);

    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != WALS_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!("expected header {:?}, found {:?}", WALS_HEADER.join(","), found.join(",")),
        ));
    }

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != WALS_HEADER.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", WALS_HEADER.len(), record.len()),
            ));
        }
        let fields: Vec<&str> = record.iter().map(str::trim).collect();
        if let Some(i) = fields.iter().position(|f| f.is_empty()) {
            return Err(Error::parse(path, line, format!("empty {}", WALS_HEADER[i])));
        }
        let category: Category = fields[2]
            .parse()
            .map_err(|msg: String| Error::parse(path, line, msg))?;
        catalog.insert(fields[0], fields[1], category, fields[3], fields[4])?;
    }
    Ok(catalog)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LanguagePair {
    pub index: usize,
    pub train_lang: String,
    pub test_lang: String,
}

impl LanguagePair {
    pub fn new(index: usize, train_lang: &str, test_lang: &str) -> Result<Self> {
        if train_lang == test_lang {
            return Err(Error::InvalidArgument(format!(
                "pair {index}: train and test language are both {train_lang}"
            )));
        }
        Ok(LanguagePair {
            index,
            train_lang: train_lang.to_string(),
            test_lang: test_lang.to_string(),
        })
    }

    pub fn languages(&self) -> [&str; 2] {
        [&self.train_lang, &self.test_lang]
    }
}

/// The seven related-language pairs; the first language of each is used for
/// training and the second for testing.
pub fn default_pairs() -> Vec<LanguagePair> {
    [
        ("rus", "ukr"),
        ("dan", "swe"),
        ("ces", "pol"),
        ("por", "spa"),
        ("hin", "mar"),
        ("mkd", "bul"),
        ("ita", "fra"),
    ]
    .iter()
    .enumerate()
    .map(|(i, (train, test))| LanguagePair::new(i + 1, train, test).expect("distinct defaults"))
    .collect()
}

/// Parses a pair configuration: one `<index> <train_lang> <test_lang>` triple per
/// line, `#` starts a comment.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<LanguagePair>> {
    let mut pairs = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let line_no = lineno as u64 + 1;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::parse(path, line_no, "expected `<index> <train_lang> <test_lang>`"));
        }
        let index: usize = parts[0]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad pair index {:?}", parts[0])))?;
        if !seen.insert(index) {
            return Err(Error::parse(path, line_no, format!("duplicate pair index {index}")));
        }
        pairs.push(
            LanguagePair::new(index, parts[1], parts[2])
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?,
        );
    }
    pairs.sort_by_key(|p| p.index);
    Ok(pairs)
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<LanguagePair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub feature_id: String,
    pub feature_name: String,
    pub category: Category,
    pub included_pairs: Vec<LanguagePair>,
    pub class_labels: Vec<String>,
    pub label_of: BTreeMap<String, usize>,
}

impl TaskSpec {
    pub fn num_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn train_languages(&self) -> impl Iterator<Item = &str> {
        self.included_pairs.iter().map(|p| p.train_lang.as_str())
    }

    pub fn test_languages(&self) -> impl Iterator<Item = &str> {
        self.included_pairs.iter().map(|p| p.test_lang.as_str())
    }

    /// All included languages, train language before test language, pairs in index order.
    pub fn languages(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for pair in &self.included_pairs {
            for lang in pair.languages() {
                if !out.contains(&lang) {
                    out.push(lang);
                }
            }
        }
        out
    }

    /// Builds a spec from an explicit language→label assignment. Class labels are
    /// ordered by first occurrence over the pairs.
    pub fn from_labels(
        feature_id: &str,
        feature_name: &str,
        category: Category,
        pairs: &[LanguagePair],
        labels: &BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut pairs = pairs.to_vec();
        pairs.sort_by_key(|p| p.index);
        let mut class_labels: Vec<String> = Vec::new();
        let mut label_of = BTreeMap::new();
        for pair in &pairs {
            for lang in pair.languages() {
                let value = labels.get(lang).ok_or_else(|| {
                    Error::InvalidArgument(format!("no label for language {lang}"))
                })?;
                let idx = match class_labels.iter().position(|c| c == value) {
                    Some(i) => i,
                    None => {
                        class_labels.push(value.clone());
                        class_labels.len() - 1
                    }
                };
                label_of.insert(lang.to_string(), idx);
            }
        }
        Ok(TaskSpec {
            feature_id: feature_id.to_string(),
            feature_name: feature_name.to_string(),
            category,
            included_pairs: pairs,
            class_labels,
            label_of,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SelectionOutcome {
    Selected,
    TooFewLanguages { annotated: usize, required: usize },
    NoDiversity { value: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionLogEntry {
    pub feature_id: String,
    pub included_pairs: Vec<usize>,
    pub excluded_pairs: Vec<usize>,
    #[serde(flatten)]
    pub outcome: SelectionOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub tasks: Vec<TaskSpec>,
    pub log: Vec<SelectionLogEntry>,
}

/// Chooses the features that can be probed with the given pairs.
///
/// A pair is kept only when both of its languages are annotated. A feature
/// becomes a task when at least `min_langs` languages remain and they carry at
/// least two distinct values. Everything else is dropped and logged.
pub fn select_tasks(
    catalog: &FeatureCatalog,
    pairs: &[LanguagePair],
    min_langs: usize,
) -> Result<Selection> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no language pairs given".into()));
    }
    if min_langs < 2 {
        return Err(Error::InvalidArgument(format!("min_langs must be at least 2, got {min_langs}")));
    }
    let mut ordered = pairs.to_vec();
    ordered.sort_by_key(|p| p.index);

    let mut tasks = Vec::new();
    let mut log = Vec::new();
    for feature in catalog.features() {
        let (included, excluded): (Vec<&LanguagePair>, Vec<&LanguagePair>) = ordered
            .iter()
            .partition(|p| p.languages().iter().all(|l| feature.values.contains_key(*l)));

        let langs: BTreeSet<&str> = included.iter().flat_map(|p| p.languages()).collect();
        let values: BTreeSet<&str> = langs.iter().map(|l| feature.values[*l].as_str()).collect();

        let outcome = if langs.len() < min_langs {
            SelectionOutcome::TooFewLanguages {
                annotated: langs.len(),
                required: min_langs,
            }
        } else if values.len() < 2 {
            SelectionOutcome::NoDiversity {
                value: values.iter().next().map(|v| v.to_string()),
            }
        } else {
            SelectionOutcome::Selected
        };

        if outcome == SelectionOutcome::Selected {
            let included_owned: Vec<LanguagePair> = included.iter().map(|p| (*p).clone()).collect();
            tasks.push(TaskSpec::from_labels(
                &feature.id,
                &feature.name,
                feature.category,
                &included_owned,
                &feature.values,
            )?);
        }
        log.push(SelectionLogEntry {
            feature_id: feature.id.clone(),
            included_pairs: included.iter().map(|p| p.index).collect(),
            excluded_pairs: excluded.iter().map(|p| p.index).collect(),
            outcome,
        });
    }
    Ok(Selection { tasks, log })
}
