//! Sentence corpora in the Tatoeba dump layout.
//!
//! Sentence files are `id<TAB>lang<TAB>text`, link files are `id_a<TAB>id_b`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const QUESTION_TERMINATORS: [char; 3] = ['?', '？', '؟'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub language: String,
    pub sentences: Vec<SentenceRecord>,
    pub source_tag: String,
}

impl Corpus {
    pub fn new(language: &str, sentences: Vec<SentenceRecord>, source_tag: &str) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::EmptyResult(format!("corpus for {language} has no sentences")));
        }
        let mut seen = HashSet::new();
        for s in &sentences {
            if !seen.insert(s.id) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate sentence id {} in {language} corpus",
                    s.id
                )));
            }
            if s.text.trim().is_empty() {
                return Err(Error::InvalidArgument(format!("sentence {} is blank", s.id)));
            }
        }
        Ok(Corpus {
            language: language.to_string(),
            sentences,
            source_tag: source_tag.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.sentences.iter().map(|s| s.id)
    }

    /// Writes the corpus in the sentence-file layout.
    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for s in &self.sentences {
            writeln!(out, "{}\t{}\t{}", s.id, self.language, s.text).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a corpus previously written with [`Corpus::write_tsv`]; every row must
    /// belong to `language`.
    pub fn read_tsv(path: impl AsRef<Path>, language: &str) -> Result<Self> {
        let path = path.as_ref();
        let mut by_lang = read_sentences(path, None)?;
        if by_lang.len() > 1 || by_lang.keys().any(|l| l != language) {
            return Err(Error::InvalidArgument(format!(
                "{} holds sentences for {:?}, expected only {language}",
                path.display(),
                by_lang.keys().collect::<Vec<_>>()
            )));
        }
        let sentences = by_lang.remove(language).unwrap_or_default();
        Corpus::new(language, sentences, &path.display().to_string())
    }
}

/// Reads a sentence file, keeping rows whose language is in `languages` (all
/// rows when `None`). Rows whose text is blank after trimming are skipped.
pub fn read_sentences(
    path: &Path,
    languages: Option<&BTreeSet<String>>,
) -> Result<BTreeMap<String, Vec<SentenceRecord>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out: BTreeMap<String, Vec<SentenceRecord>> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = lineno as u64 + 1;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(lang), Some(text)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(path, line_no, "expected `id<TAB>lang<TAB>text`"));
        };
        let id: u64 = id
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad sentence id {id:?}")))?;
        if languages.is_some_and(|set| !set.contains(lang)) {
            continue;
        }
        if text.trim().is_empty() {
            continue;
        }
        out.entry(lang.to_string()).or_default().push(SentenceRecord {
            id,
            text: text.to_string(),
        });
    }
    Ok(out)
}

/// Drops repeated texts (keeping the lowest id) and sorts by id.
pub fn dedup_by_text(mut records: Vec<SentenceRecord>) -> Vec<SentenceRecord> {
    records.sort_by_key(|r| r.id);
    records.dedup_by_key(|r| r.id);
    let mut seen = HashSet::new();
    records.retain(|r| seen.insert(r.text.clone()));
    records
}

/// Draws `n` distinct sentences uniformly without replacement from an
/// already-loaded record list. The result is sorted by id.
pub fn sample_records(
    records: Vec<SentenceRecord>,
    language: &str,
    n: usize,
    seed: u64,
    source_tag: &str,
) -> Result<Corpus> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let pool = dedup_by_text(records);
    if pool.len() < n {
        return Err(Error::NotEnoughSentences {
            language: language.to_string(),
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = rng_for(seed, &format!("sample/{language}"));
    let mut picked = index::sample(&mut rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    let sentences = picked.into_iter().map(|i| pool[i].clone()).collect();
    Corpus::new(language, sentences, source_tag)
}

pub fn sample_sentences(source: &Path, language: &str, n: usize, seed: u64) -> Result<Corpus> {
    let wanted = BTreeSet::from([language.to_string()]);
    let mut by_lang = read_sentences(source, Some(&wanted))?;
    let records = by_lang.remove(language).unwrap_or_default();
    sample_records(records, language, n, seed, &source.display().to_string())
}

/// Undirected translation links between sentence ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkSet {
    links: Vec<(u64, u64)>,
}

impl LinkSet {
    pub fn new(links: Vec<(u64, u64)>) -> Self {
        LinkSet { links }
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut links = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let parsed: Option<Vec<u64>> = fields.iter().map(|f| f.trim().parse().ok()).collect();
            match parsed.as_deref() {
                Some([a, b]) => links.push((*a, *b)),
                _ => {
                    return Err(Error::parse(
                        path,
                        lineno as u64 + 1,
                        format!("expected `id_a<TAB>id_b`, got {line:?}"),
                    ))
                }
            }
        }
        Ok(LinkSet { links })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationFilterStats {
    pub train_language: String,
    pub test_language: String,
    pub test_before: usize,
    pub removed: usize,
}

/// Removes every test sentence that is a direct translation of a train sentence.
/// The train corpus is returned unchanged.
pub fn filter_translations(
    train: Corpus,
    test: Corpus,
    links: &LinkSet,
) -> Result<(Corpus, Corpus, TranslationFilterStats)> {
    let train_ids: HashSet<u64> = train.ids().collect();
    let mut linked = HashSet::new();
    for &(a, b) in &links.links {
        if train_ids.contains(&a) {
            linked.insert(b);
        }
        if train_ids.contains(&b) {
            linked.insert(a);
        }
    }
    let test_before = test.len();
    let kept: Vec<SentenceRecord> = test
        .sentences
        .into_iter()
        .filter(|s| !linked.contains(&s.id))
        .collect();
    let stats = TranslationFilterStats {
        train_language: train.language.clone(),
        test_language: test.language.clone(),
        test_before,
        removed: test_before - kept.len(),
    };
    let test = Corpus::new(&test.language, kept, &test.source_tag)?;
    Ok((train, test, stats))
}

pub fn is_question(text: &str) -> bool {
    text.trim_end()
        .chars()
        .last()
        .is_some_and(|c| QUESTION_TERMINATORS.contains(&c))
}

/// Keeps only sentences ending in a question mark.
pub fn filter_questions(corpus: &Corpus) -> Result<Corpus> {
    let kept: Vec<SentenceRecord> = corpus
        .sentences
        .iter()
        .filter(|s| is_question(&s.text))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyResult(format!(
            "no questions in the {} corpus",
            corpus.language
        )));
    }
    Corpus::new(&corpus.language, kept, &corpus.source_tag)
}
