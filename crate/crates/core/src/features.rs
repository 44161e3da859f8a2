//! Joins labeled examples with stored embeddings.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use crate::embedstore::{self, EmbeddingSet, LayerSelector};
use crate::error::{Error, Result};
use crate::taskbuild::LabeledExample;

/// Embedding sets of one model, keyed by language.
pub type EmbeddingSets = BTreeMap<String, EmbeddingSet>;

pub fn load_sets<'a>(
    dir: &Path,
    model_id: &str,
    languages: impl IntoIterator<Item = &'a str>,
) -> Result<EmbeddingSets> {
    let mut sets = BTreeMap::new();
    for lang in languages {
        if sets.contains_key(lang) {
            continue;
        }
        let path = dir.join(embedstore::file_name(model_id, lang));
        let set = embedstore::read_embeddings(&path)?;
        if set.header.language != lang || set.header.model_id != model_id {
            return Err(Error::InvalidArgument(format!(
                "{} holds {}/{}, expected {model_id}/{lang}",
                path.display(),
                set.header.model_id,
                set.header.language
            )));
        }
        sets.insert(lang.to_string(), set);
    }
    Ok(sets)
}

/// One row per example, promoted to f64, taken from the selected layer.
pub fn gather(
    examples: &[LabeledExample],
    sets: &EmbeddingSets,
    selector: LayerSelector,
) -> Result<Array2<f64>> {
    let mut indices: BTreeMap<&str, BTreeMap<u64, usize>> = BTreeMap::new();
    let mut dim = None;
    for (lang, set) in sets {
        let d = set.layer(selector)?.ncols();
        if *dim.get_or_insert(d) != d {
            return Err(Error::DimensionMismatch {
                expected: dim.unwrap_or(d),
                actual: d,
            });
        }
        indices.insert(lang, set.row_index());
    }
    let dim = dim.ok_or_else(|| Error::InvalidArgument("no embedding sets loaded".into()))?;
    let mut out = Array2::zeros((examples.len(), dim));
    for (i, ex) in examples.iter().enumerate() {
        let lang = ex.language();
        let set = sets
            .get(lang)
            .ok_or_else(|| Error::InvalidArgument(format!("no embeddings for language {lang}")))?;
        let row = *indices[lang].get(&ex.sentence_ref.sentence_id).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "sentence {} of {lang} has no embedding",
                ex.sentence_ref.sentence_id
            ))
        })?;
        let src = set.layer(selector)?.row(row);
        out.row_mut(i).assign(&src.mapv(f64::from));
    }
    Ok(out)
}

pub fn labels(examples: &[LabeledExample]) -> Vec<usize> {
    examples.iter().map(|e| e.label_index).collect()
}
