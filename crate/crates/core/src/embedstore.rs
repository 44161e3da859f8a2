//! Binary store for per-layer pooled sentence embeddings.
//!
//! ```text
//! offset  size  field
//! 0       4     magic  "TPEB"
//! 4       2     version, u16 LE (= 1)
//! 6       4     header length H, u32 LE
//! 10      H     UTF-8 JSON header (EmbeddingHeader)
//! 10+H    ...   one block per stored layer, in layer order, then the native block;
//!               each block is row-major f32 LE, num_sentences x dim
//! ```
//!
//! Block offsets follow from the header alone, so any single layer can be read
//! with one seek.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TPEB";
pub const VERSION: u16 = 1;
const PREAMBLE: u64 = 4 + 2 + 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub model_id: String,
    pub language: String,
    pub num_sentences: usize,
    pub sentence_ids: Vec<u64>,
    /// Contextual layers, excluding layer 0.
    pub num_layers: usize,
    /// Dimensions of the stored layers: 0..=L when `has_layer0`, else 1..=L.
    pub layer_dims: Vec<usize>,
    pub has_layer0: bool,
    pub has_native: bool,
    pub native_dim: usize,
    pub dtype: String,
    pub endianness: String,
    /// Producer metadata (checkpoint digest, truncation length, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl EmbeddingHeader {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidFormat(msg));
        if self.sentence_ids.len() != self.num_sentences {
            return bad(format!(
                "{} sentence ids for {} sentences",
                self.sentence_ids.len(),
                self.num_sentences
            ));
        }
        let expected_layers = self.num_layers + usize::from(self.has_layer0);
        if self.layer_dims.len() != expected_layers {
            return bad(format!(
                "{} layer dims for {} stored layers",
                self.layer_dims.len(),
                expected_layers
            ));
        }
        if self.layer_dims.contains(&0) || (self.has_native && self.native_dim == 0) {
            return bad("zero dimension".into());
        }
        if self.dtype != "f32" || self.endianness != "LE" {
            return bad(format!("unsupported dtype {}/{}", self.dtype, self.endianness));
        }
        Ok(())
    }

    fn first_layer(&self) -> usize {
        usize::from(!self.has_layer0)
    }

    /// Layer numbers stored in the file, in block order.
    pub fn stored_layers(&self) -> std::ops::RangeInclusive<usize> {
        self.first_layer()..=self.num_layers
    }

    pub fn layer_dim(&self, layer: usize) -> Option<usize> {
        if layer < self.first_layer() || layer > self.num_layers {
            return None;
        }
        self.layer_dims.get(layer - self.first_layer()).copied()
    }

    fn block_bytes(&self, dim: usize) -> u64 {
        (self.num_sentences * dim * 4) as u64
    }

    /// Byte offset of a block relative to the start of the payload, and its dimension.
    fn block_location(&self, selector: LayerSelector) -> Result<(u64, usize)> {
        match selector {
            LayerSelector::Layer(l) => {
                let dim = self
                    .layer_dim(l)
                    .ok_or_else(|| Error::AbsentLayer(l.to_string()))?;
                let before: u64 = self.layer_dims[..l - self.first_layer()]
                    .iter()
                    .map(|&d| self.block_bytes(d))
                    .sum();
                Ok((before, dim))
            }
            LayerSelector::Native => {
                if !self.has_native {
                    return Err(Error::AbsentLayer("native".into()));
                }
                let before: u64 = self.layer_dims.iter().map(|&d| self.block_bytes(d)).sum();
                Ok((before, self.native_dim))
            }
        }
    }

    fn payload_bytes(&self) -> u64 {
        let layers: u64 = self.layer_dims.iter().map(|&d| self.block_bytes(d)).sum();
        let native = if self.has_native {
            self.block_bytes(self.native_dim)
        } else {
            0
        };
        layers + native
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelector {
    Layer(usize),
    Native,
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelector::Layer(l) => write!(f, "layer_{l}"),
            LayerSelector::Native => f.write_str("native"),
        }
    }
}

impl FromStr for LayerSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "native" {
            return Ok(LayerSelector::Native);
        }
        let digits = s.strip_prefix("layer_").unwrap_or(s);
        digits
            .parse()
            .map(LayerSelector::Layer)
            .map_err(|_| format!("expected a layer number or `native`, got {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub header: EmbeddingHeader,
    /// One matrix per stored layer, in `header.stored_layers()` order.
    pub layers: Vec<Array2<f32>>,
    pub native: Option<Array2<f32>>,
}

impl EmbeddingSet {
    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        h.validate()?;
        if self.layers.len() != h.layer_dims.len() {
            return Err(Error::InvalidFormat(format!(
                "{} layer matrices for {} declared layers",
                self.layers.len(),
                h.layer_dims.len()
            )));
        }
        let mut blocks: Vec<(&Array2<f32>, usize)> =
            self.layers.iter().zip(h.layer_dims.iter().copied()).collect();
        match (&self.native, h.has_native) {
            (Some(m), true) => blocks.push((m, h.native_dim)),
            (None, false) => {}
            _ => return Err(Error::InvalidFormat("native matrix disagrees with has_native".into())),
        }
        for (m, dim) in blocks {
            if m.dim() != (h.num_sentences, dim) {
                return Err(Error::InvalidFormat(format!(
                    "matrix shape {:?} differs from declared ({}, {dim})",
                    m.dim(),
                    h.num_sentences
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidFormat("non-finite value in embedding matrix".into()));
            }
        }
        Ok(())
    }

    pub fn layer(&self, selector: LayerSelector) -> Result<&Array2<f32>> {
        match selector {
            LayerSelector::Native => self
                .native
                .as_ref()
                .ok_or_else(|| Error::AbsentLayer("native".into())),
            LayerSelector::Layer(l) => {
                if self.header.layer_dim(l).is_none() {
                    return Err(Error::AbsentLayer(l.to_string()));
                }
                Ok(&self.layers[l - self.header.first_layer()])
            }
        }
    }

    /// Row index of every sentence id.
    pub fn row_index(&self) -> BTreeMap<u64, usize> {
        self.header
            .sentence_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect()
    }
}

pub fn encode_header(header: &EmbeddingHeader) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(header)?)
}

pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    set.validate()?;
    let header = encode_header(&set.header)?;
    let header_len = u32::try_from(header.len())
        .map_err(|_| Error::InvalidFormat("header larger than 4 GiB".into()))?;

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&header_len.to_le_bytes()).map_err(io)?;
    out.write_all(&header).map_err(io)?;
    for m in set.layers.iter().chain(set.native.as_ref()) {
        for v in m.iter() {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

fn read_preamble(file: &mut File, path: &Path) -> Result<(EmbeddingHeader, u64)> {
    let mut pre = [0u8; PREAMBLE as usize];
    file.read_exact(&mut pre)
        .map_err(|_| Error::InvalidFormat(format!("{}: file too short", path.display())))?;
    if &pre[..4] != MAGIC {
        return Err(Error::InvalidFormat(format!("{}: bad magic", path.display())));
    }
    let version = u16::from_le_bytes([pre[4], pre[5]]);
    if version != VERSION {
        return Err(Error::InvalidFormat(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let header_len = u32::from_le_bytes([pre[6], pre[7], pre[8], pre[9]]) as usize;
    let mut header = vec![0u8; header_len];
    file.read_exact(&mut header)
        .map_err(|_| Error::InvalidFormat(format!("{}: truncated header", path.display())))?;
    let header: EmbeddingHeader = serde_json::from_slice(&header)
        .map_err(|e| Error::InvalidFormat(format!("{}: bad header: {e}", path.display())))?;
    header.validate()?;

    let payload_start = PREAMBLE + header_len as u64;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if file_len < payload_start + header.payload_bytes() {
        return Err(Error::InvalidFormat(format!(
            "{}: truncated payload ({} of {} bytes)",
            path.display(),
            file_len.saturating_sub(payload_start),
            header.payload_bytes()
        )));
    }
    Ok((header, payload_start))
}

fn read_block(file: &mut File, path: &Path, rows: usize, dim: usize) -> Result<Array2<f32>> {
    let mut bytes = vec![0u8; rows * dim * 4];
    file.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Array2::from_shape_vec((rows, dim), values)
        .map_err(|e| Error::InvalidFormat(e.to_string()))
}

pub fn read_header(path: impl AsRef<Path>) -> Result<EmbeddingHeader> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_preamble(&mut file, path)?.0)
}

/// Reads one block, seeking past all others.
pub fn read_layer(
    path: impl AsRef<Path>,
    selector: LayerSelector,
) -> Result<(Array2<f32>, EmbeddingHeader)> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (header, payload_start) = read_preamble(&mut file, path)?;
    let (offset, dim) = header.block_location(selector)?;
    file.seek(SeekFrom::Start(payload_start + offset))
        .map_err(|e| Error::io(path, e))?;
    let m = read_block(&mut file, path, header.num_sentences, dim)?;
    Ok((m, header))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (header, _) = read_preamble(&mut file, path)?;
    let layers = header
        .layer_dims
        .iter()
        .map(|&d| read_block(&mut file, path, header.num_sentences, d))
        .collect::<Result<Vec<_>>>()?;
    let native = if header.has_native {
        Some(read_block(&mut file, path, header.num_sentences, header.native_dim)?)
    } else {
        None
    };
    let set = EmbeddingSet {
        header,
        layers,
        native,
    };
    set.validate()?;
    Ok(set)
}

/// Conventional file name for a (model, language) store.
pub fn file_name(model_id: &str, language: &str) -> String {
    format!("{model_id}_{language}.tpeb")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn header(n: usize, dims: Vec<usize>, has_layer0: bool, native_dim: Option<usize>) -> EmbeddingHeader {
        EmbeddingHeader {
            model_id: "toy".into(),
            language: "spa".into(),
            num_sentences: n,
            sentence_ids: (0..n as u64).map(|i| 100 + i).collect(),
            num_layers: dims.len() - usize::from(has_layer0),
            layer_dims: dims,
            has_layer0,
            has_native: native_dim.is_some(),
            native_dim: native_dim.unwrap_or(0),
            dtype: "f32".into(),
            endianness: "LE".into(),
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn payload_matches_hand_serialization() {
        let m = array![[1.0f32, -2.5, 0.125], [3.0, 1e-3, -0.0]];
        let set = EmbeddingSet {
            header: header(2, vec![3], false, None),
            layers: vec![m],
            native: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tpeb");
        write_embeddings(&set, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let header_json = serde_json::to_vec(&set.header).unwrap();
        let header_bytes = 10 + header_json.len();
        assert_eq!(bytes.len(), header_bytes + 2 * 3 * 4);
        assert_eq!(&bytes[..4], b"TPEB");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &(header_json.len() as u32).to_le_bytes());

        // IEEE-754 single precision bit patterns written out by hand
        let expected: [[u8; 4]; 6] = [
            [0x00, 0x00, 0x80, 0x3f], // 1.0
            [0x00, 0x00, 0x20, 0xc0], // -2.5
            [0x00, 0x00, 0x00, 0x3e], // 0.125
            [0x00, 0x00, 0x40, 0x40], // 3.0
            [0x6f, 0x12, 0x83, 0x3a], // 1e-3
            [0x00, 0x00, 0x00, 0x80], // -0.0
        ];
        let payload: Vec<u8> = expected.iter().flatten().copied().collect();
        assert_eq!(&bytes[header_bytes..], payload.as_slice());
    }

    #[test]
    fn layers_read_independently() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("laser.tpeb");
        let l0 = Array2::from_shape_fn((3, 2), |(i, j)| (i * 10 + j) as f32);
        let l1 = Array2::from_shape_fn((3, 4), |(i, j)| -((i * 10 + j) as f32));
        let l2 = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f32 * 0.5);
        let native = Array2::from_shape_fn((3, 5), |(i, j)| (i * j) as f32);
        let set = EmbeddingSet {
            header: header(3, vec![2, 4, 4], true, Some(5)),
            layers: vec![l0.clone(), l1.clone(), l2.clone()],
            native: Some(native.clone()),
        };
        write_embeddings(&set, &path).unwrap();
        assert_eq!(read_layer(&path, LayerSelector::Layer(0)).unwrap().0, l0);
        assert_eq!(read_layer(&path, LayerSelector::Layer(1)).unwrap().0, l1);
        assert_eq!(read_layer(&path, LayerSelector::Layer(2)).unwrap().0, l2);
        let (n, h) = read_layer(&path, LayerSelector::Native).unwrap();
        assert_eq!(n, native);
        assert_eq!(h.layer_dim(0), Some(2));
        assert_eq!(h.layer_dim(1), Some(4));
        assert!(matches!(
            read_layer(&path, LayerSelector::Layer(5)),
            Err(Error::AbsentLayer(_))
        ));
        assert_eq!(read_embeddings(&path).unwrap(), set);
    }

    #[test]
    fn rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tpeb");
        let mut set = EmbeddingSet {
            header: header(1, vec![2], false, None),
            layers: vec![array![[1.0f32, f32::NAN]]],
            native: None,
        };
        assert!(matches!(write_embeddings(&set, &path), Err(Error::InvalidFormat(_))));
        set.layers[0][[0, 1]] = 2.0;
        write_embeddings(&set, &path).unwrap();
        assert!(matches!(
            read_layer(&path, LayerSelector::Layer(0)),
            Err(Error::AbsentLayer(_))
        ));
        assert!(matches!(
            read_layer(&path, LayerSelector::Native),
            Err(Error::AbsentLayer(_))
        ));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_layer(&path, LayerSelector::Layer(1)), Err(Error::InvalidFormat(m)) if m.contains("truncated")));

        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_header(&path), Err(Error::InvalidFormat(m)) if m.contains("magic")));
        bytes[0] = b'T';
        bytes[4] = 2;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_header(&path), Err(Error::InvalidFormat(m)) if m.contains("version")));
    }

    #[test]
    fn selector_parsing() {
        assert_eq!("native".parse::<LayerSelector>().unwrap(), LayerSelector::Native);
        assert_eq!("3".parse::<LayerSelector>().unwrap(), LayerSelector::Layer(3));
        assert_eq!("layer_3".parse::<LayerSelector>().unwrap(), LayerSelector::Layer(3));
        assert!("top".parse::<LayerSelector>().is_err());
        assert_eq!(LayerSelector::Layer(3).to_string(), "layer_3");
    }
}
