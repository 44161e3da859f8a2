//! Trained probe weights.
//!
//! ```text
//! 0    4   magic "TPCK"
//! 4    2   version, u16 LE (= 1)
//! 6    4   header length H, u32 LE
//! 10   H   UTF-8 JSON header
//! ...      f32 LE blocks in order W1, b1, W2, b2 and, for mixing probes, a, lambda
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mixing::MixingProbeModel;
use super::mlp::ProbeModel;
use super::ProbeConfig;
use crate::error::{Error, Result};
use crate::metrics::LayerSource;

pub const MAGIC: &[u8; 4] = b"TPCK";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub task_id: String,
    pub model_id: String,
    pub layer_source: LayerSource,
    pub config: ProbeConfig,
    /// 1-based epoch the weights come from
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointModel {
    Probe(ProbeModel),
    Mixing(MixingProbeModel),
}

impl CheckpointModel {
    pub fn probe(&self) -> &ProbeModel {
        match self {
            CheckpointModel::Probe(p) => p,
            CheckpointModel::Mixing(m) => &m.probe,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: CheckpointModel,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    input_dim: usize,
    hidden_units: usize,
    class_labels: Vec<String>,
    #[serde(default)]
    num_layers: usize,
    #[serde(flatten)]
    meta: CheckpointMeta,
}

fn push_block(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let probe = checkpoint.model.probe();
    let (kind, num_layers) = match &checkpoint.model {
        CheckpointModel::Probe(_) => ("probe", 0),
        CheckpointModel::Mixing(m) => ("mixing", m.num_layers()),
    };
    let header = Header {
        kind: kind.into(),
        input_dim: probe.input_dim(),
        hidden_units: probe.hidden_units(),
        class_labels: probe.class_labels.clone(),
        num_layers,
        meta: checkpoint.meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(10 + json.len() + 4 * probe.num_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    push_block(&mut out, probe.w1.iter().copied());
    push_block(&mut out, probe.b1.iter().copied());
    push_block(&mut out, probe.w2.iter().copied());
    push_block(&mut out, probe.b2.iter().copied());
    if let CheckpointModel::Mixing(m) = &checkpoint.model {
        push_block(&mut out, m.a.iter().copied());
        push_block(&mut out, [m.lambda]);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::InvalidFormat("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let v = self.floats(rows * cols)?;
        Ok(Array2::from_shape_vec((rows, cols), v).expect("length checked"))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::InvalidFormat(format!("{} is not a checkpoint", path.display())));
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(Error::InvalidFormat(format!("unsupported checkpoint version {version}")));
    }
    let len = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes")) as usize;
    let header: Header = serde_json::from_slice(cur.take(len)?)
        .map_err(|e| Error::InvalidFormat(format!("checkpoint header: {e}")))?;
    let (d, h, k) = (header.input_dim, header.hidden_units, header.class_labels.len());
    let probe = ProbeModel {
        w1: cur.matrix(h, d)?,
        b1: Array1::from(cur.floats(h)?),
        w2: cur.matrix(k, h)?,
        b2: Array1::from(cur.floats(k)?),
        class_labels: header.class_labels,
    };
    let model = match header.kind.as_str() {
        "probe" => CheckpointModel::Probe(probe),
        "mixing" => {
            let a = Array1::from(cur.floats(header.num_layers)?);
            let lambda = cur.floats(1)?[0];
            CheckpointModel::Mixing(MixingProbeModel { probe, a, lambda })
        }
        other => return Err(Error::InvalidFormat(format!("unknown checkpoint kind {other:?}"))),
    };
    if cur.pos != bytes.len() {
        return Err(Error::InvalidFormat("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint {
        meta: header.meta,
        model,
    })
}
