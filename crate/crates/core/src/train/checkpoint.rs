//! Binary checkpoint layout:
//!
//! ```text
//! "SWMT" | u32 LE version | u64 LE header length | JSON header | f64 LE blobs
//! ```
//!
//! The header lists every blob by name and length in file order, plus a
//! SHA-256 of the blob bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pipeline::{History, Stage, TrainState};
use super::{PipelineConfig, PlateauScheduler};
use crate::codec::{f64s_to_le_bytes, le_bytes_to_f64s};
use crate::error::{Error, Result};
use crate::model::{BiLstmDims, BiLstmParams, EncoderDims, EncoderParams, ParamSet};
use crate::stats::{WhiteningMode, WhiteningModel};
use crate::tensor::{Matrix, RNG_ALGORITHM};

pub const MAGIC: &[u8; 4] = b"SWMT";
pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "surgflow-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlobEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WhiteningMeta {
    dim: usize,
    mode: WhiteningMode,
    lambda: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    config: PipelineConfig,
    seed: u64,
    rng: String,
    stage: Stage,
    next_epoch: usize,
    encoder_dims: EncoderDims,
    bilstm_dims: Option<BiLstmDims>,
    whitening: Option<WhiteningMeta>,
    stage1_scheduler: PlateauScheduler,
    stage1_lr: f64,
    stage2_scheduler: PlateauScheduler,
    stage2_lr: f64,
    history: History,
    blobs: Vec<BlobEntry>,
    checksum: String,
}

fn push_set<P: ParamSet>(prefix: &str, p: &P, entries: &mut Vec<BlobEntry>, data: &mut Vec<f64>) {
    for (name, b) in p.blobs() {
        entries.push(BlobEntry { name: format!("{prefix}.{name}"), len: b.len() });
        data.extend_from_slice(b);
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn checkpoint_to_bytes(state: &TrainState) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut data = Vec::new();
    push_set("encoder", &state.encoder, &mut entries, &mut data);
    push_set("encoder_velocity", &state.encoder_velocity, &mut entries, &mut data);
    if let Some(w) = &state.whitening {
        entries.push(BlobEntry { name: "whitening.mean".into(), len: w.dim() });
        data.extend_from_slice(w.mean());
        entries.push(BlobEntry { name: "whitening.transform".into(), len: w.dim() * w.dim() });
        data.extend_from_slice(w.transform().as_slice());
    }
    match (&state.bilstm, &state.bilstm_velocity) {
        (Some(p), Some(v)) => {
            push_set("bilstm", p, &mut entries, &mut data);
            push_set("bilstm_velocity", v, &mut entries, &mut data);
        }
        (None, None) => {}
        _ => return Err(Error::Mismatch("Bi-LSTM parameters and velocity must be saved together".into())),
    }
    let blob_bytes = f64s_to_le_bytes(&data);
    let header = Header {
        format: FORMAT_NAME.into(),
        config: state.config.clone(),
        seed: state.seed,
        rng: RNG_ALGORITHM.into(),
        stage: state.stage,
        next_epoch: state.next_epoch,
        encoder_dims: state.encoder.dims(),
        bilstm_dims: state.bilstm.as_ref().map(BiLstmParams::dims),
        whitening: state.whitening.as_ref().map(|w| WhiteningMeta { dim: w.dim(), mode: w.mode(), lambda: w.lambda() }),
        stage1_scheduler: state.stage1_scheduler.clone(),
        stage1_lr: state.stage1_lr,
        stage2_scheduler: state.stage2_scheduler.clone(),
        stage2_lr: state.stage2_lr,
        history: state.history.clone(),
        blobs: entries,
        checksum: hex(&Sha256::digest(&blob_bytes)),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + blob_bytes.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob_bytes);
    Ok(out)
}

struct BlobReader<'a> {
    entries: std::slice::Iter<'a, BlobEntry>,
    data: &'a [f64],
    pos: usize,
}

impl BlobReader<'_> {
    fn take(&mut self, name: &str, len: usize) -> Result<&[f64]> {
        let e = self.entries.next().ok_or_else(|| Error::CheckpointCorrupt(format!("missing blob {name}")))?;
        if e.name != name || e.len != len {
            return Err(Error::Mismatch(format!(
                "checkpoint blob {} (len {}) where {name} (len {len}) was expected",
                e.name, e.len
            )));
        }
        let s = self
            .data
            .get(self.pos..self.pos + len)
            .ok_or_else(|| Error::CheckpointCorrupt(format!("blob {name} is truncated")))?;
        self.pos += len;
        Ok(s)
    }

    fn fill<P: ParamSet>(&mut self, prefix: &str, p: &mut P) -> Result<()> {
        for (name, b) in p.blobs_mut() {
            b.copy_from_slice(self.take(&format!("{prefix}.{name}"), b.len())?);
        }
        Ok(())
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<TrainState> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::CheckpointCorrupt("missing SWMT magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let json = bytes
        .get(16..16usize.saturating_add(hlen))
        .ok_or_else(|| Error::CheckpointCorrupt("header is truncated".into()))?;
    let header: Header =
        serde_json::from_slice(json).map_err(|e| Error::CheckpointCorrupt(format!("bad header: {e}")))?;
    if header.format != FORMAT_NAME || header.rng != RNG_ALGORITHM {
        return Err(Error::CheckpointCorrupt(format!("unknown format {} / rng {}", header.format, header.rng)));
    }
    let blob_bytes = &bytes[16 + hlen..];
    if hex(&Sha256::digest(blob_bytes)) != header.checksum {
        return Err(Error::CheckpointCorrupt("checksum mismatch".into()));
    }
    let data = le_bytes_to_f64s(blob_bytes)?;
    let expected: usize = header.blobs.iter().map(|b| b.len).sum();
    if expected != data.len() {
        return Err(Error::CheckpointCorrupt(format!("{} values stored, header lists {expected}", data.len())));
    }
    let mut r = BlobReader { entries: header.blobs.iter(), data: &data, pos: 0 };

    let mut encoder = EncoderParams::zeros(header.encoder_dims)?;
    r.fill("encoder", &mut encoder)?;
    let mut encoder_velocity = encoder.zeros_like();
    r.fill("encoder_velocity", &mut encoder_velocity)?;
    let whitening = match &header.whitening {
        Some(m) => {
            let mean = r.take("whitening.mean", m.dim)?.to_vec();
            let transform = Matrix::from_vec(m.dim, m.dim, r.take("whitening.transform", m.dim * m.dim)?.to_vec())?;
            Some(WhiteningModel::new(mean, transform, m.lambda, m.mode)?)
        }
        None => None,
    };
    let (bilstm, bilstm_velocity) = match header.bilstm_dims {
        Some(d) => {
            let mut p = BiLstmParams::zeros(d)?;
            r.fill("bilstm", &mut p)?;
            let mut v = p.zeros_like();
            r.fill("bilstm_velocity", &mut v)?;
            (Some(p), Some(v))
        }
        None => (None, None),
    };
    if r.entries.next().is_some() {
        return Err(Error::CheckpointCorrupt("unexpected trailing blobs".into()));
    }
    Ok(TrainState {
        config: header.config,
        seed: header.seed,
        stage: header.stage,
        next_epoch: header.next_epoch,
        encoder,
        encoder_velocity,
        stage1_scheduler: header.stage1_scheduler,
        stage1_lr: header.stage1_lr,
        whitening,
        bilstm,
        bilstm_velocity,
        stage2_scheduler: header.stage2_scheduler,
        stage2_lr: header.stage2_lr,
        history: header.history,
    })
}

pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    let bytes = checkpoint_to_bytes(state)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
