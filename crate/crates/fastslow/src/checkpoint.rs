//! Policy checkpoints: `manifest.json` plus `params.bin`, a blob of
//! little-endian f32 values in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use fastslow_core::policy::{Dims, Layout, PolicyParams};
use fastslow_core::trainer::TrainConfig;
use fastslow_core::ScenarioConfig;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FORMAT: &str = "fastslow-policy";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Element offset into the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub format: String,
    pub dims: Dims,
    pub arrays: Vec<ArrayEntry>,
    pub blob: String,
    /// Scenario the policy was trained on.
    pub scenario: Option<ScenarioConfig>,
    pub train: Option<TrainConfig>,
    pub seed: Option<u64>,
    pub batch: Option<usize>,
    pub env_steps: Option<usize>,
}

/// Training context stored next to the weights.
#[derive(Debug, Clone, Default)]
pub struct CheckpointMeta {
    pub scenario: Option<ScenarioConfig>,
    pub train: Option<TrainConfig>,
    pub seed: Option<u64>,
    pub batch: Option<usize>,
    pub env_steps: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub params: PolicyParams,
}

fn array_entries(layout: &Layout) -> Vec<ArrayEntry> {
    layout
        .arrays()
        .into_iter()
        .map(|(name, slot, bias)| ArrayEntry {
            name,
            shape: if bias { vec![slot.cols] } else { vec![slot.rows, slot.cols] },
            dtype: "f32".into(),
            offset: slot.offset,
        })
        .collect()
}

/// Write `params` into directory `dir` (created if needed).
pub fn save_checkpoint(dir: &Path, params: &PolicyParams, meta: &CheckpointMeta) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        format: CHECKPOINT_FORMAT.into(),
        dims: params.dims(),
        arrays: array_entries(&params.layout),
        blob: BLOB_FILE.into(),
        scenario: meta.scenario.clone(),
        train: meta.train.clone(),
        seed: meta.seed,
        batch: meta.batch,
        env_steps: meta.env_steps,
    };
    let mut blob = Vec::with_capacity(params.data.len() * 4);
    for &x in &params.data {
        blob.extend_from_slice(&(x as f32).to_le_bytes());
    }
    let blob_path = dir.join(BLOB_FILE);
    fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(dir.to_path_buf())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let bad = |m: String| Error::BadCheckpoint(format!("{}: {m}", dir.display()));
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| bad(format!("{MANIFEST_FILE}: {e}")))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| bad(format!("{MANIFEST_FILE}: {e}")))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", manifest.version)));
    }
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unknown format {:?}", manifest.format)));
    }
    let mut params = PolicyParams::zeros(manifest.dims).map_err(|e| bad(e.to_string()))?;
    if manifest.arrays != array_entries(&params.layout) {
        return Err(bad("array list does not match the network dimensions".into()));
    }
    let blob_path = dir.join(&manifest.blob);
    let blob = fs::read(&blob_path).map_err(|e| bad(format!("{}: {e}", manifest.blob)))?;
    if blob.len() != params.data.len() * 4 {
        return Err(bad(format!("blob holds {} bytes, expected {}", blob.len(), params.data.len() * 4)));
    }
    for (x, b) in params.data.iter_mut().zip(blob.chunks_exact(4)) {
        *x = f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    }
    if !params.is_finite() {
        return Err(bad("non-finite parameter".into()));
    }
    Ok(Checkpoint { manifest, params })
}

/// `params` rounded through f32, as a checkpoint would store them.
pub fn quantize(params: &PolicyParams) -> PolicyParams {
    let mut q = params.clone();
    q.data.iter_mut().for_each(|x| *x = f64::from(*x as f32));
    q
}
