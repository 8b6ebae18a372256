//! Versioned binary checkpoints.
//!
//! Layout (little-endian):
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `PFCAST\0\0` |
//! | 4 | format version (`u32`) |
//! | 8 | header length `n` (`u64`) |
//! | n | UTF-8 JSON [`CheckpointHeader`] |
//! | 8 | model seed (`u64`) |
//! | 8 | normalization column count `c` (`u64`) |
//! | 16·c | means then standard deviations (`f64`) |
//! | 8 | parameter scalar count `p` (`u64`) |
//! | 8·p | parameters in model order (`f64`) |
//!
//! All floats are stored as raw bits, so a save/load cycle is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelError, ModelSpec, Result};
use crate::data::{NormStats, SplitFractions};
use crate::indicators::IndicatorParams;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"PFCAST\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub spec: ModelSpec,
    pub indicators: IndicatorParams,
    pub split: SplitFractions,
    pub columns: Vec<String>,
    pub param_names: Vec<String>,
    pub param_shapes: Vec<Vec<usize>>,
    /// How many times the random features were redrawn.
    pub feature_draws: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub seed: u64,
    pub norm: NormStats,
    pub params: Vec<Tensor>,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| corrupt(format!("truncated file: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| read_u64(r).map(f64::from_bits)).collect()
}

fn checked_len(n: u64, limit: u64, what: &str) -> Result<usize> {
    if n > limit {
        return Err(corrupt(format!("{what} length {n} exceeds {limit}")));
    }
    Ok(n as usize)
}

impl Checkpoint {
    pub fn from_model(
        model: &Model,
        indicators: IndicatorParams,
        split: SplitFractions,
        columns: Vec<String>,
        norm: NormStats,
    ) -> Checkpoint {
        Checkpoint {
            header: CheckpointHeader {
                spec: model.spec.clone(),
                indicators,
                split,
                columns,
                param_names: model.names.clone(),
                param_shapes: model.params.iter().map(|p| p.shape().to_vec()).collect(),
                feature_draws: model.feature_draws,
            },
            seed: model.spec.seed,
            norm,
            params: model.params.clone(),
        }
    }

    /// Rebuilds the model and installs the stored parameters.
    pub fn to_model(&self) -> Result<Model> {
        let mut model = Model::build(&self.header.spec, self.header.columns.len())?;
        if model.names != self.header.param_names {
            return Err(corrupt("parameter names do not match the model specification"));
        }
        for (slot, p) in model.params.iter_mut().zip(&self.params) {
            if slot.shape() != p.shape() {
                return Err(corrupt(format!("parameter shape {:?} vs expected {:?}", p.shape(), slot.shape())));
            }
            *slot = p.clone();
        }
        model.set_feature_draws(self.header.feature_draws)?;
        Ok(model)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = serde_json::to_vec(&self.header).map_err(|e| corrupt(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.norm.mean.len() as u64).to_le_bytes())?;
        for v in self.norm.mean.iter().chain(&self.norm.std) {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
        let total: usize = self.params.iter().map(Tensor::numel).sum();
        w.write_all(&(total as u64).to_le_bytes())?;
        for v in self.params.iter().flat_map(|p| p.data()) {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Checkpoint> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| corrupt("file too short"))?;
        if &magic != MAGIC {
            return Err(corrupt("not a checkpoint file (bad magic)"));
        }
        let mut version = [0u8; 4];
        r.read_exact(&mut version).map_err(|_| corrupt("file too short"))?;
        let version = u32::from_le_bytes(version);
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }
        let header_len = checked_len(read_u64(r)?, 1 << 28, "header")?;
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header).map_err(|_| corrupt("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(&header).map_err(|e| corrupt(format!("header: {e}")))?;
        let seed = read_u64(r)?;
        let cols = checked_len(read_u64(r)?, 1 << 16, "normalization")?;
        if cols != header.columns.len() {
            return Err(corrupt(format!("{cols} normalization columns for {} features", header.columns.len())));
        }
        let mean = read_f64s(r, cols)?;
        let std = read_f64s(r, cols)?;
        let expected: usize = header.param_shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        let total = checked_len(read_u64(r)?, 1 << 32, "parameter")?;
        if total != expected || header.param_shapes.len() != header.param_names.len() {
            return Err(corrupt(format!("{total} parameter values, header describes {expected}")));
        }
        let flat = read_f64s(r, total)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(corrupt("trailing bytes after parameters"));
        }
        let mut params = Vec::with_capacity(header.param_shapes.len());
        let mut off = 0;
        for shape in &header.param_shapes {
            let n: usize = shape.iter().product();
            params.push(Tensor::new(shape, flat[off..off + n].to_vec()).map_err(|e| corrupt(e.to_string()))?);
            off += n;
        }
        Ok(Checkpoint {
            header,
            seed,
            norm: NormStats { mean, std },
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)?;
        Checkpoint::read_from(&mut bytes.as_slice())
    }
}
