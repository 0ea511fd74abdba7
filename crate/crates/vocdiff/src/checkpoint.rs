//! Checkpoints: a JSON manifest plus one flat binary file of little-endian
//! f64 arrays. Round-trips are bit-stable.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the value stream, in elements.
    pub offset: usize,
    pub len: usize,
    pub dtype: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub step: usize,
    pub entries: Vec<ArrayEntry>,
    /// RNG states as hex so JSON round trips exactly.
    pub rng: std::collections::BTreeMap<String, Vec<String>>,
    /// Small integer state (adaptive cap, optimizer step counters, ...).
    pub counters: std::collections::BTreeMap<String, u64>,
    /// The training configuration used to build the nets, embedded verbatim.
    pub train_config: serde_json::Value,
}

pub struct Checkpoint {
    pub manifest: Manifest,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn new(step: usize, train_config: serde_json::Value) -> Self {
        Checkpoint {
            manifest: Manifest {
                format: "vocdiff-checkpoint-v1".into(),
                step,
                entries: Vec::new(),
                rng: Default::default(),
                counters: Default::default(),
                train_config,
            },
            values: Vec::new(),
        }
    }

    pub fn push_array(&mut self, name: &str, shape: &[usize], values: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.manifest.entries.push(ArrayEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset: self.values.len(),
            len: values.len(),
            dtype: "f64".into(),
        });
        self.values.extend_from_slice(values);
    }

    pub fn push_rng(&mut self, name: &str, state: [u64; 4]) {
        self.manifest.rng.insert(
            name.to_string(),
            state.iter().map(|w| format!("{w:016x}")).collect(),
        );
    }

    pub fn array(&self, name: &str) -> AppResult<&[f64]> {
        let e = self
            .manifest
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| AppError::Config(format!("checkpoint missing array {name:?}")))?;
        Ok(&self.values[e.offset..e.offset + e.len])
    }

    pub fn rng_state(&self, name: &str) -> AppResult<[u64; 4]> {
        let words = self
            .manifest
            .rng
            .get(name)
            .ok_or_else(|| AppError::Config(format!("checkpoint missing rng {name:?}")))?;
        if words.len() != 4 {
            return Err(AppError::Config(format!("rng {name:?} has wrong length")));
        }
        let mut out = [0u64; 4];
        for (o, w) in out.iter_mut().zip(words.iter()) {
            *o = u64::from_str_radix(w, 16)
                .map_err(|e| AppError::Config(format!("rng {name:?}: {e}")))?;
        }
        Ok(out)
    }

    pub fn counter(&self, name: &str) -> AppResult<u64> {
        self.manifest
            .counters
            .get(name)
            .copied()
            .ok_or_else(|| AppError::Config(format!("checkpoint missing counter {name:?}")))
    }

    pub fn save(&self, dir: &Path) -> AppResult<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&self.manifest)?,
        )?;
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join("arrays.bin"), bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> AppResult<Self> {
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).map_err(|e| {
                AppError::Io(format!("read {}: {e}", dir.join("manifest.json").display()))
            })?)?;
        if manifest.format != "vocdiff-checkpoint-v1" {
            return Err(AppError::Config(format!(
                "unsupported checkpoint format {:?}",
                manifest.format
            )));
        }
        let bytes = fs::read(dir.join("arrays.bin"))
            .map_err(|e| AppError::Io(format!("read {}: {e}", dir.join("arrays.bin").display())))?;
        if bytes.len() % 8 != 0 {
            return Err(AppError::Config("arrays.bin length not a multiple of 8".into()));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let needed = manifest
            .entries
            .iter()
            .map(|e| e.offset + e.len)
            .max()
            .unwrap_or(0);
        if values.len() < needed {
            return Err(AppError::Config(format!(
                "arrays.bin holds {} values but the manifest references {needed}",
                values.len()
            )));
        }
        Ok(Checkpoint { manifest, values })
    }
}
