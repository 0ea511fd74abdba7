//! Dataset directories: synthetic generation to WAV files plus a JSON
//! manifest, and loading for training.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vocdiff_core::mel::MelFilterbank;
use vocdiff_core::stft::StftConfig;
use vocdiff_core::synth::{generate_dataset, SyntheticKind, SyntheticSpec};
use vocdiff_core::AudioBuffer;

use crate::error::{AppError, AppResult};
use crate::wav::{read_wav, write_wav, WavFormat};

/// On-disk form of [`SyntheticSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpecFile {
    pub kind: String,
    pub f0_min: f64,
    pub f0_max: f64,
    pub num_items: usize,
    pub duration_secs: f64,
    pub seed: u64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
}

fn default_sample_rate() -> u32 {
    16_000
}

impl SyntheticSpecFile {
    pub fn to_spec(&self) -> AppResult<SyntheticSpec> {
        let kind = match self.kind.as_str() {
            "harmonic_tone" => SyntheticKind::HarmonicTone,
            "formant_noise" => SyntheticKind::FormantNoise,
            "am_pulse" => SyntheticKind::AmPulse,
            other => {
                return Err(AppError::Config(format!(
                    "unknown dataset kind {other:?} (want harmonic_tone, formant_noise or am_pulse)"
                )))
            }
        };
        Ok(SyntheticSpec {
            kind,
            f0_min: self.f0_min,
            f0_max: self.f0_max,
            num_items: self.num_items,
            duration_secs: self.duration_secs,
            seed: self.seed,
            sample_rate: self.sample_rate,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: SyntheticSpecFile,
    pub items: Vec<String>,
}

/// Generates the dataset and writes `item_XXX.wav` files plus
/// `manifest.json` into `out_dir`.
pub fn write_dataset(spec_file: &SyntheticSpecFile, out_dir: &Path) -> AppResult<Vec<PathBuf>> {
    let spec = spec_file.to_spec()?;
    // Mel grids from generate_dataset are recomputed at train time with the
    // trainer's own config; a small default serves the generation contract.
    let cfg = StftConfig::new(256, 64, 256, true)?;
    let fb = MelFilterbank::new(32, 256, spec.sample_rate, 0.0, spec.sample_rate as f64 / 2.0)?;
    let items = generate_dataset(&spec, &cfg, &fb, 1e-5)?;
    fs::create_dir_all(out_dir)?;
    let mut names = Vec::new();
    let mut paths = Vec::new();
    for (i, (buf, _mel)) in items.iter().enumerate() {
        let name = format!("item_{i:03}.wav");
        let path = out_dir.join(&name);
        write_wav(&path, buf, WavFormat::Float32)?;
        names.push(name);
        paths.push(path);
    }
    let manifest = DatasetManifest {
        spec: spec_file.clone(),
        items: names,
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(paths)
}

/// Loads every WAV in the directory (manifest order when present, sorted
/// filename order otherwise).
pub fn load_dataset(dir: &Path) -> AppResult<Vec<AudioBuffer>> {
    let manifest_path = dir.join("manifest.json");
    let files: Vec<PathBuf> = if manifest_path.exists() {
        let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
        manifest.items.iter().map(|n| dir.join(n)).collect()
    } else {
        let mut v: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|e| e == "wav").unwrap_or(false))
            .collect();
        v.sort();
        v
    };
    if files.is_empty() {
        return Err(AppError::Config(format!(
            "no wav files found in {}",
            dir.display()
        )));
    }
    files.iter().map(|p| read_wav(p)).collect()
}
