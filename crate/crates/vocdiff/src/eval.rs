//! Offline comparison of reference and synthesized audio: mel-L1 and
//! multi-window log-spectral distance.

use std::fs;
use std::path::{Path, PathBuf};

use vocdiff_core::losses::mel_l1;
use vocdiff_core::mel::MelFilterbank;
use vocdiff_core::stft::{stft, StftConfig};
use vocdiff_core::AudioBuffer;

use crate::error::{AppError, AppResult};
use crate::wav::read_wav;

pub struct EvalSettings {
    pub sample_rate: u32,
    pub num_mels: usize,
    pub mel_fft: usize,
    pub mel_hop: usize,
    pub log_floor: f64,
    /// FFT sizes for the log-spectral distances.
    pub lsd_windows: Vec<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            sample_rate: 16_000,
            num_mels: 32,
            mel_fft: 256,
            mel_hop: 64,
            log_floor: 1e-5,
            lsd_windows: vec![256, 512, 1024],
        }
    }
}

pub struct EvalRow {
    pub name: String,
    pub mel_l1: f64,
    pub lsd: Vec<f64>,
}

/// Log-spectral distance: mean over frames of the RMS log-magnitude gap.
pub fn log_spectral_distance(
    a: &AudioBuffer,
    b: &AudioBuffer,
    fft_size: usize,
) -> AppResult<f64> {
    let cfg = StftConfig::new(fft_size, fft_size / 4, fft_size, true)?;
    let sa = stft(a, &cfg)?;
    let sb = stft(b, &cfg)?;
    let frames = sa.num_frames.min(sb.num_frames);
    let floor = 1e-5;
    let mut acc = 0.0;
    for f in 0..frames {
        let mut frame_acc = 0.0;
        for k in 0..sa.num_bins {
            let la = sa.magnitude(f, k).max(floor).ln();
            let lb = sb.magnitude(f, k).max(floor).ln();
            frame_acc += (la - lb) * (la - lb);
        }
        acc += (frame_acc / sa.num_bins as f64).sqrt();
    }
    Ok(acc / frames as f64)
}

fn wav_names(dir: &Path) -> AppResult<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let p = e.path();
            if p.extension().map(|x| x == "wav").unwrap_or(false) {
                p.file_name().map(|n| n.to_string_lossy().into_owned())
            } else {
                None
            }
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(AppError::Config(format!("no wav files in {}", dir.display())));
    }
    Ok(names)
}

/// Pairs files by name across the two directories; lengths are truncated to
/// the shorter of each pair.
pub fn evaluate_dirs(
    ref_dir: &Path,
    hyp_dir: &Path,
    settings: &EvalSettings,
) -> AppResult<Vec<EvalRow>> {
    let names = wav_names(ref_dir)?;
    let cfg = StftConfig::new(settings.mel_fft, settings.mel_hop, settings.mel_fft, true)?;
    let fb = MelFilterbank::new(
        settings.num_mels,
        settings.mel_fft,
        settings.sample_rate,
        0.0,
        settings.sample_rate as f64 / 2.0,
    )?;
    let mut rows = Vec::new();
    for name in names {
        let rp: PathBuf = ref_dir.join(&name);
        let hp: PathBuf = hyp_dir.join(&name);
        if !hp.exists() {
            return Err(AppError::Config(format!(
                "missing counterpart for {name} in {}",
                hyp_dir.display()
            )));
        }
        let mut a = read_wav(&rp)?;
        let mut b = read_wav(&hp)?;
        if a.sample_rate != settings.sample_rate || b.sample_rate != settings.sample_rate {
            return Err(AppError::Config(format!(
                "{name}: sample rates ({}, {}) do not match settings ({})",
                a.sample_rate, b.sample_rate, settings.sample_rate
            )));
        }
        let n = a.len().min(b.len());
        a.samples.truncate(n);
        b.samples.truncate(n);
        let mel = mel_l1(&a, &b, &cfg, &fb, settings.log_floor)?;
        let lsd = settings
            .lsd_windows
            .iter()
            .map(|&w| log_spectral_distance(&a, &b, w))
            .collect::<AppResult<Vec<f64>>>()?;
        rows.push(EvalRow {
            name,
            mel_l1: mel,
            lsd,
        });
    }
    Ok(rows)
}

pub fn write_report(path: &Path, rows: &[EvalRow], settings: &EvalSettings) -> AppResult<()> {
    let mut out = String::from("name,mel_l1");
    for w in &settings.lsd_windows {
        out.push_str(&format!(",lsd_{w}"));
    }
    out.push('\n');
    let mut mel_sum = 0.0;
    let mut lsd_sums = vec![0.0; settings.lsd_windows.len()];
    for row in rows {
        out.push_str(&format!("{},{}", row.name, row.mel_l1));
        for (i, v) in row.lsd.iter().enumerate() {
            out.push_str(&format!(",{v}"));
            lsd_sums[i] += v;
        }
        out.push('\n');
        mel_sum += row.mel_l1;
    }
    let n = rows.len() as f64;
    out.push_str(&format!("__mean__,{}", mel_sum / n));
    for s in &lsd_sums {
        out.push_str(&format!(",{}", s / n));
    }
    out.push('\n');
    fs::write(path, out)?;
    Ok(())
}
