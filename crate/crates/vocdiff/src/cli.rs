//! Command-line front end. Every command is deterministic under a fixed
//! `--seed`; outputs are files (WAV/CSV/JSON), not an interactive session.

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use vocdiff_core::envelope::{
    estimate_envelope, invert_filter, minimum_phase_filter, welch_psd, ShapedNoiseSampler,
};
use vocdiff_core::mel::{mel_spectrogram, MelFilterbank};
use vocdiff_core::stft::StftConfig;
use vocdiff_core::Rng;

use crate::checkpoint::Checkpoint;
use crate::dataset::{load_dataset, write_dataset, SyntheticSpecFile};
use crate::error::{AppError, AppResult};
use crate::eval::{evaluate_dirs, write_report, EvalSettings};
use crate::melcsv::{read_mel_csv, write_mel_csv};
use crate::trainer::{self, DiffusionMode, TrainConfig};
use crate::wav::{read_wav, write_wav, WavFormat};

#[derive(Parser)]
#[command(
    name = "vocdiff",
    version,
    about = "GAN vocoder training with spectrally shaped diffusion noise"
)]
pub struct Cli {
    /// Seed override for randomized commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory from a JSON spec.
    GenData {
        /// JSON file: {"kind", "f0_min", "f0_max", "num_items",
        /// "duration_secs", "seed", "sample_rate"}
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a log-mel spectrogram CSV (rows = bands, columns = frames).
    Mel {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        fft: usize,
        #[arg(long, default_value_t = 64)]
        hop: usize,
        #[arg(long, default_value_t = 32)]
        mels: usize,
        #[arg(long, default_value_t = 0.0)]
        fmin: f64,
        /// Defaults to the Nyquist frequency.
        #[arg(long)]
        fmax: Option<f64>,
    },
    /// Shape noise by the inverse spectral-envelope filter of a mel CSV and
    /// report per-band expected vs empirical power.
    NoiseDemo {
        #[arg(long)]
        mel: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        psd: PathBuf,
        #[arg(long, default_value_t = 256)]
        fft: usize,
        #[arg(long, default_value_t = 64)]
        hop: usize,
        #[arg(long = "sample-rate", default_value_t = 16_000)]
        sample_rate: u32,
        #[arg(long = "cepstral-order", default_value_t = 24)]
        cepstral_order: usize,
        #[arg(long = "floor-db", default_value_t = -40.0, allow_hyphen_values = true)]
        floor_db: f64,
        #[arg(long, default_value_t = 200)]
        realizations: usize,
    },
    /// Train on a dataset directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Diffusion ablation axis: none | standard | spec.
        #[arg(long)]
        mode: Option<DiffusionMode>,
        #[arg(long)]
        steps: Option<usize>,
        /// Resume from a checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, default_value_t = false)]
        quiet: bool,
    },
    /// Single generator pass from a mel CSV (no diffusion at inference).
    Synth {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        mel: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mel-L1 and multi-window log-spectral distance between two
    /// directories of WAV files paired by name.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "sample-rate", default_value_t = 16_000)]
        sample_rate: u32,
        #[arg(long, default_value_t = 32)]
        mels: usize,
        #[arg(long, default_value_t = 256)]
        fft: usize,
        #[arg(long, default_value_t = 64)]
        hop: usize,
    },
}

pub fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::GenData { spec, out } => {
            let text = fs::read_to_string(&spec)
                .map_err(|e| AppError::Io(format!("read {}: {e}", spec.display())))?;
            let mut spec_file: SyntheticSpecFile = serde_json::from_str(&text)?;
            if let Some(seed) = cli.seed {
                spec_file.seed = seed;
            }
            let paths = write_dataset(&spec_file, &out)?;
            eprintln!("wrote {} items to {}", paths.len(), out.display());
            Ok(())
        }
        Command::Mel {
            input,
            out,
            fft,
            hop,
            mels,
            fmin,
            fmax,
        } => {
            let buf = read_wav(&input)?;
            let cfg = StftConfig::new(fft, hop, fft, true)?;
            let nyquist = buf.sample_rate as f64 / 2.0;
            let fb = MelFilterbank::new(mels, fft, buf.sample_rate, fmin, fmax.unwrap_or(nyquist))?;
            let grid = mel_spectrogram(&buf, &cfg, &fb, 1e-5)?;
            write_mel_csv(&out, &grid)?;
            Ok(())
        }
        Command::NoiseDemo {
            mel,
            sigma,
            out,
            psd,
            fft,
            hop,
            sample_rate,
            cepstral_order,
            floor_db,
            realizations,
        } => {
            let grid = read_mel_csv(&mel)?;
            let cfg = StftConfig::new(fft, hop, fft, true)?;
            let fb = MelFilterbank::new(
                grid.num_bands,
                fft,
                sample_rate,
                0.0,
                sample_rate as f64 / 2.0,
            )?;
            let env = estimate_envelope(&grid, &fb, cepstral_order, floor_db)?;
            let filt = invert_filter(&minimum_phase_filter(&env)?)?;
            let sampler = ShapedNoiseSampler::new(filt, cfg, sigma, sample_rate)?;
            let num_samples = (grid.num_frames * hop).max(fft * 4);
            let mut rng = Rng::seed_from_u64(cli.seed.unwrap_or(0));
            let noise = sampler.sample(num_samples, &mut rng)?;
            write_wav(&out, &noise, WavFormat::Float32)?;

            let expected = sampler.expected_band_power();
            let bins = expected.len();
            let mut empirical = vec![0.0; bins];
            let mut total = 0usize;
            for _ in 0..realizations.max(1) {
                let draw = sampler.sample(num_samples, &mut rng)?;
                let p = welch_psd(&draw.samples, fft)?;
                for (acc, v) in empirical.iter_mut().zip(p.iter()) {
                    *acc += v;
                }
                total += 1;
            }
            empirical.iter_mut().for_each(|v| *v /= total as f64);
            let mut csv = String::from("bin,freq_hz,expected_power,empirical_power,ratio_db\n");
            for k in 0..bins {
                let freq = k as f64 * sample_rate as f64 / fft as f64;
                let ratio_db = if expected[k] > 0.0 && empirical[k] > 0.0 {
                    10.0 * (empirical[k] / expected[k]).log10()
                } else {
                    0.0
                };
                csv.push_str(&format!(
                    "{k},{freq},{},{},{ratio_db}\n",
                    expected[k], empirical[k]
                ));
            }
            fs::write(&psd, csv)?;
            Ok(())
        }
        Command::Train {
            config,
            data,
            out,
            mode,
            steps,
            resume,
            quiet,
        } => {
            let mut cfg: TrainConfig = match (&config, &resume) {
                (Some(_), Some(_)) => {
                    return Err(AppError::Config(
                        "pass either --config or --resume, not both; a resumed run \
                         continues with the configuration stored in its checkpoint"
                            .into(),
                    ))
                }
                (Some(path), None) => {
                    let text = fs::read_to_string(path)
                        .map_err(|e| AppError::Io(format!("read {}: {e}", path.display())))?;
                    serde_json::from_str(&text)?
                }
                (None, Some(dir)) => {
                    let ck = Checkpoint::load(dir)?;
                    serde_json::from_value(ck.manifest.train_config.clone())?
                }
                (None, None) => TrainConfig::default(),
            };
            if resume.is_none() {
                if let Some(mode) = mode {
                    cfg.mode = mode;
                }
                if let Some(seed) = cli.seed {
                    cfg.seed = seed;
                }
            }
            if let Some(steps) = steps {
                cfg.steps = steps;
            }
            let dataset = load_dataset(&data)?;
            trainer::train(cfg, dataset, &out, resume.as_deref(), quiet)
        }
        Command::Synth { ckpt, mel, out } => {
            let ck = Checkpoint::load(&ckpt)?;
            let grid = read_mel_csv(&mel)?;
            let wave = trainer::synthesize(&ck, &grid)?;
            write_wav(&out, &wave, WavFormat::Float32)?;
            Ok(())
        }
        Command::Eval {
            reference,
            hyp,
            out,
            sample_rate,
            mels,
            fft,
            hop,
        } => {
            let settings = EvalSettings {
                sample_rate,
                num_mels: mels,
                mel_fft: fft,
                mel_hop: hop,
                ..EvalSettings::default()
            };
            let rows = evaluate_dirs(&reference, &hyp, &settings)?;
            write_report(&out, &rows, &settings)?;
            Ok(())
        }
    }
}
