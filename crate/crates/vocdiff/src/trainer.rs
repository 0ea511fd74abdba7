//! Training loop: generator and discriminator updates on diffused samples,
//! the adaptive diffusion cap, optimizer state, checkpoints, and metrics.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use vocdiff_core::adaptive::{record_minibatch, sample_t, update_t, AdaptiveState};
use vocdiff_core::diffusion::{build_schedule, diffuse, DiffusionSchedule, NoiseSource};
use vocdiff_core::envelope::{estimate_envelope, invert_filter, minimum_phase_filter, ShapedNoiseSampler};
use vocdiff_core::losses::{
    discriminator_loss, generator_loss, LossReport, LossWeights, MelLossConfig,
};
use vocdiff_core::mel::{mel_spectrogram, MelFilterbank, MelGrid};
use vocdiff_core::nets::{
    forward_discriminators, GeneratorConfig, GeneratorNet, MpdConfig, MpdNet, MrdConfig, MrdNet,
    ParamSet,
};
use vocdiff_core::optim::Adam;
use vocdiff_core::stft::StftConfig;
use vocdiff_core::tensor::{self, backward, Tensor};
use vocdiff_core::{AudioBuffer, Rng};

use crate::checkpoint::Checkpoint;
use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffusionMode {
    /// Plain GAN training: the discriminator sees clean samples.
    None,
    /// i.i.d. Gaussian perturbation.
    Standard,
    /// Spectrally shaped perturbation from the inverse-envelope filter.
    Spec,
}

impl std::str::FromStr for DiffusionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(DiffusionMode::None),
            "standard" => Ok(DiffusionMode::Standard),
            "spec" => Ok(DiffusionMode::Spec),
            other => Err(format!("unknown mode {other:?} (none|standard|spec)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RdSource {
    All,
    MpdOnly,
    MrdOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub segment_length: usize,
    pub lr_init: f64,
    /// Exponential decay applied once per epoch (one pass over the dataset).
    pub lr_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub mode: DiffusionMode,
    pub seed: u64,
    pub sigma: f64,
    pub d_target: f64,
    pub t_min: usize,
    pub t_max: usize,
    pub t_initial: usize,
    pub c_step: usize,
    /// Minibatches per overfitting estimate.
    pub rd_window: usize,
    pub rd_source: RdSource,
    /// Resample t for the generator update (false reuses the
    /// discriminator's draw).
    pub resample_t_for_generator: bool,
    pub beta_start: f64,
    pub beta_end: f64,
    pub checkpoint_every: usize,
    pub sample_rate: u32,
    pub num_mels: usize,
    pub mel_fft: usize,
    pub mel_fmin: f64,
    pub mel_fmax: f64,
    pub log_floor: f64,
    pub cepstral_order: usize,
    pub envelope_floor_db: f64,
    pub lambda_fm: f64,
    pub lambda_mel: f64,
    pub generator_channels: usize,
    pub upsample_rates: Vec<usize>,
    pub resblock_kernels: Vec<usize>,
    pub resblock_dilations: Vec<usize>,
    pub mpd_periods: Vec<usize>,
    pub mpd_channels: Vec<usize>,
    pub mrd_resolutions: Vec<(usize, usize, usize)>,
    pub mrd_channels: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 2,
            segment_length: 512,
            lr_init: 2e-4,
            lr_decay: 0.999,
            adam_beta1: 0.8,
            adam_beta2: 0.99,
            mode: DiffusionMode::Spec,
            seed: 1,
            sigma: 0.05,
            d_target: 0.6,
            t_min: 5,
            t_max: 500,
            t_initial: 5,
            c_step: 1,
            rd_window: 4,
            rd_source: RdSource::All,
            resample_t_for_generator: true,
            beta_start: 1e-4,
            beta_end: 0.02,
            checkpoint_every: 500,
            sample_rate: 16_000,
            num_mels: 32,
            mel_fft: 256,
            mel_fmin: 0.0,
            mel_fmax: 8000.0,
            log_floor: 1e-5,
            cepstral_order: 24,
            envelope_floor_db: -40.0,
            lambda_fm: 2.0,
            lambda_mel: 45.0,
            generator_channels: 48,
            upsample_rates: vec![8, 8],
            resblock_kernels: vec![3, 5],
            resblock_dilations: vec![1, 3],
            mpd_periods: vec![2, 3, 5],
            mpd_channels: vec![8, 16, 32],
            mrd_resolutions: vec![(256, 64, 128), (512, 128, 256), (128, 32, 64)],
            mrd_channels: vec![4, 8, 16],
        }
    }
}

impl TrainConfig {
    pub fn hop(&self) -> usize {
        self.upsample_rates.iter().product()
    }

    pub fn validate(&self) -> AppResult<()> {
        if self.batch_size == 0 {
            return Err(AppError::Config("batch_size must be positive".into()));
        }
        let hop = self.hop();
        if self.segment_length == 0 || !self.segment_length.is_multiple_of(hop) {
            return Err(AppError::Config(format!(
                "segment_length {} must be a positive multiple of the upsample product {hop}",
                self.segment_length
            )));
        }
        if !(self.lr_init > 0.0 && self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(AppError::Config("bad learning-rate settings".into()));
        }
        if hop > self.mel_fft {
            return Err(AppError::Config(format!(
                "upsample product {hop} exceeds mel_fft {}",
                self.mel_fft
            )));
        }
        if !(self.sigma >= 0.0) {
            return Err(AppError::Config("sigma must be nonnegative".into()));
        }
        if self.t_initial < self.t_min || self.t_initial > self.t_max {
            return Err(AppError::Config("t_initial outside [t_min, t_max]".into()));
        }
        Ok(())
    }

    fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            num_mels: self.num_mels,
            base_channels: self.generator_channels,
            upsample_rates: self.upsample_rates.clone(),
            resblock_kernels: self.resblock_kernels.clone(),
            resblock_dilations: self.resblock_dilations.clone(),
        }
    }

    fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_fm: self.lambda_fm,
            lambda_mel: self.lambda_mel,
        }
    }

    /// Diffusion is a no-op when disabled or in the zero-noise limit, where
    /// the pipeline reduces to the plain-GAN wiring.
    fn diffusing(&self) -> bool {
        self.mode != DiffusionMode::None && self.sigma > 0.0
    }
}

/// One row of the metrics log.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub report: LossReport,
    /// Emitted only on the steps where a window of minibatches completed.
    pub r_d: Option<f64>,
    /// Current diffusion cap (None when diffusion is disabled).
    pub t_cap: Option<usize>,
    pub lr: f64,
}

impl StepRecord {
    pub fn csv_header() -> &'static str {
        "step,d_loss,g_adv,g_fm,g_mel,r_d,t_cap,lr"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.report.d_loss,
            self.report.g_adv,
            self.report.g_fm,
            self.report.g_mel,
            self.r_d.map(|v| v.to_string()).unwrap_or_default(),
            self.t_cap.map(|v| v.to_string()).unwrap_or_default(),
            self.lr
        )
    }
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub gen: GeneratorNet,
    pub mpd: MpdNet,
    pub mrd: MrdNet,
    opt_g: Adam,
    opt_d: Adam,
    g_params: Vec<Tensor>,
    d_params: Vec<Tensor>,
    pub adaptive: AdaptiveState,
    sched: DiffusionSchedule,
    pub mel_cfg: MelLossConfig,
    rng_data: Rng,
    rng_diffusion: Rng,
    pub step: usize,
    dataset: Vec<AudioBuffer>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, dataset: Vec<AudioBuffer>) -> AppResult<Self> {
        cfg.validate()?;
        if dataset.is_empty() {
            return Err(AppError::Config("empty dataset".into()));
        }
        for (i, item) in dataset.iter().enumerate() {
            if item.sample_rate != cfg.sample_rate {
                return Err(AppError::Config(format!(
                    "dataset item {i} has sample rate {} but the config says {}",
                    item.sample_rate, cfg.sample_rate
                )));
            }
            if item.len() < cfg.segment_length {
                return Err(AppError::Config(format!(
                    "dataset item {i} is shorter ({}) than segment_length {}",
                    item.len(),
                    cfg.segment_length
                )));
            }
        }
        let mut seed_rng = Rng::seed_from_u64(cfg.seed);
        let mut rng_init = seed_rng.split();
        let rng_data = seed_rng.split();
        let rng_diffusion = seed_rng.split();

        let gen = GeneratorNet::new(cfg.generator_config(), &mut rng_init)?;
        let mpd = MpdNet::new(
            MpdConfig {
                periods: cfg.mpd_periods.clone(),
                channels: cfg.mpd_channels.clone(),
            },
            &mut rng_init,
        )?;
        let mrd = MrdNet::new(
            MrdConfig {
                resolutions: cfg.mrd_resolutions.clone(),
                channels: cfg.mrd_channels.clone(),
            },
            &mut rng_init,
        )?;
        let g_params = gen.parameters();
        let mut d_params = mpd.parameters();
        d_params.extend(mrd.parameters());
        let opt_g = Adam::new(&g_params, cfg.adam_beta1, cfg.adam_beta2);
        let opt_d = Adam::new(&d_params, cfg.adam_beta1, cfg.adam_beta2);

        let adaptive = AdaptiveState::new(
            cfg.t_initial,
            cfg.t_min,
            cfg.t_max,
            cfg.d_target,
            cfg.c_step,
            cfg.rd_window,
        )?;
        let sched = build_schedule(cfg.t_max, cfg.beta_start, cfg.beta_end)?;
        let stft = StftConfig::new(cfg.mel_fft, cfg.hop(), cfg.mel_fft, true)?;
        let fb = MelFilterbank::new(
            cfg.num_mels,
            cfg.mel_fft,
            cfg.sample_rate,
            cfg.mel_fmin,
            cfg.mel_fmax,
        )?;
        let mel_cfg = MelLossConfig::new(stft, fb, cfg.log_floor)?;

        Ok(Trainer {
            cfg,
            gen,
            mpd,
            mrd,
            opt_g,
            opt_d,
            g_params,
            d_params,
            adaptive,
            sched,
            mel_cfg,
            rng_data,
            rng_diffusion,
            step: 0,
            dataset,
        })
    }

    pub fn num_parameters(&self) -> (usize, usize) {
        (
            self.g_params.iter().map(|p| p.len()).sum(),
            self.d_params.iter().map(|p| p.len()).sum(),
        )
    }

    /// Replaces the diffusion noise stream, leaving data order, init, and
    /// optimizer state untouched. Lets experiments vary the perturbation
    /// draws in isolation.
    pub fn reseed_diffusion(&mut self, seed: u64) {
        self.rng_diffusion = Rng::seed_from_u64(seed);
    }

    /// lr_init · decay^(completed epochs), one epoch = one dataset pass.
    pub fn lr_for_step(&self, step0: usize) -> f64 {
        let epoch_steps = (self.dataset.len() / self.cfg.batch_size).max(1);
        let epoch = (step0 / epoch_steps) as f64;
        self.cfg.lr_init * self.cfg.lr_decay.powf(epoch)
    }

    /// Mel condition aligned to the generator: exactly len/hop frames.
    pub fn condition_mel(&self, x: &AudioBuffer) -> AppResult<MelGrid> {
        let full = mel_spectrogram(x, &self.mel_cfg.stft, &self.mel_cfg.fb, self.mel_cfg.log_floor)?;
        let frames = x.len() / self.cfg.hop();
        let mut out = MelGrid::new(full.num_bands, frames);
        for b in 0..full.num_bands {
            for f in 0..frames {
                out.set(b, f, full.at(b, f));
            }
        }
        Ok(out)
    }

    fn noise_source_for(&self, cond: &MelGrid) -> AppResult<NoiseSource> {
        match self.cfg.mode {
            DiffusionMode::Standard => Ok(NoiseSource::Standard {
                sigma: self.cfg.sigma,
            }),
            DiffusionMode::Spec => {
                let env = estimate_envelope(
                    cond,
                    &self.mel_cfg.fb,
                    self.cfg.cepstral_order,
                    self.cfg.envelope_floor_db,
                )?;
                let filt = invert_filter(&minimum_phase_filter(&env)?)?;
                let sampler = ShapedNoiseSampler::new(
                    filt,
                    self.mel_cfg.stft.clone(),
                    self.cfg.sigma,
                    self.cfg.sample_rate,
                )?;
                Ok(NoiseSource::Shaped(sampler))
            }
            DiffusionMode::None => unreachable!("noise source requested with diffusion off"),
        }
    }

    /// Runs one optimization step (discriminator then generator) on a fresh
    /// random batch.
    pub fn train_step(&mut self) -> AppResult<StepRecord> {
        let lr = self.lr_for_step(self.step);
        let batch = self.cfg.batch_size;
        let seg = self.cfg.segment_length;
        let diffusing = self.cfg.diffusing();

        // Batch assembly: segments plus their mel conditions.
        let mut xs: Vec<AudioBuffer> = Vec::with_capacity(batch);
        let mut conds: Vec<MelGrid> = Vec::with_capacity(batch);
        for _ in 0..batch {
            let item = &self.dataset[self.rng_data.below(self.dataset.len())];
            let max_off = item.len() - seg;
            let off = if max_off == 0 {
                0
            } else {
                self.rng_data.below(max_off + 1)
            };
            let x = AudioBuffer::new(item.samples[off..off + seg].to_vec(), item.sample_rate);
            let cond = self.condition_mel(&x)?;
            xs.push(x);
            conds.push(cond);
        }

        // One generator forward per element; reused for both updates.
        let g_outs: Vec<Tensor> = conds
            .iter()
            .map(|c| self.gen.forward_grid(c))
            .collect::<Result<_, _>>()?;

        // Per-element noise sources (spec mode shapes noise from the
        // element's own condition).
        let noise_sources: Option<Vec<NoiseSource>> = if diffusing {
            Some(
                conds
                    .iter()
                    .map(|c| self.noise_source_for(c))
                    .collect::<AppResult<_>>()?,
            )
        } else {
            None
        };

        // ---- Discriminator update ----
        // Clears the discriminator gradients left by the previous step's
        // generator backward pass.
        self.opt_d.zero_grad(&self.d_params);
        let mut d_loss_total: Option<Tensor> = None;
        let mut d_per_sub_acc: Vec<f64> = Vec::new();
        let mut rd_outputs: Vec<f64> = Vec::new();
        let mut t_draws: Vec<usize> = Vec::with_capacity(batch);
        for i in 0..batch {
            let (y_real, y_fake) = if diffusing {
                let t = sample_t(&self.adaptive, &mut self.rng_diffusion);
                t_draws.push(t);
                let ns = &noise_sources.as_ref().unwrap()[i];
                let y = diffuse(&xs[i], t, &self.sched, ns, &mut self.rng_diffusion)?;
                let (sc, nc) = self.sched.mix_coefficients(t)?;
                let eps = ns.draw(seg, self.cfg.sample_rate, &mut self.rng_diffusion)?;
                let g_det = g_outs[i].detach();
                let y_g = tensor::add(
                    &tensor::scale(&g_det, sc),
                    &Tensor::constant(&[seg], eps.samples.iter().map(|e| nc * e).collect()),
                );
                (Tensor::constant(&[seg], y.samples), y_g)
            } else {
                (
                    Tensor::constant(&[seg], xs[i].samples.clone()),
                    g_outs[i].detach(),
                )
            };
            let (scores_real, _) = forward_discriminators(&self.mpd, &self.mrd, &y_real)?;
            let (scores_fake, _) = forward_discriminators(&self.mpd, &self.mrd, &y_fake)?;
            // Overfitting statistic from the diffused real branch.
            if diffusing {
                let n_mpd = self.cfg.mpd_periods.len();
                for (si, s) in scores_real.iter().enumerate() {
                    let keep = match self.cfg.rd_source {
                        RdSource::All => true,
                        RdSource::MpdOnly => si < n_mpd,
                        RdSource::MrdOnly => si >= n_mpd,
                    };
                    if keep {
                        let vals = s.values();
                        rd_outputs.push(vals.iter().sum::<f64>() / vals.len() as f64);
                    }
                }
            }
            let (loss, per_sub) = discriminator_loss(&scores_real, &scores_fake)?;
            if d_per_sub_acc.is_empty() {
                d_per_sub_acc = vec![0.0; per_sub.len()];
            }
            for (acc, v) in d_per_sub_acc.iter_mut().zip(per_sub.iter()) {
                *acc += v / batch as f64;
            }
            d_loss_total = Some(match d_loss_total {
                None => loss,
                Some(acc) => tensor::add(&acc, &loss),
            });
        }
        let d_loss = tensor::scale(&d_loss_total.expect("non-empty batch"), 1.0 / batch as f64);
        let d_loss_value = d_loss.item();
        backward(&d_loss)?;
        self.opt_d.step(&self.d_params, lr);

        // ---- Adaptive cap update (every rd_window minibatches) ----
        let mut r_d_emitted = None;
        if diffusing {
            if let Some(r_d) = record_minibatch(&mut self.adaptive, &rd_outputs)? {
                update_t(&mut self.adaptive, r_d)?;
                r_d_emitted = Some(r_d);
            }
        }

        // ---- Generator update (discriminator already updated) ----
        self.opt_g.zero_grad(&self.g_params);
        let mut g_total: Option<Tensor> = None;
        let mut report = LossReport::default();
        for i in 0..batch {
            let (y_real, y_fake) = if diffusing {
                let t = if self.cfg.resample_t_for_generator {
                    sample_t(&self.adaptive, &mut self.rng_diffusion)
                } else {
                    t_draws[i]
                };
                let ns = &noise_sources.as_ref().unwrap()[i];
                let y = diffuse(&xs[i], t, &self.sched, ns, &mut self.rng_diffusion)?;
                let (sc, nc) = self.sched.mix_coefficients(t)?;
                let eps = ns.draw(seg, self.cfg.sample_rate, &mut self.rng_diffusion)?;
                let y_g = tensor::add(
                    &tensor::scale(&g_outs[i], sc),
                    &Tensor::constant(&[seg], eps.samples.iter().map(|e| nc * e).collect()),
                );
                (Tensor::constant(&[seg], y.samples), y_g)
            } else {
                (
                    Tensor::constant(&[seg], xs[i].samples.clone()),
                    g_outs[i].clone(),
                )
            };
            let (_, feats_real) = forward_discriminators(&self.mpd, &self.mrd, &y_real)?;
            let (scores_fake, feats_fake) = forward_discriminators(&self.mpd, &self.mrd, &y_fake)?;
            let (total, rep) = generator_loss(
                &scores_fake,
                &feats_real,
                &feats_fake,
                &xs[i],
                &g_outs[i],
                &self.cfg.weights(),
                &self.mel_cfg,
            )?;
            report.g_adv += rep.g_adv / batch as f64;
            report.g_fm += rep.g_fm / batch as f64;
            report.g_mel += rep.g_mel / batch as f64;
            report.g_total += rep.g_total / batch as f64;
            if report.g_adv_per_sub.is_empty() {
                report.g_adv_per_sub = vec![0.0; rep.g_adv_per_sub.len()];
            }
            for (acc, v) in report.g_adv_per_sub.iter_mut().zip(rep.g_adv_per_sub.iter()) {
                *acc += v / batch as f64;
            }
            g_total = Some(match g_total {
                None => total,
                Some(acc) => tensor::add(&acc, &total),
            });
        }
        let g_loss = tensor::scale(&g_total.expect("non-empty batch"), 1.0 / batch as f64);
        backward(&g_loss)?;
        self.opt_g.step(&self.g_params, lr);

        report.d_loss = d_loss_value;
        report.d_per_sub = d_per_sub_acc;
        self.step += 1;

        let record = StepRecord {
            step: self.step,
            report,
            r_d: r_d_emitted,
            t_cap: if diffusing {
                Some(self.adaptive.t_current)
            } else {
                None
            },
            lr,
        };
        self.check_finite(&record)?;
        Ok(record)
    }

    /// Aborts with a diagnostic dump on non-finite losses or parameters.
    fn check_finite(&self, rec: &StepRecord) -> AppResult<()> {
        let r = &rec.report;
        let all_finite = [r.d_loss, r.g_adv, r.g_fm, r.g_mel, r.g_total]
            .iter()
            .all(|v| v.is_finite())
            && self.gen.all_finite()
            && self.mpd.all_finite()
            && self.mrd.all_finite();
        if all_finite {
            return Ok(());
        }
        let norm = |params: &[Tensor]| -> f64 {
            params
                .iter()
                .map(|p| p.values().iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        };
        Err(AppError::Numeric(format!(
            "non-finite state at step {}: d_loss={} g_adv={} g_fm={} g_mel={} g_total={} \
             |G|={:.6e} |D|={:.6e}",
            rec.step,
            r.d_loss,
            r.g_adv,
            r.g_fm,
            r.g_mel,
            r.g_total,
            norm(&self.g_params),
            norm(&self.d_params),
        )))
    }

    // ---- Checkpointing ----

    pub fn to_checkpoint(&self) -> AppResult<Checkpoint> {
        let cfg_json = serde_json::to_value(&self.cfg)?;
        let mut ck = Checkpoint::new(self.step, cfg_json);
        for (name, p) in self
            .gen
            .named_parameters()
            .into_iter()
            .chain(self.mpd.named_parameters())
            .chain(self.mrd.named_parameters())
        {
            ck.push_array(&name, p.shape(), &p.values());
        }
        for (prefix, opt, params) in [
            ("opt_g", &self.opt_g, &self.g_params),
            ("opt_d", &self.opt_d, &self.d_params),
        ] {
            for (i, p) in params.iter().enumerate() {
                ck.push_array(&format!("{prefix}.m.{i}"), p.shape(), &opt.m[i]);
                ck.push_array(&format!("{prefix}.v.{i}"), p.shape(), &opt.v[i]);
            }
        }
        ck.push_array(
            "adaptive.window",
            &[self.adaptive.window.len()],
            &self.adaptive.window,
        );
        ck.push_rng("data", self.rng_data.state());
        ck.push_rng("diffusion", self.rng_diffusion.state());
        ck.manifest.counters.insert("step".into(), self.step as u64);
        ck.manifest.counters.insert("opt_g.t".into(), self.opt_g.t);
        ck.manifest.counters.insert("opt_d.t".into(), self.opt_d.t);
        ck.manifest
            .counters
            .insert("adaptive.t_current".into(), self.adaptive.t_current as u64);
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint, dataset: Vec<AudioBuffer>) -> AppResult<Self> {
        let cfg: TrainConfig = serde_json::from_value(ck.manifest.train_config.clone())?;
        let mut tr = Trainer::new(cfg, dataset)?;
        for (name, p) in tr
            .gen
            .named_parameters()
            .into_iter()
            .chain(tr.mpd.named_parameters())
            .chain(tr.mrd.named_parameters())
        {
            let vals = ck.array(&name)?;
            if vals.len() != p.len() {
                return Err(AppError::Config(format!(
                    "checkpoint array {name} has {} values, net expects {}",
                    vals.len(),
                    p.len()
                )));
            }
            p.update_values(|v| v.copy_from_slice(vals));
        }
        for (prefix, opt, params) in [
            ("opt_g", &mut tr.opt_g, &tr.g_params),
            ("opt_d", &mut tr.opt_d, &tr.d_params),
        ] {
            for i in 0..params.len() {
                opt.m[i].copy_from_slice(ck.array(&format!("{prefix}.m.{i}"))?);
                opt.v[i].copy_from_slice(ck.array(&format!("{prefix}.v.{i}"))?);
            }
            opt.t = ck.counter(&format!("{prefix}.t"))?;
        }
        tr.adaptive.window = ck.array("adaptive.window")?.to_vec();
        tr.adaptive.t_current = ck.counter("adaptive.t_current")? as usize;
        tr.rng_data = Rng::from_state(ck.rng_state("data")?);
        tr.rng_diffusion = Rng::from_state(ck.rng_state("diffusion")?);
        tr.step = ck.counter("step")? as usize;
        Ok(tr)
    }
}

/// Full run: steps, metrics CSV, periodic + final checkpoints. Resumable
/// from a checkpoint directory; on resume the model, optimizer, and RNG
/// state come from the checkpoint and only the run-control fields of `cfg`
/// (total steps, checkpoint cadence) apply.
pub fn train(
    cfg: TrainConfig,
    dataset: Vec<AudioBuffer>,
    out_dir: &Path,
    resume: Option<&Path>,
    quiet: bool,
) -> AppResult<()> {
    fs::create_dir_all(out_dir)?;
    let mut trainer = match resume {
        Some(dir) => {
            let ck = Checkpoint::load(dir)?;
            let mut tr = Trainer::from_checkpoint(&ck, dataset)?;
            tr.cfg.steps = cfg.steps;
            tr.cfg.checkpoint_every = cfg.checkpoint_every;
            tr
        }
        None => Trainer::new(cfg, dataset)?,
    };
    let metrics_path = out_dir.join("metrics.csv");
    let fresh = !metrics_path.exists();
    let mut metrics = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)?;
    if fresh {
        writeln!(metrics, "{}", StepRecord::csv_header())?;
    }

    let total_steps = trainer.cfg.steps;
    if trainer.step == 0 {
        trainer
            .to_checkpoint()?
            .save(&out_dir.join("ckpt_initial"))?;
    }
    let mut ran_any = false;
    // Best checkpoint tracks the lowest mel loss averaged over each
    // checkpoint window.
    let mut window_mel = 0.0;
    let mut window_count = 0usize;
    let mut best_mel = f64::INFINITY;
    while trainer.step < total_steps {
        let rec = trainer.train_step()?;
        ran_any = true;
        writeln!(metrics, "{}", rec.to_csv_row())?;
        window_mel += rec.report.g_mel;
        window_count += 1;
        if trainer.cfg.checkpoint_every > 0 && trainer.step % trainer.cfg.checkpoint_every == 0 {
            let dir = out_dir.join(format!("ckpt_step{:06}", trainer.step));
            trainer.to_checkpoint()?.save(&dir)?;
            let mean_mel = window_mel / window_count as f64;
            if mean_mel < best_mel {
                best_mel = mean_mel;
                trainer.to_checkpoint()?.save(&out_dir.join("ckpt_best"))?;
            }
            window_mel = 0.0;
            window_count = 0;
        }
        if !quiet && (trainer.step % 100 == 0 || trainer.step == total_steps) {
            eprintln!(
                "step {}/{} d={:.4} adv={:.4} fm={:.4} mel={:.4}",
                trainer.step, total_steps, rec.report.d_loss, rec.report.g_adv, rec.report.g_fm, rec.report.g_mel
            );
        }
    }
    metrics.flush()?;
    if ran_any {
        trainer.to_checkpoint()?.save(&out_dir.join("ckpt_final"))?;
    }
    Ok(())
}

/// Rebuilds the generator from a checkpoint and synthesizes a waveform from
/// a mel grid (single pass, no diffusion at inference).
pub fn synthesize(ck: &Checkpoint, mel: &MelGrid) -> AppResult<AudioBuffer> {
    let cfg: TrainConfig = serde_json::from_value(ck.manifest.train_config.clone())?;
    let mut rng = Rng::seed_from_u64(0); // init values are overwritten below
    let gen = GeneratorNet::new(
        GeneratorConfig {
            num_mels: cfg.num_mels,
            base_channels: cfg.generator_channels,
            upsample_rates: cfg.upsample_rates.clone(),
            resblock_kernels: cfg.resblock_kernels.clone(),
            resblock_dilations: cfg.resblock_dilations.clone(),
        },
        &mut rng,
    )?;
    for (name, p) in gen.named_parameters() {
        let vals = ck.array(&name)?;
        p.update_values(|v| v.copy_from_slice(vals));
    }
    let out = gen.forward_grid(mel)?;
    Ok(AudioBuffer::new(out.to_vec(), cfg.sample_rate))
}
