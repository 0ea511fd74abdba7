//! Least-squares adversarial losses on diffused samples, feature matching,
//! and the mel-spectrogram reconstruction term.
//!
//! The adversarial and feature-matching terms consume *diffused* signals;
//! the mel term is computed on the clean pair only and never touches a
//! discriminator, so changing the diffusion draw cannot change it.
//!
//! Reductions: mean over elements within each sub-discriminator, summed
//! across sub-discriminators.

use alloc::rc::Rc;
use alloc::vec::Vec;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::math;
use crate::mel::{mel_spectrogram, MelFilterbank, MelGrid};
use crate::stft::StftConfig;
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_fm: f64,
    pub lambda_mel: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_fm: 2.0,
            lambda_mel: 45.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_fm < 0.0 || self.lambda_mel < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Scalar loss terms for one step, for logging and assertions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossReport {
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_fm: f64,
    pub g_mel: f64,
    pub g_total: f64,
    /// Per-sub-discriminator breakdown of the discriminator loss.
    pub d_per_sub: Vec<f64>,
    /// Per-sub-discriminator breakdown of the adversarial generator term.
    pub g_adv_per_sub: Vec<f64>,
}

/// Mel parameters shared by the generator condition and the mel loss.
#[derive(Debug, Clone)]
pub struct MelLossConfig {
    pub stft: StftConfig,
    pub fb: MelFilterbank,
    pub log_floor: f64,
    weights: Rc<Vec<f64>>,
}

impl MelLossConfig {
    pub fn new(stft: StftConfig, fb: MelFilterbank, log_floor: f64) -> Result<Self> {
        if fb.num_bins != stft.num_bins() {
            return Err(Error::Config("filterbank does not match stft config".into()));
        }
        if !(log_floor > 0.0) {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        let weights = Rc::new(fb.weights.clone());
        Ok(MelLossConfig {
            stft,
            fb,
            log_floor,
            weights,
        })
    }

    /// Differentiable log-mel of a waveform tensor.
    pub fn log_mel(&self, wave: &Tensor) -> Tensor {
        let mag = tensor::stft_magnitude(wave, &self.stft);
        let mel = tensor::matmul_const(
            self.weights.clone(),
            self.fb.num_mels,
            self.fb.num_bins,
            &mag,
        );
        tensor::ln(&tensor::clamp_min(&mel, self.log_floor))
    }
}

/// Σ_subs [ mean((real - 1)²) + mean(fake²) ]. Fake scores are expected to
/// be computed from a detached generator output.
pub fn discriminator_loss(
    scores_real: &[Tensor],
    scores_fake: &[Tensor],
) -> Result<(Tensor, Vec<f64>)> {
    if scores_real.len() != scores_fake.len() || scores_real.is_empty() {
        return Err(Error::Shape(alloc::format!(
            "score list mismatch: {} real vs {} fake",
            scores_real.len(),
            scores_fake.len()
        )));
    }
    let mut total: Option<Tensor> = None;
    let mut per_sub = Vec::with_capacity(scores_real.len());
    for (r, f) in scores_real.iter().zip(scores_fake.iter()) {
        let real_term = tensor::mean(&square(&tensor::add_scalar(r, -1.0)));
        let fake_term = tensor::mean(&square(f));
        let sub = tensor::add(&real_term, &fake_term);
        per_sub.push(sub.item());
        total = Some(match total {
            None => sub,
            Some(acc) => tensor::add(&acc, &sub),
        });
    }
    Ok((total.expect("non-empty sub list"), per_sub))
}

fn square(x: &Tensor) -> Tensor {
    tensor::mul(x, x)
}

/// Full generator objective.
///
/// `scores_fake` / `feats_*` come from the discriminators run on the
/// *diffused* pair; `x` and `g_out` are the clean real waveform and the
/// generator output feeding the mel term. Real-branch features are detached
/// here regardless of how they were produced.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss(
    scores_fake: &[Tensor],
    feats_real: &[Vec<Tensor>],
    feats_fake: &[Vec<Tensor>],
    x: &AudioBuffer,
    g_out: &Tensor,
    w: &LossWeights,
    mel_cfg: &MelLossConfig,
) -> Result<(Tensor, LossReport)> {
    w.validate()?;
    if scores_fake.is_empty() {
        return Err(Error::Shape("no discriminator scores".into()));
    }
    if feats_real.len() != feats_fake.len() || feats_real.len() != scores_fake.len() {
        return Err(Error::Shape("feature lists misaligned with score list".into()));
    }
    if x.len() != g_out.len() {
        return Err(Error::Shape(alloc::format!(
            "real ({}) and generated ({}) lengths differ",
            x.len(),
            g_out.len()
        )));
    }

    // Adversarial: Σ mean((D(y_g) - 1)²)
    let mut g_adv: Option<Tensor> = None;
    let mut g_adv_per_sub = Vec::with_capacity(scores_fake.len());
    for f in scores_fake {
        let term = tensor::mean(&square(&tensor::add_scalar(f, -1.0)));
        g_adv_per_sub.push(term.item());
        g_adv = Some(match g_adv {
            None => term,
            Some(acc) => tensor::add(&acc, &term),
        });
    }
    let g_adv = g_adv.expect("non-empty");

    // Feature matching: Σ_subs Σ_layers mean |D_i(y) - D_i(y_g)|
    let mut g_fm: Option<Tensor> = None;
    for (fr, ff) in feats_real.iter().zip(feats_fake.iter()) {
        if fr.len() != ff.len() {
            return Err(Error::Shape("feature layer count mismatch".into()));
        }
        for (r, f) in fr.iter().zip(ff.iter()) {
            if r.shape() != f.shape() {
                return Err(Error::Shape(alloc::format!(
                    "feature shape mismatch {:?} vs {:?}",
                    r.shape(),
                    f.shape()
                )));
            }
            let term = tensor::l1_distance(&r.detach(), f);
            g_fm = Some(match g_fm {
                None => term,
                Some(acc) => tensor::add(&acc, &term),
            });
        }
    }
    let g_fm = g_fm.ok_or_else(|| Error::Shape("no features for matching".into()))?;

    // Mel reconstruction on the clean pair.
    let mel_x = mel_spectrogram(x, &mel_cfg.stft, &mel_cfg.fb, mel_cfg.log_floor)?;
    let mel_x_t = Tensor::constant(&[mel_x.num_bands, mel_x.num_frames], mel_x.data);
    let mel_g = mel_cfg.log_mel(g_out);
    if mel_g.shape() != mel_x_t.shape() {
        return Err(Error::Shape("mel grids of real and generated differ".into()));
    }
    let g_mel = tensor::l1_distance(&mel_x_t, &mel_g);

    let total = tensor::add(
        &tensor::add(&g_adv, &tensor::scale(&g_fm, w.lambda_fm)),
        &tensor::scale(&g_mel, w.lambda_mel),
    );
    let report = LossReport {
        d_loss: 0.0,
        g_adv: g_adv.item(),
        g_fm: g_fm.item(),
        g_mel: g_mel.item(),
        g_total: total.item(),
        d_per_sub: Vec::new(),
        g_adv_per_sub,
    };
    Ok((total, report))
}

/// Plain (non-differentiable) mel-L1 between two waveforms.
pub fn mel_l1(
    x: &AudioBuffer,
    x_hat: &AudioBuffer,
    cfg: &StftConfig,
    fb: &MelFilterbank,
    log_floor: f64,
) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::Shape(alloc::format!(
            "length mismatch: {} vs {}",
            x.len(),
            x_hat.len()
        )));
    }
    let a = mel_spectrogram(x, cfg, fb, log_floor)?;
    let b = mel_spectrogram(x_hat, cfg, fb, log_floor)?;
    Ok(mel_grid_l1(&a, &b))
}

pub fn mel_grid_l1(a: &MelGrid, b: &MelGrid) -> f64 {
    debug_assert_eq!(a.data.len(), b.data.len());
    let sum: f64 = a
        .data
        .iter()
        .zip(b.data.iter())
        .map(|(u, v)| math::abs(u - v))
        .sum();
    sum / a.data.len() as f64
}
