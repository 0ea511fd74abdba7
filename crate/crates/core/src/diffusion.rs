//! Forward-diffusion schedule tables and the perturbation sampler.
//!
//! Only the forward process exists here: samples are corrupted once per
//! step with `y = √ᾱ_t·x + √(1-ᾱ_t)·ε` and handed to the discriminator;
//! nothing is ever denoised.

use alloc::vec::Vec;

use crate::audio::AudioBuffer;
use crate::envelope::ShapedNoiseSampler;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct DiffusionSchedule {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Cumulative products ᾱ_t = Π_{u≤t} α_u; index 0 holds ᾱ_1.
    pub alpha_bar: Vec<f64>,
    pub t_max_cap: usize,
}

/// Linear β interpolation from `beta_start` to `beta_end` over `t_max` steps.
pub fn build_schedule(t_max: usize, beta_start: f64, beta_end: f64) -> Result<DiffusionSchedule> {
    if t_max == 0 {
        return Err(Error::Config("t_max must be at least 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(alloc::format!(
            "need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )));
    }
    let mut beta = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let frac = if t_max == 1 {
            0.0
        } else {
            t as f64 / (t_max - 1) as f64
        };
        beta.push(beta_start + frac * (beta_end - beta_start));
    }
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(t_max);
    let mut prod = 1.0;
    for &a in alpha.iter() {
        prod *= a;
        alpha_bar.push(prod);
    }
    Ok(DiffusionSchedule {
        beta,
        alpha,
        alpha_bar,
        t_max_cap: t_max,
    })
}

impl DiffusionSchedule {
    /// ᾱ_t for 1-based step t.
    pub fn alpha_bar_at(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.t_max_cap {
            return Err(Error::Config(alloc::format!(
                "diffusion step {t} outside 1..={}",
                self.t_max_cap
            )));
        }
        Ok(self.alpha_bar[t - 1])
    }

    /// Coefficients (√ᾱ_t, √(1-ᾱ_t)) of the closed-form forward process.
    pub fn mix_coefficients(&self, t: usize) -> Result<(f64, f64)> {
        let ab = self.alpha_bar_at(t)?;
        Ok((math::sqrt(ab), math::sqrt(1.0 - ab)))
    }
}

/// Where the perturbation ε comes from.
#[derive(Debug, Clone)]
pub enum NoiseSource {
    /// i.i.d. N(0, σ²).
    Standard { sigma: f64 },
    /// Spectrally shaped draws from the inverse-envelope sampler.
    Shaped(ShapedNoiseSampler),
}

impl NoiseSource {
    pub fn draw(&self, num_samples: usize, sample_rate: u32, rng: &mut Rng) -> Result<AudioBuffer> {
        match self {
            NoiseSource::Standard { sigma } => {
                let mut buf = AudioBuffer::zeros(num_samples, sample_rate);
                rng.fill_gauss(&mut buf.samples);
                for s in buf.samples.iter_mut() {
                    *s *= sigma;
                }
                Ok(buf)
            }
            NoiseSource::Shaped(sampler) => sampler.sample(num_samples, rng),
        }
    }
}

/// One forward-diffusion draw: `√ᾱ_t·x + √(1-ᾱ_t)·ε`. The same formula
/// applies to real and generated signals, each with its own independent ε.
pub fn diffuse(
    x: &AudioBuffer,
    t: usize,
    sched: &DiffusionSchedule,
    noise: &NoiseSource,
    rng: &mut Rng,
) -> Result<AudioBuffer> {
    x.check_finite()?;
    let (signal_coef, noise_coef) = sched.mix_coefficients(t)?;
    let eps = noise.draw(x.len(), x.sample_rate, rng)?;
    let samples = x
        .samples
        .iter()
        .zip(eps.samples.iter())
        .map(|(&s, &e)| signal_coef * s + noise_coef * e)
        .collect();
    Ok(AudioBuffer::new(samples, x.sample_rate))
}
