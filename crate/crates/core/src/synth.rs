//! Deterministic synthetic audio: the desk-scale stand-in for real corpora.
//!
//! Three families, each stressing a different part of the pipeline:
//! harmonic tones (mel structure), formant-shaped noise (envelope
//! estimation), and amplitude-modulated pulse trains (periodicity for the
//! multi-period discriminator).

use alloc::vec::Vec;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::math;
use crate::mel::{mel_spectrogram, MelFilterbank, MelGrid};
use crate::rng::Rng;
use crate::stft::StftConfig;

const TWO_PI: f64 = 2.0 * core::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    HarmonicTone,
    FormantNoise,
    AmPulse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub f0_min: f64,
    pub f0_max: f64,
    pub num_items: usize,
    pub duration_secs: f64,
    pub seed: u64,
    pub sample_rate: u32,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let quarter = self.sample_rate as f64 / 4.0;
        if !(self.f0_min > 0.0 && self.f0_min <= self.f0_max && self.f0_max < quarter) {
            return Err(Error::Config(alloc::format!(
                "f0 range [{}, {}] must sit inside (0, sample_rate/4 = {quarter})",
                self.f0_min,
                self.f0_max
            )));
        }
        if self.num_items == 0 || !(self.duration_secs > 0.0) {
            return Err(Error::Config("empty dataset spec".into()));
        }
        Ok(())
    }
}

/// Generates `(waveform, mel)` pairs; pure in (spec, seed). All items are
/// peak-normalized to 0.95.
pub fn generate_dataset(
    spec: &SyntheticSpec,
    cfg: &StftConfig,
    fb: &MelFilterbank,
    log_floor: f64,
) -> Result<Vec<(AudioBuffer, MelGrid)>> {
    spec.validate()?;
    let mut master = Rng::seed_from_u64(spec.seed);
    let len = (spec.duration_secs * spec.sample_rate as f64) as usize;
    let mut out = Vec::with_capacity(spec.num_items);
    for _ in 0..spec.num_items {
        let mut rng = master.split();
        let mut buf = match spec.kind {
            SyntheticKind::HarmonicTone => harmonic_tone(spec, len, &mut rng),
            SyntheticKind::FormantNoise => formant_noise(spec, len, &mut rng),
            SyntheticKind::AmPulse => am_pulse(spec, len, &mut rng),
        };
        buf.normalize_peak(0.95);
        let mel = mel_spectrogram(&buf, cfg, fb, log_floor)?;
        out.push((buf, mel));
    }
    Ok(out)
}

fn harmonic_tone(spec: &SyntheticSpec, len: usize, rng: &mut Rng) -> AudioBuffer {
    let sr = spec.sample_rate as f64;
    let f0 = rng.uniform_in(spec.f0_min, spec.f0_max);
    let nyquist = sr / 2.0;
    let mut samples = alloc::vec![0.0; len];
    for h in 1..=8usize {
        let f = f0 * h as f64;
        if f >= nyquist * 0.95 {
            break;
        }
        let amp = rng.uniform_in(0.1, 1.0) / h as f64;
        let phase = rng.uniform_in(0.0, TWO_PI);
        for (n, s) in samples.iter_mut().enumerate() {
            *s += amp * math::sin(TWO_PI * f * n as f64 / sr + phase);
        }
    }
    AudioBuffer::new(samples, spec.sample_rate)
}

fn formant_noise(spec: &SyntheticSpec, len: usize, rng: &mut Rng) -> AudioBuffer {
    let sr = spec.sample_rate as f64;
    let mut samples: Vec<f64> = (0..len).map(|_| rng.gauss()).collect();
    let num_formants = 2 + rng.below(2); // 2 or 3 resonators
    for _ in 0..num_formants {
        // Formant centers drawn well inside the band.
        let fc = rng.uniform_in(spec.f0_min.max(150.0), (spec.f0_max * 4.0).min(sr * 0.35));
        let r = rng.uniform_in(0.96, 0.99);
        resonate(&mut samples, fc, r, sr);
    }
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Two-pole resonator: y[n] = x[n] + 2r·cosθ·y[n-1] - r²·y[n-2].
fn resonate(x: &mut [f64], fc: f64, r: f64, sr: f64) {
    let theta = TWO_PI * fc / sr;
    let a1 = 2.0 * r * math::cos(theta);
    let a2 = -r * r;
    // Normalize peak gain roughly so cascades stay bounded.
    let gain = (1.0 - r) * math::sqrt(1.0 + r * r - 2.0 * r * math::cos(2.0 * theta));
    let mut y1 = 0.0;
    let mut y2 = 0.0;
    for v in x.iter_mut() {
        let y = gain * *v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

fn am_pulse(spec: &SyntheticSpec, len: usize, rng: &mut Rng) -> AudioBuffer {
    let sr = spec.sample_rate as f64;
    let f0 = rng.uniform_in(spec.f0_min, spec.f0_max);
    let period = (sr / f0) as usize;
    let lfo_hz = rng.uniform_in(2.0, 8.0);
    let depth = rng.uniform_in(0.3, 0.9);
    let mut samples = alloc::vec![0.0; len];
    let mut n = 0;
    while n < len {
        let env = (1.0 + depth * math::sin(TWO_PI * lfo_hz * n as f64 / sr)) / (1.0 + depth);
        // Short decaying pulse rather than a bare impulse.
        for (k, decay) in [1.0, 0.6, 0.3, 0.1].iter().enumerate() {
            if n + k < len {
                samples[n + k] += env * decay;
            }
        }
        n += period.max(1);
    }
    AudioBuffer::new(samples, spec.sample_rate)
}
