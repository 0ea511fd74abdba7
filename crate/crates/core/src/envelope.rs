//! Spectral-envelope estimation, minimum-phase filters, and shaped noise.
//!
//! The pipeline: lift a log-mel grid back to linear-frequency magnitudes
//! through the filterbank pseudo-inverse, smooth each frame with a truncated
//! real cepstrum, floor it, attach minimum phase, invert, and push white
//! Gaussian noise through the STFT sandwich `istft(M ⊙ stft(·))`. The
//! inverted filter concentrates noise power where the envelope is weak.

use alloc::vec;
use alloc::vec::Vec;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::fft::Fft;
use crate::math;
use crate::mel::{MelFilterbank, MelGrid};
use crate::rng::Rng;
use crate::stft::{istft, stft, ComplexSpectrogram, StftConfig};

/// Per-frame positive envelope magnitudes, (num_frames × num_bins) row-major.
#[derive(Debug, Clone)]
pub struct SpectralEnvelope {
    pub magnitudes: Vec<f64>,
    pub num_frames: usize,
    pub num_bins: usize,
}

impl SpectralEnvelope {
    #[inline]
    pub fn at(&self, frame: usize, bin: usize) -> f64 {
        self.magnitudes[frame * self.num_bins + bin]
    }

    pub fn from_flat(magnitudes: Vec<f64>, num_frames: usize, num_bins: usize) -> Result<Self> {
        if magnitudes.len() != num_frames * num_bins {
            return Err(Error::Shape("envelope grid size mismatch".into()));
        }
        if magnitudes.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::Numeric("envelope must be strictly positive and finite".into()));
        }
        Ok(SpectralEnvelope {
            magnitudes,
            num_frames,
            num_bins,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    /// Magnitude follows the envelope (the noise-*suppressing* direction).
    Envelope,
    /// Elementwise reciprocal: boosts noise where the envelope is weak.
    InverseEnvelope,
}

/// Per-frame complex frequency response applied via the STFT sandwich.
#[derive(Debug, Clone)]
pub struct SpectralFilter {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub num_frames: usize,
    pub num_bins: usize,
    pub kind: FilterKind,
}

impl SpectralFilter {
    #[inline]
    pub fn magnitude(&self, frame: usize, bin: usize) -> f64 {
        let i = frame * self.num_bins + bin;
        math::sqrt(self.re[i] * self.re[i] + self.im[i] * self.im[i])
    }

    /// Mean squared magnitude over the full (two-sided) spectrum.
    pub fn mean_square_magnitude(&self) -> f64 {
        let n_full = 2 * (self.num_bins - 1);
        let mut total = 0.0;
        for f in 0..self.num_frames {
            for k in 0..self.num_bins {
                let i = f * self.num_bins + k;
                let m2 = self.re[i] * self.re[i] + self.im[i] * self.im[i];
                let weight = if k == 0 || k == self.num_bins - 1 { 1.0 } else { 2.0 };
                total += weight * m2;
            }
        }
        total / (self.num_frames * n_full) as f64
    }
}

/// Lift, cepstrally smooth, and floor a mel grid into a spectral envelope.
///
/// Flooring is relative to each frame's maximum: `max · 10^(floor_db/20)`.
/// Flooring before inversion is what bounds the gain of the inverse filter.
pub fn estimate_envelope(
    mel: &MelGrid,
    fb: &MelFilterbank,
    cepstral_order: usize,
    floor_db: f64,
) -> Result<SpectralEnvelope> {
    let num_bins = fb.num_bins;
    let fft_size = 2 * (num_bins - 1);
    if cepstral_order == 0 || cepstral_order >= fft_size / 2 {
        return Err(Error::Config(alloc::format!(
            "cepstral_order {cepstral_order} must be in 1..fft_size/2 ({})",
            fft_size / 2
        )));
    }
    if mel.num_bands != fb.num_mels {
        return Err(Error::Config(alloc::format!(
            "mel grid has {} bands, filterbank expects {}",
            mel.num_bands,
            fb.num_mels
        )));
    }
    if !(floor_db < 0.0) {
        return Err(Error::Config("floor_db must be negative".into()));
    }
    let fft = Fft::new(fft_size)?;
    let mut env = vec![0.0; mel.num_frames * num_bins];
    let mut mel_lin = vec![0.0; fb.num_mels];
    let mut lifted = vec![0.0; num_bins];
    let (cov_lo, cov_hi) = fb.lift_anchor_bins();

    for f in 0..mel.num_frames {
        for b in 0..fb.num_mels {
            mel_lin[b] = math::exp(mel.at(b, f));
        }
        fb.lift(&mel_lin, &mut lifted);
        // Outside the first/last band peaks the lift only sees triangle
        // tails; extend the anchor values so the tapers do not punch
        // notches into the log spectrum that the smoothing would smear.
        for k in 0..cov_lo {
            lifted[k] = lifted[cov_lo];
        }
        for k in cov_hi + 1..num_bins {
            lifted[k] = lifted[cov_hi];
        }
        // Same relative floor before and after smoothing, so log-domain
        // excursions stay bounded by |floor_db|.
        let peak = lifted.iter().cloned().fold(0.0, f64::max);
        let pre_floor = if peak > 0.0 {
            peak * math::db_to_amplitude(floor_db)
        } else {
            1e-100
        };
        for v in lifted.iter_mut() {
            if *v < pre_floor {
                *v = pre_floor;
            }
        }
        let frame = &mut env[f * num_bins..(f + 1) * num_bins];
        smooth_frame(&fft, &lifted, cepstral_order, frame);
        let peak = frame.iter().cloned().fold(0.0, f64::max);
        let floor = peak * math::db_to_amplitude(floor_db);
        for v in frame.iter_mut() {
            if *v < floor {
                *v = floor;
            }
        }
    }
    SpectralEnvelope::from_flat(env, mel.num_frames, num_bins)
}

/// Cepstral smoothing of one magnitude frame: keep the lowest `order`
/// quefrency coefficients of the log spectrum and exponentiate back.
fn smooth_frame(fft: &Fft, lifted: &[f64], order: usize, out: &mut [f64]) {
    let num_bins = lifted.len();
    let n = fft.size();
    let mut re: Vec<f64> = (0..n)
        .map(|j| {
            let k = if j < num_bins { j } else { n - j };
            math::ln(lifted[k])
        })
        .collect();
    let mut im = vec![0.0; n];
    fft.inverse(&mut re, &mut im); // real cepstrum (even, real)
    for q in order..=n - order {
        if q < n {
            re[q] = 0.0;
        }
    }
    im.iter_mut().for_each(|v| *v = 0.0);
    fft.forward(&mut re, &mut im);
    for k in 0..num_bins {
        out[k] = math::exp(re[k]);
    }
}

/// Attach minimum phase to an envelope via cepstrum folding.
///
/// Per frame: fold the real cepstrum of log|env| (double the strictly causal
/// half, zero the rest) and exponentiate its DFT. The magnitude equals the
/// envelope by construction; the phase is the minimum-phase response.
pub fn minimum_phase_filter(env: &SpectralEnvelope) -> Result<SpectralFilter> {
    let num_bins = env.num_bins;
    let n = 2 * (num_bins - 1);
    let fft = Fft::new(n)?;
    let mut out_re = vec![0.0; env.num_frames * num_bins];
    let mut out_im = vec![0.0; env.num_frames * num_bins];

    for f in 0..env.num_frames {
        let frame = &env.magnitudes[f * num_bins..(f + 1) * num_bins];
        if frame.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::Numeric(alloc::format!(
                "envelope frame {f} has a non-positive magnitude"
            )));
        }
        let mut re: Vec<f64> = (0..n)
            .map(|j| {
                let k = if j < num_bins { j } else { n - j };
                math::ln(frame[k])
            })
            .collect();
        let mut im = vec![0.0; n];
        fft.inverse(&mut re, &mut im);
        // Fold: c[0] and c[n/2] stay, 1..n/2 doubles, upper half zeroes.
        for q in 1..n / 2 {
            re[q] *= 2.0;
            re[n - q] = 0.0;
        }
        im.iter_mut().for_each(|v| *v = 0.0);
        fft.forward(&mut re, &mut im);
        for k in 0..num_bins {
            let mag = math::exp(re[k]);
            out_re[f * num_bins + k] = mag * math::cos(im[k]);
            out_im[f * num_bins + k] = mag * math::sin(im[k]);
        }
    }
    Ok(SpectralFilter {
        re: out_re,
        im: out_im,
        num_frames: env.num_frames,
        num_bins,
        kind: FilterKind::Envelope,
    })
}

/// Elementwise reciprocal of an envelope filter.
pub fn invert_filter(f: &SpectralFilter) -> Result<SpectralFilter> {
    let mut re = Vec::with_capacity(f.re.len());
    let mut im = Vec::with_capacity(f.im.len());
    for i in 0..f.re.len() {
        let norm = f.re[i] * f.re[i] + f.im[i] * f.im[i];
        if norm < 1e-24 {
            return Err(Error::Numeric(alloc::format!(
                "filter magnitude below 1e-12 at flat index {i}; envelope flooring missing?"
            )));
        }
        re.push(f.re[i] / norm);
        im.push(-f.im[i] / norm);
    }
    Ok(SpectralFilter {
        re,
        im,
        num_frames: f.num_frames,
        num_bins: f.num_bins,
        kind: match f.kind {
            FilterKind::Envelope => FilterKind::InverseEnvelope,
            FilterKind::InverseEnvelope => FilterKind::Envelope,
        },
    })
}

/// `istft(filter ⊙ stft(x))`. Filters shorter than the signal tile their
/// last frame; longer filters are truncated.
pub fn apply_filter(x: &AudioBuffer, f: &SpectralFilter, cfg: &StftConfig) -> Result<AudioBuffer> {
    if f.num_bins != cfg.num_bins() {
        return Err(Error::Shape(alloc::format!(
            "filter has {} bins, stft config produces {}",
            f.num_bins,
            cfg.num_bins()
        )));
    }
    if f.num_frames == 0 {
        return Err(Error::Shape("filter has no frames".into()));
    }
    let spec = stft(x, cfg)?;
    let filtered = apply_to_spectrogram(&spec, f);
    istft(&filtered)
}

fn apply_to_spectrogram(spec: &ComplexSpectrogram, f: &SpectralFilter) -> ComplexSpectrogram {
    let mut out = spec.clone();
    let bins = spec.num_bins;
    for frame in 0..spec.num_frames {
        let ff = frame.min(f.num_frames - 1); // tile last filter frame
        for k in 0..bins {
            let si = frame * bins + k;
            let fi = ff * bins + k;
            let (ar, ai) = (spec.re[si], spec.im[si]);
            let (br, bi) = (f.re[fi], f.im[fi]);
            out.re[si] = ar * br - ai * bi;
            out.im[si] = ar * bi + ai * br;
        }
    }
    out
}

/// Draws shaped Gaussian noise with total expected power σ²·N.
///
/// The filter is normalized to unit mean-square magnitude, so a flat
/// envelope degenerates to i.i.d. N(0, σ²) exactly.
#[derive(Debug, Clone)]
pub struct ShapedNoiseSampler {
    pub filter: SpectralFilter,
    pub stft_cfg: StftConfig,
    pub sigma: f64,
    pub normalization: f64,
    pub sample_rate: u32,
}

impl ShapedNoiseSampler {
    pub fn new(
        filter: SpectralFilter,
        stft_cfg: StftConfig,
        sigma: f64,
        sample_rate: u32,
    ) -> Result<Self> {
        if filter.kind != FilterKind::InverseEnvelope {
            return Err(Error::Config(
                "shaped-noise sampler expects the inverse-envelope filter".into(),
            ));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Config(alloc::format!("invalid sigma {sigma}")));
        }
        if filter.num_bins != stft_cfg.num_bins() {
            return Err(Error::Shape("filter bins do not match stft config".into()));
        }
        let ms = filter.mean_square_magnitude();
        if !(ms > 0.0) {
            return Err(Error::Numeric("filter has zero mean-square magnitude".into()));
        }
        let normalization = sigma / math::sqrt(ms);
        Ok(ShapedNoiseSampler {
            filter,
            stft_cfg,
            sigma,
            normalization,
            sample_rate,
        })
    }

    /// Expected per-bin noise power (frame-averaged), for diagnostics.
    pub fn expected_band_power(&self) -> Vec<f64> {
        let bins = self.filter.num_bins;
        let g2 = self.normalization * self.normalization;
        (0..bins)
            .map(|k| {
                let mut acc = 0.0;
                for f in 0..self.filter.num_frames {
                    let i = f * bins + k;
                    acc += self.filter.re[i] * self.filter.re[i]
                        + self.filter.im[i] * self.filter.im[i];
                }
                g2 * acc / self.filter.num_frames as f64
            })
            .collect()
    }

    pub fn sample(&self, num_samples: usize, rng: &mut Rng) -> Result<AudioBuffer> {
        let mut white = AudioBuffer::zeros(num_samples, self.sample_rate);
        rng.fill_gauss(&mut white.samples);
        let mut shaped = apply_filter(&white, &self.filter, &self.stft_cfg)?;
        for s in shaped.samples.iter_mut() {
            *s *= self.normalization;
        }
        if shaped.len() != num_samples {
            return Err(Error::Shape(alloc::format!(
                "shaped noise length {} != requested {num_samples}",
                shaped.len()
            )));
        }
        Ok(shaped)
    }
}

/// Welch power-per-bin estimate (Hann window, 50% overlap), normalized so a
/// white signal of variance v reads v in every bin. Used by the CLI's PSD
/// report; tests check it against an independent direct-DFT estimator.
pub fn welch_psd(x: &[f64], fft_size: usize) -> Result<Vec<f64>> {
    let fft = Fft::new(fft_size)?;
    if x.len() < fft_size {
        return Err(Error::Shape("signal shorter than psd window".into()));
    }
    let window = crate::stft::periodic_hann(fft_size);
    let w2: f64 = window.iter().map(|w| w * w).sum();
    let hop = fft_size / 2;
    let bins = fft_size / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut count = 0usize;
    let mut frame = vec![0.0; fft_size];
    let mut start = 0;
    while start + fft_size <= x.len() {
        for i in 0..fft_size {
            frame[i] = x[start + i] * window[i];
        }
        let (re, im) = fft.forward_real(&frame);
        for k in 0..bins {
            acc[k] += (re[k] * re[k] + im[k] * im[k]) / w2;
        }
        count += 1;
        start += hop;
    }
    for v in acc.iter_mut() {
        *v /= count as f64;
    }
    Ok(acc)
}
