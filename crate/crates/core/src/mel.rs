//! Mel filterbank, log-mel spectrograms, and the filterbank pseudo-inverse
//! used to lift mel energies back to linear-frequency bins.

use alloc::vec;
use alloc::vec::Vec;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::math;
use crate::stft::{stft, StftConfig};

/// HTK mel scale: 2595·log10(1 + f/700).
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * math::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (math::powf(10.0, mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank over one-sided FFT bins.
///
/// Rows are unimodal triangles normalized to unit sum, so a flat spectrum
/// maps to a flat mel vector and the pseudo-inverse lift preserves
/// constants. The least-squares pseudo-inverse (negatives clamped to zero)
/// is computed once at construction so shared instances stay immutable.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// (num_mels × num_bins), row-major.
    pub weights: Vec<f64>,
    /// (num_bins × num_mels), row-major; least-squares right inverse with
    /// negatives clamped to zero.
    pinv: Vec<f64>,
    /// Peak bins of the first and last band: outside them the lift only
    /// sees tapering triangle tails, not signal information.
    anchors: (usize, usize),
    pub num_mels: usize,
    pub num_bins: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub sample_rate: u32,
}

impl MelFilterbank {
    pub fn new(
        num_mels: usize,
        fft_size: usize,
        sample_rate: u32,
        f_min: f64,
        f_max: f64,
    ) -> Result<Self> {
        if num_mels == 0 {
            return Err(Error::Config("num_mels must be positive".into()));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
            return Err(Error::Config(alloc::format!(
                "mel range [{f_min}, {f_max}] invalid for sample rate {sample_rate}"
            )));
        }
        let num_bins = fft_size / 2 + 1;
        let mel_lo = hz_to_mel(f_min);
        let mel_hi = hz_to_mel(f_max);
        // num_mels + 2 edge frequencies.
        let edges: Vec<f64> = (0..num_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (num_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;

        let mut weights = vec![0.0; num_mels * num_bins];
        for m in 0..num_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut any = false;
            for k in 0..num_bins {
                let f = k as f64 * bin_hz;
                let w = if f <= lo || f >= hi {
                    0.0
                } else if f <= center {
                    (f - lo) / (center - lo)
                } else {
                    (hi - f) / (hi - center)
                };
                if w > 0.0 {
                    any = true;
                }
                weights[m * num_bins + k] = w;
            }
            if !any {
                return Err(Error::Config(alloc::format!(
                    "mel band {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin; \
                     use a larger fft_size or fewer bands"
                )));
            }
            // Unit row sum: each band averages rather than integrates.
            let row = &mut weights[m * num_bins..(m + 1) * num_bins];
            let area: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= area);
        }
        let pinv = least_squares_right_inverse(&weights, num_mels, num_bins)?;
        let anchors = anchor_range(&weights, num_mels, num_bins);
        Ok(MelFilterbank {
            weights,
            pinv,
            anchors,
            num_mels,
            num_bins,
            f_min,
            f_max,
            sample_rate,
        })
    }

    /// Build directly from a weight matrix (used by tests to probe
    /// degenerate banks). Same validation as `new`.
    pub fn from_weights(
        weights: Vec<f64>,
        num_mels: usize,
        num_bins: usize,
        sample_rate: u32,
        f_min: f64,
        f_max: f64,
    ) -> Result<Self> {
        if weights.len() != num_mels * num_bins {
            return Err(Error::Shape("weight matrix size mismatch".into()));
        }
        for m in 0..num_mels {
            let row = &weights[m * num_bins..(m + 1) * num_bins];
            if !row.iter().any(|&w| w > 0.0) {
                return Err(Error::Config(alloc::format!("mel band {m} is all zero")));
            }
        }
        let pinv = least_squares_right_inverse(&weights, num_mels, num_bins)?;
        let anchors = anchor_range(&weights, num_mels, num_bins);
        Ok(MelFilterbank {
            weights,
            pinv,
            anchors,
            num_mels,
            num_bins,
            f_min,
            f_max,
            sample_rate,
        })
    }

    /// Peak bins of the first and last band. Lifted spectra are only
    /// well-supported between these; callers extend the boundary values
    /// outward.
    pub fn lift_anchor_bins(&self) -> (usize, usize) {
        self.anchors
    }

    /// Cached pseudo-inverse, (num_bins × num_mels) row-major.
    pub fn pseudo_inverse(&self) -> &[f64] {
        &self.pinv
    }

    /// Mel energies for one frame of linear magnitudes.
    pub fn apply(&self, spectrum: &[f64], out: &mut [f64]) {
        debug_assert_eq!(spectrum.len(), self.num_bins);
        debug_assert_eq!(out.len(), self.num_mels);
        for m in 0..self.num_mels {
            let row = &self.weights[m * self.num_bins..(m + 1) * self.num_bins];
            out[m] = row.iter().zip(spectrum.iter()).map(|(w, s)| w * s).sum();
        }
    }

    /// Lift mel energies back to linear bins through the pseudo-inverse.
    pub fn lift(&self, mel: &[f64], out: &mut [f64]) {
        debug_assert_eq!(mel.len(), self.num_mels);
        debug_assert_eq!(out.len(), self.num_bins);
        for k in 0..self.num_bins {
            let row = &self.pinv[k * self.num_mels..(k + 1) * self.num_mels];
            out[k] = row.iter().zip(mel.iter()).map(|(p, m)| p * m).sum();
        }
    }
}

/// Log-amplitude mel grid, band-major: entry (band, frame).
#[derive(Debug, Clone, PartialEq)]
pub struct MelGrid {
    pub data: Vec<f64>,
    pub num_bands: usize,
    pub num_frames: usize,
}

impl MelGrid {
    pub fn new(num_bands: usize, num_frames: usize) -> Self {
        MelGrid {
            data: vec![0.0; num_bands * num_frames],
            num_bands,
            num_frames,
        }
    }

    #[inline]
    pub fn at(&self, band: usize, frame: usize) -> f64 {
        self.data[band * self.num_frames + frame]
    }

    #[inline]
    pub fn set(&mut self, band: usize, frame: usize, v: f64) {
        self.data[band * self.num_frames + frame] = v;
    }

    pub fn frame_column(&self, frame: usize) -> Vec<f64> {
        (0..self.num_bands).map(|b| self.at(b, frame)).collect()
    }
}

/// log(max(fb · |STFT(x)|, log_floor)), band-major.
pub fn mel_spectrogram(
    x: &AudioBuffer,
    cfg: &StftConfig,
    fb: &MelFilterbank,
    log_floor: f64,
) -> Result<MelGrid> {
    if fb.sample_rate != x.sample_rate {
        return Err(Error::Config(alloc::format!(
            "filterbank built for {} Hz but signal is {} Hz",
            fb.sample_rate,
            x.sample_rate
        )));
    }
    if fb.num_bins != cfg.num_bins() {
        return Err(Error::Config(alloc::format!(
            "filterbank has {} bins but stft config produces {}",
            fb.num_bins,
            cfg.num_bins()
        )));
    }
    if !(log_floor > 0.0) {
        return Err(Error::Config("log_floor must be positive".into()));
    }
    let spec = stft(x, cfg)?;
    Ok(mel_from_spectrogram_mags(&spec, fb, log_floor))
}

pub(crate) fn mel_from_spectrogram_mags(
    spec: &crate::stft::ComplexSpectrogram,
    fb: &MelFilterbank,
    log_floor: f64,
) -> MelGrid {
    let mut grid = MelGrid::new(fb.num_mels, spec.num_frames);
    let mut mags = vec![0.0; spec.num_bins];
    let mut mel = vec![0.0; fb.num_mels];
    for f in 0..spec.num_frames {
        for k in 0..spec.num_bins {
            mags[k] = spec.magnitude(f, k);
        }
        fb.apply(&mags, &mut mel);
        for (b, &e) in mel.iter().enumerate() {
            grid.set(b, f, math::ln(if e > log_floor { e } else { log_floor }));
        }
    }
    grid
}

/// Spec'd free-function view of the cached pseudo-inverse.
pub fn mel_pseudo_inverse(fb: &MelFilterbank) -> &[f64] {
    fb.pseudo_inverse()
}

/// Least-squares right inverse with nonnegative entries and bin-smooth
/// columns.
///
/// P = Wᵀ·B with B = D⁻¹(2I - G·D⁻¹) (one Newton–Schulz step toward G⁻¹,
/// G = WWᵀ, D = diag(G)), negatives clamped to zero, then a global scalar
/// fitted so W·P·1 ≈ 1. Unlike the exact minimum-norm inverse, whose
/// clamped negative lobes badly distort smooth inputs, every column here is
/// a combination of a few adjacent triangles, so lifted spectra stay smooth
/// in frequency while the mel-space residual remains second order in the
/// band overlap. Rank deficiency surfaces as an error.
fn least_squares_right_inverse(
    weights: &[f64],
    num_mels: usize,
    num_bins: usize,
) -> Result<Vec<f64>> {
    // Gram matrix G = W·Wᵀ (num_mels × num_mels).
    let mut gram = vec![0.0; num_mels * num_mels];
    for a in 0..num_mels {
        for b in a..num_mels {
            let ra = &weights[a * num_bins..(a + 1) * num_bins];
            let rb = &weights[b * num_bins..(b + 1) * num_bins];
            let dot: f64 = ra.iter().zip(rb.iter()).map(|(x, y)| x * y).sum();
            gram[a * num_mels + b] = dot;
            gram[b * num_mels + a] = dot;
        }
    }
    // Positive definiteness check; the factor itself is not needed.
    cholesky(&gram, num_mels).ok_or_else(|| {
        Error::Numeric("filterbank gram matrix is rank deficient; bands overlap degenerately".into())
    })?;

    // B[i,j] = (1/g_ii)·(2·δ_ij - g_ij/g_jj)
    let mut b = vec![0.0; num_mels * num_mels];
    for i in 0..num_mels {
        let gii = gram[i * num_mels + i];
        for j in 0..num_mels {
            let gjj = gram[j * num_mels + j];
            let delta = if i == j { 2.0 } else { 0.0 };
            b[i * num_mels + j] = (delta - gram[i * num_mels + j] / gjj) / gii;
        }
    }

    // P = Wᵀ·B, clamped at zero.
    let mut pinv = vec![0.0; num_bins * num_mels];
    for k in 0..num_bins {
        let prow = &mut pinv[k * num_mels..(k + 1) * num_mels];
        for i in 0..num_mels {
            let w = weights[i * num_bins + k];
            if w == 0.0 {
                continue;
            }
            let brow = &b[i * num_mels..(i + 1) * num_mels];
            for (p, bv) in prow.iter_mut().zip(brow.iter()) {
                *p += w * bv;
            }
        }
        prow.iter_mut().for_each(|p| {
            if *p < 0.0 {
                *p = 0.0;
            }
        });
    }

    // Partition-of-unity calibration: rows with solid support are scaled to
    // unit sum, so lifting a constant mel vector returns exactly that
    // constant and the common clamp/truncation ripple divides out of every
    // smooth lift. Weakly supported taper rows (triangle tails at the band
    // edges) are left alone; callers extend over them anyway.
    let sums: Vec<f64> = (0..num_bins)
        .map(|k| pinv[k * num_mels..(k + 1) * num_mels].iter().sum())
        .collect();
    let mut sorted: Vec<f64> = sums.iter().cloned().filter(|&s| s > 0.0).collect();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.is_empty() { 0.0 } else { sorted[sorted.len() / 2] };
    for k in 0..num_bins {
        if sums[k] > 0.3 * median {
            let row = &mut pinv[k * num_mels..(k + 1) * num_mels];
            row.iter_mut().for_each(|p| *p /= sums[k]);
        }
    }
    Ok(pinv)
}

fn anchor_range(weights: &[f64], num_mels: usize, num_bins: usize) -> (usize, usize) {
    let argmax = |row: &[f64]| -> usize {
        let mut best = 0;
        for (k, &w) in row.iter().enumerate() {
            if w > row[best] {
                best = k;
            }
        }
        best
    };
    let lo = argmax(&weights[..num_bins]);
    let hi = argmax(&weights[(num_mels - 1) * num_bins..]);
    (lo, hi.max(lo))
}

/// Lower-triangular Cholesky factor, or None if not positive definite.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    let scale = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 1e-12 * scale {
                    return None;
                }
                l[i * n + i] = math::sqrt(sum);
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}
