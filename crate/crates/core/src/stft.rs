//! Windowed STFT and inverse as exact linear operators.
//!
//! Analysis and synthesis share one periodic Hann window; the inverse uses
//! weighted overlap-add with a squared-window normalizer, so
//! `istft(stft(x))` reproduces `x` on the interior for any window/hop pair
//! that satisfies the nonzero-overlap condition checked at construction.

use alloc::vec;
use alloc::vec::Vec;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::fft::Fft;
use crate::math;

#[derive(Debug, Clone)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop_size: usize,
    pub win_length: usize,
    /// Periodic Hann of length `win_length`, zero-padded to `fft_size`
    /// (centered) when applied.
    pub window: Vec<f64>,
    /// Reflect-pad the signal by `fft_size / 2` on both sides so frame `f`
    /// is centered on sample `f * hop_size`.
    pub center_padding: bool,
    fft: Fft,
}

impl StftConfig {
    pub fn new(
        fft_size: usize,
        hop_size: usize,
        win_length: usize,
        center_padding: bool,
    ) -> Result<Self> {
        if win_length > fft_size {
            return Err(Error::Config(alloc::format!(
                "win_length {win_length} exceeds fft_size {fft_size}"
            )));
        }
        if hop_size == 0 || hop_size > win_length {
            return Err(Error::Config(alloc::format!(
                "hop_size {hop_size} must be in 1..=win_length {win_length}"
            )));
        }
        let fft = Fft::new(fft_size)?;
        let window = periodic_hann(win_length);
        let cfg = StftConfig {
            fft_size,
            hop_size,
            win_length,
            window,
            center_padding,
            fft,
        };
        cfg.check_nola()?;
        Ok(cfg)
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn num_frames(&self, signal_len: usize) -> Result<usize> {
        if self.center_padding {
            Ok(signal_len / self.hop_size + 1)
        } else if signal_len >= self.fft_size {
            Ok((signal_len - self.fft_size) / self.hop_size + 1)
        } else {
            Err(Error::Shape(alloc::format!(
                "signal of {signal_len} samples too short for uncentered fft_size {}",
                self.fft_size
            )))
        }
    }

    /// Window padded to `fft_size`, centered.
    pub fn full_window(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.fft_size];
        let off = (self.fft_size - self.win_length) / 2;
        w[off..off + self.win_length].copy_from_slice(&self.window);
        w
    }

    fn check_nola(&self) -> Result<()> {
        // Σ_m w²[n - m·hop] must stay bounded away from zero on the overlap
        // grid, otherwise the synthesis normalizer blows up.
        let mut acc = vec![0.0; self.hop_size];
        for (i, &w) in self.window.iter().enumerate() {
            acc[i % self.hop_size] += w * w;
        }
        let min = acc.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = acc.iter().cloned().fold(0.0, f64::max);
        if !(min > 1e-10 * max && max > 0.0) {
            return Err(Error::Config(alloc::format!(
                "window/hop pair fails the overlap-add condition (min {min}, max {max})"
            )));
        }
        Ok(())
    }

    pub(crate) fn fft(&self) -> &Fft {
        &self.fft
    }
}

/// `w[n] = 0.5·(1 - cos(2πn/N))`, n in 0..N (periodic form).
pub fn periodic_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 * (1.0 - math::cos(2.0 * core::f64::consts::PI * n as f64 / len as f64)))
        .collect()
}

/// Time-major grid of one-sided complex bins.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub num_frames: usize,
    pub num_bins: usize,
    pub sample_rate: u32,
    pub config: StftConfig,
}

impl ComplexSpectrogram {
    #[inline]
    pub fn idx(&self, frame: usize, bin: usize) -> usize {
        frame * self.num_bins + bin
    }

    pub fn magnitude(&self, frame: usize, bin: usize) -> f64 {
        let i = self.idx(frame, bin);
        math::sqrt(self.re[i] * self.re[i] + self.im[i] * self.im[i])
    }

    pub fn zeros_like(cfg: &StftConfig, num_frames: usize, sample_rate: u32) -> Self {
        let bins = cfg.num_bins();
        ComplexSpectrogram {
            re: vec![0.0; num_frames * bins],
            im: vec![0.0; num_frames * bins],
            num_frames,
            num_bins: bins,
            sample_rate,
            config: cfg.clone(),
        }
    }
}

/// Reflect index into [0, len) without repeating the edge sample.
#[inline]
pub(crate) fn reflect_index(pos: isize, len: usize) -> usize {
    debug_assert!(len >= 2);
    let period = 2 * (len as isize - 1);
    let mut p = pos % period;
    if p < 0 {
        p += period;
    }
    if p >= len as isize {
        p = period - p;
    }
    p as usize
}

/// Sample the (possibly reflect-padded) signal at logical position `pos`,
/// where position 0 is the first real sample.
#[inline]
fn padded_sample(x: &[f64], pos: isize, center: bool) -> f64 {
    if pos >= 0 && (pos as usize) < x.len() {
        x[pos as usize]
    } else if center {
        x[reflect_index(pos, x.len())]
    } else {
        0.0
    }
}

pub fn stft(x: &AudioBuffer, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if x.is_empty() {
        return Err(Error::Shape("empty input signal".into()));
    }
    x.check_finite()?;
    if cfg.center_padding && x.len() < 2 {
        return Err(Error::Shape("centered stft needs at least 2 samples".into()));
    }
    let num_frames = cfg.num_frames(x.len())?;
    let bins = cfg.num_bins();
    let full_window = cfg.full_window();
    let half = cfg.fft_size as isize / 2;

    let mut out = ComplexSpectrogram::zeros_like(cfg, num_frames, x.sample_rate);
    let mut frame = vec![0.0; cfg.fft_size];
    for f in 0..num_frames {
        let start = f as isize * cfg.hop_size as isize - if cfg.center_padding { half } else { 0 };
        for (i, slot) in frame.iter_mut().enumerate() {
            *slot = padded_sample(&x.samples, start + i as isize, cfg.center_padding)
                * full_window[i];
        }
        let (hre, him) = cfg.fft().forward_real(&frame);
        let base = f * bins;
        out.re[base..base + bins].copy_from_slice(&hre);
        out.im[base..base + bins].copy_from_slice(&him);
    }
    Ok(out)
}

pub fn istft(s: &ComplexSpectrogram) -> Result<AudioBuffer> {
    let cfg = &s.config;
    let bins = cfg.num_bins();
    if s.num_bins != bins || s.re.len() != s.num_frames * bins || s.im.len() != s.re.len() {
        return Err(Error::Shape(alloc::format!(
            "spectrogram grid {}x{} inconsistent with fft_size {}",
            s.num_frames,
            s.num_bins,
            cfg.fft_size
        )));
    }
    if s.num_frames == 0 {
        return Err(Error::Shape("empty spectrogram".into()));
    }
    let full_window = cfg.full_window();
    let hop = cfg.hop_size;
    let padded_len = (s.num_frames - 1) * hop + cfg.fft_size;
    let mut num = vec![0.0; padded_len];
    let mut den = vec![0.0; padded_len];

    for f in 0..s.num_frames {
        let base = f * bins;
        let y = cfg
            .fft()
            .inverse_real(&s.re[base..base + bins], &s.im[base..base + bins]);
        let off = f * hop;
        for i in 0..cfg.fft_size {
            num[off + i] += y[i] * full_window[i];
            den[off + i] += full_window[i] * full_window[i];
        }
    }

    let den_floor = 1e-11 * den.iter().cloned().fold(0.0, f64::max);
    let (skip, out_len) = if cfg.center_padding {
        (cfg.fft_size / 2, (s.num_frames - 1) * hop)
    } else {
        (0, padded_len)
    };
    let mut samples = Vec::with_capacity(out_len);
    for n in skip..skip + out_len {
        let d = if den[n] > den_floor { den[n] } else { den_floor };
        samples.push(num[n] / d);
    }
    Ok(AudioBuffer::new(samples, s.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn noise(len: usize, seed: u64) -> AudioBuffer {
        let mut rng = Rng::seed_from_u64(seed);
        let samples: Vec<f64> = (0..len).map(|_| rng.gauss() * 0.3).collect();
        AudioBuffer::new(samples, 16_000)
    }

    #[test]
    fn config_rejects_bad_sizes() {
        assert!(StftConfig::new(256, 64, 512, true).is_err()); // win > fft
        assert!(StftConfig::new(256, 0, 256, true).is_err());
        assert!(StftConfig::new(256, 300, 256, true).is_err()); // hop > win
        assert!(StftConfig::new(100, 25, 100, true).is_err()); // not pow2
    }

    #[test]
    fn zero_in_zero_out() {
        let cfg = StftConfig::new(256, 64, 256, true).unwrap();
        let x = AudioBuffer::zeros(16_000, 16_000);
        let s = stft(&x, &cfg).unwrap();
        assert!(s.re.iter().chain(s.im.iter()).all(|&v| v == 0.0));
        let y = istft(&s).unwrap();
        assert!(y.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_non_finite_input() {
        let cfg = StftConfig::new(256, 64, 256, true).unwrap();
        let mut x = AudioBuffer::zeros(1024, 16_000);
        x.samples[10] = f64::INFINITY;
        assert!(stft(&x, &cfg).is_err());
    }

    #[test]
    fn frame_count_matches_contract() {
        let cfg = StftConfig::new(256, 64, 256, true).unwrap();
        let x = noise(512, 3);
        let s = stft(&x, &cfg).unwrap();
        assert_eq!(s.num_frames, 512 / 64 + 1);
        assert_eq!(s.num_bins, 129);
    }

    #[test]
    fn linearity() {
        let cfg = StftConfig::new(256, 64, 256, true).unwrap();
        let x1 = noise(1024, 4);
        let x2 = noise(1024, 5);
        let a = 0.7;
        let b = -1.3;
        let combo = AudioBuffer::new(
            x1.samples
                .iter()
                .zip(x2.samples.iter())
                .map(|(&u, &v)| a * u + b * v)
                .collect(),
            16_000,
        );
        let s1 = stft(&x1, &cfg).unwrap();
        let s2 = stft(&x2, &cfg).unwrap();
        let sc = stft(&combo, &cfg).unwrap();
        for i in 0..sc.re.len() {
            assert!((sc.re[i] - (a * s1.re[i] + b * s2.re[i])).abs() < 1e-9);
            assert!((sc.im[i] - (a * s1.im[i] + b * s2.im[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn istft_rejects_inconsistent_grid() {
        let cfg = StftConfig::new(256, 64, 256, true).unwrap();
        let mut s = ComplexSpectrogram::zeros_like(&cfg, 4, 16_000);
        s.num_bins = 100; // frame width no longer matches the config
        assert!(istft(&s).is_err());
        let mut s = ComplexSpectrogram::zeros_like(&cfg, 4, 16_000);
        s.re.truncate(17);
        assert!(istft(&s).is_err());
    }

    #[test]
    fn round_trip_interior_identity() {
        for (fft, hop) in [(256, 64), (256, 128), (512, 128)] {
            let cfg = StftConfig::new(fft, hop, fft, true).unwrap();
            let x = noise(4096, 7);
            let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
            assert_eq!(y.len(), 4096);
            let lo = fft / 2;
            let hi = y.len() - fft / 2;
            let mut err = 0.0;
            let mut norm = 0.0;
            for n in lo..hi {
                err += (y.samples[n] - x.samples[n]).powi(2);
                norm += x.samples[n].powi(2);
            }
            assert!(
                (err / norm).sqrt() < 1e-6,
                "relative err {} for fft {fft} hop {hop}",
                (err / norm).sqrt()
            );
        }
    }
}
