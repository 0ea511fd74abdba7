//! Mono waveform buffer.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Mono waveform samples with their sample rate. DSP runs in f64; file I/O
/// (in the companion crate) converts to/from single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioBuffer {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        AudioBuffer {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Errors if any sample is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        for (i, &s) in self.samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::Numeric(alloc::format!(
                    "non-finite sample {s} at index {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn peak(&self) -> f64 {
        self.samples
            .iter()
            .fold(0.0, |acc, &s| if math::abs(s) > acc { math::abs(s) } else { acc })
    }

    /// Scales so the peak hits `target` (no-op for all-zero input).
    pub fn normalize_peak(&mut self, target: f64) {
        let peak = self.peak();
        if peak > 0.0 {
            let g = target / peak;
            for s in self.samples.iter_mut() {
                *s *= g;
            }
        }
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}
