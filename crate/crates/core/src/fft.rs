//! Iterative radix-2 FFT on split real/imaginary buffers.
//!
//! Sizes are restricted to powers of two, which every config in this
//! workspace satisfies. Twiddles are precomputed per plan; plans are
//! immutable and safe to share.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    // Twiddle factors e^{-2πik/n} for k in 0..n/2.
    tw_re: Vec<f64>,
    tw_im: Vec<f64>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Config(alloc::format!(
                "fft size must be a power of two, got {n}"
            )));
        }
        let half = n / 2;
        let mut tw_re = Vec::with_capacity(half.max(1));
        let mut tw_im = Vec::with_capacity(half.max(1));
        for k in 0..half.max(1) {
            let angle = -2.0 * core::f64::consts::PI * k as f64 / n as f64;
            tw_re.push(math::cos(angle));
            tw_im.push(math::sin(angle));
        }
        Ok(Fft { n, tw_re, tw_im })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// In-place forward DFT: X_k = Σ_n x_n e^{-2πikn/N}.
    pub fn forward(&self, re: &mut [f64], im: &mut [f64]) {
        assert_eq!(re.len(), self.n);
        assert_eq!(im.len(), self.n);
        self.transform(re, im);
    }

    /// In-place inverse DFT with 1/N scaling.
    pub fn inverse(&self, re: &mut [f64], im: &mut [f64]) {
        assert_eq!(re.len(), self.n);
        assert_eq!(im.len(), self.n);
        // conj, forward, conj, scale
        for v in im.iter_mut() {
            *v = -*v;
        }
        self.transform(re, im);
        let scale = 1.0 / self.n as f64;
        for (r, i) in re.iter_mut().zip(im.iter_mut()) {
            *r *= scale;
            *i = -*i * scale;
        }
    }

    fn transform(&self, re: &mut [f64], im: &mut [f64]) {
        let n = self.n;
        if n == 1 {
            return;
        }
        // Bit-reversal permutation.
        let shift = (usize::BITS - n.trailing_zeros()) % usize::BITS;
        for i in 0..n {
            let j = i.reverse_bits() >> shift;
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        // Butterflies.
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                let mut k = 0;
                for off in 0..half {
                    let i = start + off;
                    let j = i + half;
                    let wr = self.tw_re[k];
                    let wi = self.tw_im[k];
                    let tr = re[j] * wr - im[j] * wi;
                    let ti = re[j] * wi + im[j] * wr;
                    re[j] = re[i] - tr;
                    im[j] = im[i] - ti;
                    re[i] += tr;
                    im[i] += ti;
                    k += step;
                }
            }
            len <<= 1;
        }
    }

    /// Forward DFT of a real signal, returning the one-sided half spectrum
    /// (n/2 + 1 bins).
    pub fn forward_real(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(x.len(), self.n);
        let mut re = x.to_vec();
        let mut im = vec![0.0; self.n];
        self.forward(&mut re, &mut im);
        let bins = self.n / 2 + 1;
        re.truncate(bins);
        im.truncate(bins);
        (re, im)
    }

    /// Inverse DFT from a one-sided spectrum of a real signal; imaginary
    /// residue from rounding is discarded.
    pub fn inverse_real(&self, half_re: &[f64], half_im: &[f64]) -> Vec<f64> {
        let bins = self.n / 2 + 1;
        assert_eq!(half_re.len(), bins);
        assert_eq!(half_im.len(), bins);
        let mut re = vec![0.0; self.n];
        let mut im = vec![0.0; self.n];
        re[..bins].copy_from_slice(half_re);
        im[..bins].copy_from_slice(half_im);
        for k in 1..self.n / 2 {
            re[self.n - k] = half_re[k];
            im[self.n - k] = -half_im[k];
        }
        self.inverse(&mut re, &mut im);
        re
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(N²) reference DFT.
    fn naive_dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for k in 0..n {
            for (idx, &v) in x.iter().enumerate() {
                let angle = -2.0 * core::f64::consts::PI * (k * idx) as f64 / n as f64;
                re[k] += v * math::cos(angle);
                im[k] += v * math::sin(angle);
            }
        }
        (re, im)
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Fft::new(48).is_err());
        assert!(Fft::new(0).is_err());
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = crate::rng::Rng::seed_from_u64(1);
        let n = 64;
        let x: Vec<f64> = (0..n).map(|_| rng.gauss()).collect();
        let fft = Fft::new(n).unwrap();
        let mut re = x.clone();
        let mut im = vec![0.0; n];
        fft.forward(&mut re, &mut im);
        let (nre, nim) = naive_dft(&x);
        for k in 0..n {
            assert!((re[k] - nre[k]).abs() < 1e-9, "re bin {k}");
            assert!((im[k] - nim[k]).abs() < 1e-9, "im bin {k}");
        }
    }

    #[test]
    fn round_trip_identity() {
        let mut rng = crate::rng::Rng::seed_from_u64(2);
        let n = 256;
        let x: Vec<f64> = (0..n).map(|_| rng.gauss()).collect();
        let fft = Fft::new(n).unwrap();
        let (hre, him) = fft.forward_real(&x);
        let y = fft.inverse_real(&hre, &him);
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
