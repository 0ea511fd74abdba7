//! Miniature generator and discriminator networks.
//!
//! Same topology family as the usual mel-to-waveform GAN vocoders
//! (progressive transposed-conv upsampling with multi-receptive-field
//! residual blocks; period-reshaping and multi-resolution spectrogram
//! discriminators), sized to train on a CPU in minutes.

mod generator;
mod mpd;
mod mrd;

pub use generator::{GeneratorConfig, GeneratorNet};
pub use mpd::{MpdConfig, MpdNet};
pub use mrd::{MrdConfig, MrdNet};

use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.1;

/// Score map plus the per-layer features retained for feature matching.
pub struct DiscriminatorOutput {
    pub score: Tensor,
    pub features: Vec<Tensor>,
}

/// Kaiming-uniform weight init with the leaky-relu gain.
pub(crate) fn kaiming_weights(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let gain = crate::math::sqrt(2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE));
    let bound = gain * crate::math::sqrt(3.0 / fan_in as f64);
    let n: usize = shape.iter().product();
    let values: Vec<f64> = (0..n).map(|_| rng.uniform_in(-bound, bound)).collect();
    Tensor::parameter(shape, values)
}

pub(crate) fn uniform_bias(rng: &mut Rng, len: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / crate::math::sqrt(fan_in as f64);
    let values: Vec<f64> = (0..len).map(|_| rng.uniform_in(-bound, bound)).collect();
    Tensor::parameter(&[len], values)
}

pub(crate) fn zero_bias(len: usize) -> Tensor {
    Tensor::parameter(&[len], alloc::vec![0.0; len])
}

/// Runs every sub-discriminator of both banks on one waveform; MPD subs
/// come first, then MRD subs.
pub fn forward_discriminators(
    mpd: &MpdNet,
    mrd: &MrdNet,
    y: &Tensor,
) -> crate::error::Result<(Vec<Tensor>, Vec<Vec<Tensor>>)> {
    let mut scores = Vec::new();
    let mut features = Vec::new();
    for out in mpd.forward(y)?.into_iter().chain(mrd.forward(y)?) {
        scores.push(out.score);
        features.push(out.features);
    }
    Ok((scores, features))
}

/// Named flat parameter list, the unit of checkpointing.
pub trait ParamSet {
    fn named_parameters(&self) -> Vec<(String, Tensor)>;

    fn parameters(&self) -> Vec<Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn zero_grad(&self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }

    fn all_finite(&self) -> bool {
        self.parameters()
            .iter()
            .all(|p| p.values().iter().all(|v| v.is_finite()))
    }
}
