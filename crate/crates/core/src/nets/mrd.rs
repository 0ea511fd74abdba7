//! Multi-resolution discriminator: 2-D conv stacks over magnitude
//! spectrograms at several (fft, hop, win) resolutions.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{kaiming_weights, uniform_bias, DiscriminatorOutput, ParamSet, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stft::StftConfig;
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct MrdConfig {
    /// (fft_size, hop_size, win_length) per sub-discriminator.
    pub resolutions: Vec<(usize, usize, usize)>,
    pub channels: Vec<usize>,
}

impl Default for MrdConfig {
    fn default() -> Self {
        MrdConfig {
            resolutions: alloc::vec![(256, 64, 128), (512, 128, 256), (128, 32, 64)],
            channels: alloc::vec![4, 8, 16],
        }
    }
}

impl MrdConfig {
    /// The full-scale resolutions used by the reference setup.
    pub fn full_scale() -> Self {
        MrdConfig {
            resolutions: alloc::vec![(1024, 120, 600), (2048, 240, 1200), (512, 50, 240)],
            channels: alloc::vec![8, 16, 32],
        }
    }
}

struct Conv2 {
    w: Tensor,
    b: Tensor,
    stride: (usize, usize),
    padding: (usize, usize),
}

struct ResolutionSub {
    stft_cfg: StftConfig,
    convs: Vec<Conv2>,
    post: Conv2,
}

pub struct MrdNet {
    pub config: MrdConfig,
    subs: Vec<ResolutionSub>,
}

impl MrdNet {
    pub fn new(config: MrdConfig, rng: &mut Rng) -> Result<Self> {
        if config.resolutions.is_empty() || config.channels.is_empty() {
            return Err(Error::Config("empty resolution or channel list".into()));
        }
        let mut subs = Vec::new();
        for &(fft, hop, win) in &config.resolutions {
            // StftConfig::new enforces hop <= win <= fft.
            let stft_cfg = StftConfig::new(fft, hop, win, true)?;
            let mut convs = Vec::new();
            let mut cin = 1;
            for &cout in &config.channels {
                let fan_in = cin * 9;
                convs.push(Conv2 {
                    w: kaiming_weights(rng, &[cout, cin, 3, 3], fan_in),
                    b: uniform_bias(rng, cout, fan_in),
                    stride: (2, 2),
                    padding: (1, 1),
                });
                cin = cout;
            }
            let fan_in = cin * 9;
            let post = Conv2 {
                w: kaiming_weights(rng, &[1, cin, 3, 3], fan_in),
                b: uniform_bias(rng, 1, fan_in),
                stride: (1, 1),
                padding: (1, 1),
            };
            subs.push(ResolutionSub {
                stft_cfg,
                convs,
                post,
            });
        }
        Ok(MrdNet { config, subs })
    }

    pub fn forward(&self, y: &Tensor) -> Result<Vec<DiscriminatorOutput>> {
        if y.shape().len() != 1 {
            return Err(Error::Shape(format!(
                "mrd expects a 1-D waveform, got {:?}",
                y.shape()
            )));
        }
        let mut outs = Vec::with_capacity(self.subs.len());
        for sub in &self.subs {
            let mag = tensor::stft_magnitude(y, &sub.stft_cfg);
            let (bins, frames) = match *mag.shape() {
                [b, f] => (b, f),
                _ => unreachable!(),
            };
            let mut x = tensor::reshape(&mag, &[1, bins, frames]);
            let mut features = Vec::new();
            for conv in &sub.convs {
                x = tensor::leaky_relu(
                    &tensor::conv2d(&x, &conv.w, &conv.b, conv.stride, conv.padding),
                    LEAKY_SLOPE,
                );
                features.push(x.clone());
            }
            let score_map = tensor::conv2d(&x, &sub.post.w, &sub.post.b, sub.post.stride, sub.post.padding);
            features.push(score_map.clone());
            let score = tensor::reshape(&score_map, &[score_map.len()]);
            outs.push(DiscriminatorOutput { score, features });
        }
        Ok(outs)
    }
}

impl ParamSet for MrdNet {
    fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (si, sub) in self.subs.iter().enumerate() {
            for (ci, conv) in sub.convs.iter().enumerate() {
                out.push((format!("mrd.{si}.conv.{ci}.weight"), conv.w.clone()));
                out.push((format!("mrd.{si}.conv.{ci}.bias"), conv.b.clone()));
            }
            out.push((format!("mrd.{si}.post.weight"), sub.post.w.clone()));
            out.push((format!("mrd.{si}.post.bias"), sub.post.b.clone()));
        }
        out
    }
}
