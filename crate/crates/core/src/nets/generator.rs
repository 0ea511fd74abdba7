//! Mel-to-waveform generator: progressive transposed-conv upsampling with
//! multi-receptive-field residual fusion.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{kaiming_weights, uniform_bias, zero_bias, ParamSet, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::mel::MelGrid;
use crate::rng::Rng;
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub num_mels: usize,
    /// Channels after the input projection; halved at each upsampling stage.
    pub base_channels: usize,
    pub upsample_rates: Vec<usize>,
    /// Kernel sizes of the parallel residual branches fused per stage.
    pub resblock_kernels: Vec<usize>,
    /// Dilations applied sequentially inside each branch.
    pub resblock_dilations: Vec<usize>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_mels: 32,
            base_channels: 48,
            upsample_rates: alloc::vec![8, 8],
            resblock_kernels: alloc::vec![3, 5],
            resblock_dilations: alloc::vec![1, 3],
        }
    }
}

impl GeneratorConfig {
    pub fn upsample_product(&self) -> usize {
        self.upsample_rates.iter().product()
    }

    fn validate(&self) -> Result<()> {
        if self.num_mels == 0 || self.base_channels < 2 || self.upsample_rates.is_empty() {
            return Err(Error::Config("degenerate generator config".into()));
        }
        if self.upsample_rates.iter().any(|&r| r < 2 || r % 2 != 0) {
            return Err(Error::Config("upsample rates must be even and >= 2".into()));
        }
        if self.resblock_kernels.iter().any(|&k| k % 2 == 0) {
            return Err(Error::Config("resblock kernels must be odd".into()));
        }
        // channel halving must stay >= 1
        if self.base_channels >> self.upsample_rates.len() == 0 {
            return Err(Error::Config("base_channels too small for the upsample stack".into()));
        }
        Ok(())
    }
}

struct Conv {
    w: Tensor,
    b: Tensor,
    dilation: usize,
    padding: usize,
}

impl Conv {
    fn apply(&self, x: &Tensor) -> Tensor {
        tensor::conv1d(x, &self.w, &self.b, self.dilation, self.padding)
    }
}

struct ResBranch {
    convs: Vec<Conv>,
}

impl ResBranch {
    /// x + conv_d(leaky(x)) applied once per dilation.
    fn apply(&self, mut x: Tensor) -> Tensor {
        for conv in &self.convs {
            let xt = tensor::leaky_relu(&x, LEAKY_SLOPE);
            x = tensor::add(&conv.apply(&xt), &x);
        }
        x
    }
}

struct UpStage {
    up_w: Tensor,
    up_b: Tensor,
    rate: usize,
    branches: Vec<ResBranch>,
}

pub struct GeneratorNet {
    pub config: GeneratorConfig,
    conv_pre: Conv,
    stages: Vec<UpStage>,
    conv_post: Conv,
}

impl GeneratorNet {
    pub fn new(config: GeneratorConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let ch0 = config.base_channels;
        let conv_pre = Conv {
            w: kaiming_weights(rng, &[ch0, config.num_mels, 7], config.num_mels * 7),
            b: uniform_bias(rng, ch0, config.num_mels * 7),
            dilation: 1,
            padding: 3,
        };
        let mut stages = Vec::new();
        let mut ch = ch0;
        for &rate in &config.upsample_rates {
            let ch_out = ch / 2;
            let k = 2 * rate;
            let up_w = kaiming_weights(rng, &[ch, ch_out, k], ch * k / rate);
            let up_b = uniform_bias(rng, ch_out, ch * k / rate);
            let mut branches = Vec::new();
            for &kernel in &config.resblock_kernels {
                let mut convs = Vec::new();
                for &d in &config.resblock_dilations {
                    convs.push(Conv {
                        w: kaiming_weights(rng, &[ch_out, ch_out, kernel], ch_out * kernel),
                        b: uniform_bias(rng, ch_out, ch_out * kernel),
                        dilation: d,
                        padding: (kernel - 1) * d / 2,
                    });
                }
                branches.push(ResBranch { convs });
            }
            stages.push(UpStage {
                up_w,
                up_b,
                rate,
                branches,
            });
            ch = ch_out;
        }
        let conv_post = Conv {
            w: kaiming_weights(rng, &[1, ch, 7], ch * 7),
            b: zero_bias(1), // final projection bias starts at zero
            dilation: 1,
            padding: 3,
        };
        Ok(GeneratorNet {
            config,
            conv_pre,
            stages,
            conv_post,
        })
    }

    /// Mel condition `[num_mels, frames]` → waveform tensor of exactly
    /// frames · Π(upsample rates) samples.
    pub fn forward(&self, mel: &Tensor) -> Result<Tensor> {
        let (bands, frames) = match *mel.shape() {
            [b, f] => (b, f),
            _ => {
                return Err(Error::Shape(format!(
                    "generator input must be [mels, frames], got {:?}",
                    mel.shape()
                )))
            }
        };
        if bands != self.config.num_mels {
            return Err(Error::Shape(format!(
                "generator expects {} mel bands, got {bands}",
                self.config.num_mels
            )));
        }
        if frames == 0 {
            return Err(Error::Shape("generator input has zero frames".into()));
        }
        let mut x = self.conv_pre.apply(mel);
        for stage in &self.stages {
            x = tensor::leaky_relu(&x, LEAKY_SLOPE);
            x = tensor::conv_transpose1d(&x, &stage.up_w, &stage.up_b, stage.rate, stage.rate / 2);
            // Multi-receptive-field fusion: average the parallel branches.
            let mut fused: Option<Tensor> = None;
            for branch in &stage.branches {
                let y = branch.apply(x.clone());
                fused = Some(match fused {
                    None => y,
                    Some(acc) => tensor::add(&acc, &y),
                });
            }
            let n = stage.branches.len() as f64;
            x = tensor::scale(&fused.expect("at least one resblock branch"), 1.0 / n);
        }
        let x = tensor::leaky_relu(&x, LEAKY_SLOPE);
        let x = self.conv_post.apply(&x);
        let x = tensor::tanh(&x);
        let out_len = frames * self.config.upsample_product();
        debug_assert_eq!(x.len(), out_len);
        Ok(tensor::reshape(&x, &[out_len]))
    }

    /// Forward from a plain mel grid (tensor constant; gradients flow only
    /// to the parameters).
    pub fn forward_grid(&self, mel: &MelGrid) -> Result<Tensor> {
        let t = Tensor::constant(&[mel.num_bands, mel.num_frames], mel.data.clone());
        self.forward(&t)
    }
}

impl ParamSet for GeneratorNet {
    fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        out.push(("g.conv_pre.weight".into(), self.conv_pre.w.clone()));
        out.push(("g.conv_pre.bias".into(), self.conv_pre.b.clone()));
        for (si, stage) in self.stages.iter().enumerate() {
            out.push((format!("g.up.{si}.weight"), stage.up_w.clone()));
            out.push((format!("g.up.{si}.bias"), stage.up_b.clone()));
            for (bi, branch) in stage.branches.iter().enumerate() {
                for (ci, conv) in branch.convs.iter().enumerate() {
                    out.push((format!("g.res.{si}.{bi}.{ci}.weight"), conv.w.clone()));
                    out.push((format!("g.res.{si}.{bi}.{ci}.bias"), conv.b.clone()));
                }
            }
        }
        out.push(("g.conv_post.weight".into(), self.conv_post.w.clone()));
        out.push(("g.conv_post.bias".into(), self.conv_post.b.clone()));
        out
    }
}
