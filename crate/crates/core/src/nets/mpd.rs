//! Multi-period discriminator: reshapes the waveform into (length/p, p)
//! planes so strided 2-D convolutions see periodic structure.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{kaiming_weights, uniform_bias, DiscriminatorOutput, ParamSet, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct MpdConfig {
    /// Pairwise-coprime reshape periods.
    pub periods: Vec<usize>,
    /// Channel progression of the conv stack.
    pub channels: Vec<usize>,
}

impl Default for MpdConfig {
    fn default() -> Self {
        MpdConfig {
            periods: alloc::vec![2, 3, 5],
            channels: alloc::vec![8, 16, 32],
        }
    }
}

impl MpdConfig {
    fn validate(&self) -> Result<()> {
        if self.periods.is_empty() || self.channels.is_empty() {
            return Err(Error::Config("empty period or channel list".into()));
        }
        if self.periods.iter().any(|&p| p < 2) {
            return Err(Error::Config("periods must be >= 2".into()));
        }
        for (i, &a) in self.periods.iter().enumerate() {
            for &b in &self.periods[i + 1..] {
                if gcd(a, b) != 1 {
                    return Err(Error::Config(format!(
                        "periods {a} and {b} overlap (gcd {})",
                        gcd(a, b)
                    )));
                }
            }
        }
        Ok(())
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct Conv2 {
    w: Tensor,
    b: Tensor,
    stride: (usize, usize),
    padding: (usize, usize),
}

impl Conv2 {
    fn apply(&self, x: &Tensor) -> Tensor {
        tensor::conv2d(x, &self.w, &self.b, self.stride, self.padding)
    }
}

struct PeriodSub {
    period: usize,
    convs: Vec<Conv2>,
    post: Conv2,
}

pub struct MpdNet {
    pub config: MpdConfig,
    subs: Vec<PeriodSub>,
}

impl MpdNet {
    pub fn new(config: MpdConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut subs = Vec::new();
        for &period in &config.periods {
            let mut convs = Vec::new();
            let mut cin = 1;
            for &cout in &config.channels {
                let fan_in = cin * 5;
                convs.push(Conv2 {
                    w: kaiming_weights(rng, &[cout, cin, 5, 1], fan_in),
                    b: uniform_bias(rng, cout, fan_in),
                    stride: (3, 1),
                    padding: (2, 0),
                });
                cin = cout;
            }
            let fan_in = cin * 3;
            let post = Conv2 {
                w: kaiming_weights(rng, &[1, cin, 3, 1], fan_in),
                b: uniform_bias(rng, 1, fan_in),
                stride: (1, 1),
                padding: (1, 0),
            };
            subs.push(PeriodSub {
                period,
                convs,
                post,
            });
        }
        Ok(MpdNet { config, subs })
    }

    /// Waveform `[T]` → one output per period sub-discriminator. Lengths not
    /// divisible by a period are zero-padded at the end.
    pub fn forward(&self, y: &Tensor) -> Result<Vec<DiscriminatorOutput>> {
        let t = match *y.shape() {
            [t] => t,
            _ => {
                return Err(Error::Shape(format!(
                    "mpd expects a 1-D waveform, got {:?}",
                    y.shape()
                )))
            }
        };
        let mut outs = Vec::with_capacity(self.subs.len());
        for sub in &self.subs {
            let p = sub.period;
            let rem = t % p;
            let padded = if rem == 0 {
                tensor::reshape(y, &[1, t])
            } else {
                tensor::pad1d_end(&tensor::reshape(y, &[1, t]), p - rem)
            };
            let total = padded.len();
            let mut x = tensor::reshape(&padded, &[1, total / p, p]);
            let mut features = Vec::new();
            for conv in &sub.convs {
                x = tensor::leaky_relu(&conv.apply(&x), LEAKY_SLOPE);
                features.push(x.clone());
            }
            let score_map = sub.post.apply(&x);
            features.push(score_map.clone());
            let score = tensor::reshape(&score_map, &[score_map.len()]);
            outs.push(DiscriminatorOutput { score, features });
        }
        Ok(outs)
    }
}

impl ParamSet for MpdNet {
    fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (si, sub) in self.subs.iter().enumerate() {
            for (ci, conv) in sub.convs.iter().enumerate() {
                out.push((format!("mpd.{si}.conv.{ci}.weight"), conv.w.clone()));
                out.push((format!("mpd.{si}.conv.{ci}.bias"), conv.b.clone()));
            }
            out.push((format!("mpd.{si}.post.weight"), sub.post.w.clone()));
            out.push((format!("mpd.{si}.post.bias"), sub.post.b.clone()));
        }
        out
    }
}
