#![cfg_attr(not(test), no_std)]

//! Core kernels for training GAN vocoders with diffusion-noise injection.
//!
//! Everything in this crate is pure computation over heap buffers: STFT/mel
//! operators, spectral-envelope filters and the shaped-noise sampler built
//! from them, the forward-diffusion schedule, the adaptive diffusion-cap
//! controller, a small reverse-mode autodiff engine with the generator and
//! discriminator networks built on it, the loss stack, and synthetic signal
//! generators. File formats, WAV I/O, the training-loop persistence and the
//! CLI live in the companion `vocdiff` crate.
//!
//! The crate is `no_std` (with `alloc`); all float math goes through `libm`
//! so results do not depend on the host libm.

extern crate alloc;

pub mod adaptive;
pub mod audio;
pub mod diffusion;
pub mod envelope;
pub mod error;
pub mod fft;
pub mod losses;
pub mod math;
pub mod mel;
pub mod nets;
pub mod optim;
pub mod rng;
pub mod stft;
pub mod synth;
pub mod tensor;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
pub use rng::Rng;
