//! Discriminator-overfitting estimate and the adaptive diffusion cap.
//!
//! Every minibatch pushes `mean(sign(D_train - 0.5))` into a small window;
//! every `window_size` minibatches the window mean becomes `r_d`, the cap T
//! moves by `sign(r_d - d_target) · c_step`, and timesteps are then drawn
//! from the triangular distribution P(t = k) ∝ k on {1..T}.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    pub t_current: usize,
    pub d_target: f64,
    pub c_step: usize,
    pub t_min: usize,
    pub t_max: usize,
    /// Per-minibatch mean sign values awaiting aggregation.
    pub window: Vec<f64>,
    pub window_size: usize,
}

impl AdaptiveState {
    pub fn new(
        t_initial: usize,
        t_min: usize,
        t_max: usize,
        d_target: f64,
        c_step: usize,
        window_size: usize,
    ) -> Result<Self> {
        if !(t_min >= 1 && t_min <= t_max) {
            return Err(Error::Config(alloc::format!(
                "need 1 <= t_min <= t_max, got [{t_min}, {t_max}]"
            )));
        }
        if !(d_target > 0.0 && d_target < 1.0) {
            return Err(Error::Config(alloc::format!(
                "d_target {d_target} must lie in (0, 1)"
            )));
        }
        if c_step == 0 || window_size == 0 {
            return Err(Error::Config("c_step and window_size must be positive".into()));
        }
        Ok(AdaptiveState {
            t_current: t_initial.clamp(t_min, t_max),
            d_target,
            c_step,
            t_min,
            t_max,
            window: Vec::with_capacity(window_size),
            window_size,
        })
    }
}

/// Pushes one minibatch of discriminator outputs on diffused *real* samples.
/// Returns `Some(r_d)` when the window fills (and clears it); the caller
/// then applies [`update_t`].
pub fn record_minibatch(state: &mut AdaptiveState, d_train_outputs: &[f64]) -> Result<Option<f64>> {
    if d_train_outputs.is_empty() {
        return Err(Error::Shape("empty discriminator output vector".into()));
    }
    if d_train_outputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite discriminator output".into()));
    }
    let mean_sign = d_train_outputs
        .iter()
        .map(|&d| math::sign(d - 0.5))
        .sum::<f64>()
        / d_train_outputs.len() as f64;
    state.window.push(mean_sign);
    if state.window.len() >= state.window_size {
        let r_d = state.window.iter().sum::<f64>() / state.window.len() as f64;
        state.window.clear();
        Ok(Some(r_d))
    } else {
        Ok(None)
    }
}

/// `T ← clamp(T + sign(r_d - d_target)·C)`. sign(0) = 0, so hitting the
/// target exactly leaves T unchanged.
pub fn update_t(state: &mut AdaptiveState, r_d: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&r_d) {
        return Err(Error::Config(alloc::format!("r_d {r_d} outside [-1, 1]")));
    }
    let dir = math::sign(r_d - state.d_target);
    let t = state.t_current as i64 + dir as i64 * state.c_step as i64;
    state.t_current = t.clamp(state.t_min as i64, state.t_max as i64) as usize;
    Ok(())
}

/// Draws t from P(t = k) = k / c_T on {1..T}, c_T = T(T+1)/2.
pub fn sample_t(state: &AdaptiveState, rng: &mut Rng) -> usize {
    sample_triangular(state.t_current, rng)
}

pub fn sample_triangular(t_cap: usize, rng: &mut Rng) -> usize {
    debug_assert!(t_cap >= 1);
    let c_t = (t_cap as u64 * (t_cap as u64 + 1)) / 2;
    // Inverse CDF: smallest k with k(k+1)/2 >= u·c_T.
    let target = rng.uniform() * c_t as f64;
    let mut acc = 0u64;
    for k in 1..=t_cap as u64 {
        acc += k;
        if acc as f64 >= target {
            return k as usize;
        }
    }
    t_cap
}
