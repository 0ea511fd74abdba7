//! Thin wrappers over `libm` plus small shared numeric helpers.
//!
//! `core` has no float transcendentals, so every module routes through these
//! free functions. Using `libm` in all builds keeps results identical whether
//! the crate is linked against std or not.

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// 10^(db/20), the amplitude ratio for a dB value.
#[inline]
pub fn db_to_amplitude(db: f64) -> f64 {
    powf(10.0, db / 20.0)
}

/// 20·log10(x) with a tiny floor so silence does not produce -inf.
#[inline]
pub fn amplitude_to_db(x: f64) -> f64 {
    20.0 * log10(if x > 1e-300 { x } else { 1e-300 })
}

/// sign with sign(0) = 0.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_of_zero_is_zero() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(3.5), 1.0);
        assert_eq!(sign(-0.1), -1.0);
    }

    #[test]
    fn db_round_trip() {
        let x = 0.123;
        let db = amplitude_to_db(x);
        assert!((db_to_amplitude(db) - x).abs() < 1e-12);
    }
}
