//! Mother wavelet and its dyadic dilations.
//!
//! The only family shipped is the Gaussian wavelet, taken as
//! `ψ(x) = -x·exp(-x²/2)`, with closed-form derivatives
//!
//! ```text
//! ψ'(x)   = (x² - 1)·e^{-x²/2}
//! ψ''(x)  = x(3 - x²)·e^{-x²/2}
//! ψ'''(x) = (x⁴ - 6x² + 3)·e^{-x²/2}
//! ```
//!
//! For |x| beyond roughly 38 the exponential underflows and every order
//! evaluates to exactly zero, including for arguments whose powers would
//! overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest derivative order exposed.
pub const MAX_ORDER: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotherWavelet {
    #[default]
    GaussianFirstDerivative,
}

impl MotherWavelet {
    /// `ψ⁽ᵒʳᵈᵉʳ⁾(x)` for `order ∈ 0..=3`.
    pub fn eval(self, x: f64, order: u8) -> Result<f64> {
        if order > MAX_ORDER {
            return Err(Error::UnsupportedOrder(order, "0..=3"));
        }
        Ok(self.derivatives(x)[order as usize])
    }

    /// All four derivatives `[ψ, ψ', ψ'', ψ''']` sharing a single exponential.
    #[inline]
    pub fn derivatives(self, x: f64) -> [f64; 4] {
        match self {
            MotherWavelet::GaussianFirstDerivative => gaussian_derivatives(x),
        }
    }

    /// `dⁿ/dxⁿ [2^{j/2} ψ(2^j x - k)] = 2^{jn}·2^{j/2}·ψ⁽ⁿ⁾(2^j x - k)`.
    pub fn eval_scaled(self, j: i32, k: i64, x: f64, order: u8) -> Result<f64> {
        if order > MAX_ORDER {
            return Err(Error::UnsupportedOrder(order, "0..=3"));
        }
        let scale = dyadic(j);
        let psi = self.derivatives(scale * x - k as f64)[order as usize];
        Ok(scale.powi(order as i32) * scale.sqrt() * psi)
    }
}

/// `2^j` computed exactly for every representable level.
#[inline]
pub fn dyadic(j: i32) -> f64 {
    2f64.powi(j)
}

#[inline]
pub(crate) fn gaussian_derivatives(x: f64) -> [f64; 4] {
    // e^{-x²/2} is exactly 0.0 past |x| ≈ 38.6; the early return only keeps
    // x⁴ from overflowing into inf·0 for huge arguments.
    if x.abs() > 40.0 {
        return [0.0; 4];
    }
    let x2 = x * x;
    let g = (-0.5 * x2).exp();
    [
        -x * g,
        (x2 - 1.0) * g,
        x * (3.0 - x2) * g,
        (x2 * x2 - 6.0 * x2 + 3.0) * g,
    ]
}

/// Free-function form of [`MotherWavelet::eval`] for the default wavelet.
pub fn eval_psi(x: f64, order: u8) -> Result<f64> {
    MotherWavelet::GaussianFirstDerivative.eval(x, order)
}

/// Free-function form of [`MotherWavelet::eval_scaled`] for the default wavelet.
pub fn eval_scaled(j: i32, k: i64, x: f64, order: u8) -> Result<f64> {
    MotherWavelet::GaussianFirstDerivative.eval_scaled(j, k, x, order)
}
