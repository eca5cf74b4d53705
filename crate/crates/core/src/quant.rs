//! Affine 8-bit quantization shared by the displacement maps and the
//! exported hash tables.

use crate::error::{Error, Result};
use crate::math::round;

pub const LEVELS: u32 = 256;

/// `value = min + code * step`, codes `0..=255`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineQuant {
    pub min: f64,
    pub step: f64,
}

impl AffineQuant {
    /// Fits the range of `values`. A constant input gets `step = 1` so that
    /// every code is 0.
    pub fn fit(values: &[f64]) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in values {
            if !v.is_finite() {
                return Err(Error::NonFinite("quantized values"));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if values.is_empty() {
            return Ok(AffineQuant { min: 0.0, step: 1.0 });
        }
        if hi <= lo {
            return Ok(AffineQuant { min: lo, step: 1.0 });
        }
        Ok(AffineQuant {
            min: lo,
            step: (hi - lo) / (LEVELS - 1) as f64,
        })
    }

    pub fn max(&self) -> f64 {
        self.min + self.step * (LEVELS - 1) as f64
    }

    /// Clamps into the representable range, then rounds half away from zero.
    #[inline]
    pub fn quantize(&self, v: f64) -> u8 {
        let span = self.max() - self.min;
        let t = (v - self.min) / span * (LEVELS - 1) as f64;
        round(t).clamp(0.0, (LEVELS - 1) as f64) as u8
    }

    #[inline]
    pub fn dequantize(&self, code: u8) -> f64 {
        self.min + code as f64 * self.step
    }

    pub fn quantize_all(&self, values: &[f64]) -> alloc::vec::Vec<u8> {
        values.iter().map(|&v| self.quantize(v)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.min.is_finite() || !self.step.is_finite() || self.step <= 0.0 {
            return Err(Error::config("quantization step must be positive and finite"));
        }
        Ok(())
    }
}
