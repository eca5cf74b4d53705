//! View-dependent displacement maps: per-texel SH coefficients for each
//! world axis plus a scalar scale, sampled bilinearly at the hit's texture
//! coordinate and used to shift the hit point before the field lookup.

use alloc::vec;
use alloc::vec::Vec;


use crate::error::{Error, Result};
use crate::fields::sh::{C0, C1};
use crate::fields::{check_unit, ShBasis, MAX_SH_DEGREE};
use crate::math::{floor, Vec2, Vec3};
use crate::quant::AffineQuant;

/// Paired SH-coefficient and scale textures of `resolution x resolution`
/// texels. The SH texture is axis-major: channel `axis * basis_count + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementMaps {
    resolution: u32,
    basis: ShBasis,
    sh_map: Vec<f64>,
    scale_map: Vec<f64>,
}

/// Largest basis count, for stack buffers.
pub(crate) const MAX_BASIS: usize = ((MAX_SH_DEGREE + 1) * (MAX_SH_DEGREE + 1)) as usize;

/// One bilinear tap: texel index and weight.
pub type Tap = (usize, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct MapSample {
    /// `3 * basis_count` coefficients, axis-major.
    pub sh: Vec<f64>,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizationParams {
    pub sh: AffineQuant,
    pub scale: AffineQuant,
}

/// 8-bit codes of both textures with their affine parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMaps {
    pub resolution: u32,
    pub sh_degree: u32,
    pub sh_codes: Vec<u8>,
    pub scale_codes: Vec<u8>,
    pub params: QuantizationParams,
}

impl DisplacementMaps {
    /// All-zero maps, i.e. no displacement.
    pub fn zeros(resolution: u32, sh_degree: u32) -> Result<Self> {
        let basis = ShBasis::new(sh_degree)?;
        if resolution == 0 {
            return Err(Error::config("map resolution must be positive"));
        }
        let texels = resolution as usize * resolution as usize;
        Ok(DisplacementMaps {
            resolution,
            basis,
            sh_map: vec![0.0; texels * 3 * basis.basis_count()],
            scale_map: vec![0.0; texels],
        })
    }

    /// Zero scale (identity displacement) with a spatially constant SH map
    /// whose offset direction is `amplitude * d` (degree 0: a fixed diagonal),
    /// so the scale map receives gradient from the start. Being constant, the
    /// untouched texels compress to almost nothing in a bundle.
    pub fn identity_init(resolution: u32, sh_degree: u32, amplitude: f64) -> Result<Self> {
        let mut maps = Self::zeros(resolution, sh_degree)?;
        let b = maps.basis.basis_count();
        let mut texel = vec![0.0; 3 * b];
        if sh_degree == 0 {
            for axis in 0..3 {
                texel[axis * b] = amplitude / C0;
            }
        } else {
            // Y1 = -C1 y, Y2 = C1 z, Y3 = -C1 x.
            texel[3] = -amplitude / C1;
            texel[b + 1] = -amplitude / C1;
            texel[2 * b + 2] = amplitude / C1;
        }
        for chunk in maps.sh_map.chunks_exact_mut(3 * b) {
            chunk.copy_from_slice(&texel);
        }
        Ok(maps)
    }

    pub fn from_parts(resolution: u32, sh_degree: u32, sh_map: Vec<f64>, scale_map: Vec<f64>) -> Result<Self> {
        let mut maps = Self::zeros(resolution, sh_degree)?;
        if sh_map.len() != maps.sh_map.len() {
            return Err(Error::DimensionMismatch {
                what: "SH map",
                expected: maps.sh_map.len(),
                got: sh_map.len(),
            });
        }
        if scale_map.len() != maps.scale_map.len() {
            return Err(Error::DimensionMismatch {
                what: "scale map",
                expected: maps.scale_map.len(),
                got: scale_map.len(),
            });
        }
        if sh_map.iter().chain(&scale_map).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("displacement maps"));
        }
        maps.sh_map = sh_map;
        maps.scale_map = scale_map;
        Ok(maps)
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn sh_degree(&self) -> u32 {
        self.basis.degree()
    }

    pub fn basis(&self) -> &ShBasis {
        &self.basis
    }

    /// `3 * (degree + 1)^2`
    pub fn sh_channels(&self) -> usize {
        3 * self.basis.basis_count()
    }

    pub fn sh_map(&self) -> &[f64] {
        &self.sh_map
    }

    pub fn sh_map_mut(&mut self) -> &mut [f64] {
        &mut self.sh_map
    }

    pub fn scale_map(&self) -> &[f64] {
        &self.scale_map
    }

    pub fn scale_map_mut(&mut self) -> &mut [f64] {
        &mut self.scale_map
    }

    /// Bilinear taps at `p_t` with edge clamping. Texel `(x, y)` has its
    /// center at `((x + 0.5) / R, (y + 0.5) / R)`; out-of-range
    /// coordinates are clamped.
    pub fn taps(&self, p_t: Vec2) -> [Tap; 4] {
        let r = self.resolution as usize;
        let rf = self.resolution as f64;
        let u = if p_t.x.is_nan() { 0.0 } else { p_t.x.clamp(0.0, 1.0) };
        let v = if p_t.y.is_nan() { 0.0 } else { p_t.y.clamp(0.0, 1.0) };
        let fx = u * rf - 0.5;
        let fy = v * rf - 0.5;
        let x0 = floor(fx);
        let y0 = floor(fy);
        let wx = fx - x0;
        let wy = fy - y0;
        let clamp = |i: f64| -> usize { (i.max(0.0) as usize).min(r - 1) };
        let (xa, xb) = (clamp(x0), clamp(x0 + 1.0));
        let (ya, yb) = (clamp(y0), clamp(y0 + 1.0));
        [
            (ya * r + xa, (1.0 - wx) * (1.0 - wy)),
            (ya * r + xb, wx * (1.0 - wy)),
            (yb * r + xa, (1.0 - wx) * wy),
            (yb * r + xb, wx * wy),
        ]
    }

    /// Bilinearly filtered SH coefficients and scale at `p_t`.
    pub fn sample(&self, p_t: Vec2) -> MapSample {
        let taps = self.taps(p_t);
        let ch = self.sh_channels();
        let mut sh = vec![0.0; ch];
        let mut scale = 0.0;
        for (texel, w) in taps {
            if w == 0.0 {
                continue;
            }
            let src = &self.sh_map[texel * ch..(texel + 1) * ch];
            for (o, v) in sh.iter_mut().zip(src) {
                *o += w * v;
            }
            scale += w * self.scale_map[texel];
        }
        MapSample { sh, scale }
    }

    /// Unscaled displacement direction `S(m_SH, d)`: per axis, the dot of
    /// the basis values with that axis' coefficients.
    pub fn sh_vector(&self, sh: &[f64], basis_values: &[f64]) -> Vec3 {
        let b = self.basis.basis_count();
        let mut out = Vec3::ZERO;
        for axis in 0..3 {
            out[axis] = sh[axis * b..(axis + 1) * b]
                .iter()
                .zip(basis_values)
                .map(|(c, y)| c * y)
                .sum();
        }
        out
    }

    /// Calibrated point `p + S(m_SH(p_t), d) * m_s(p_t)`.
    pub fn calibrate(&self, p: Vec3, p_t: Vec2, d: Vec3) -> Result<Vec3> {
        check_unit(d)?;
        let mut basis_values = [0.0; MAX_BASIS];
        let b = self.basis.basis_count();
        self.basis.eval_into(d, &mut basis_values[..b]);
        let ch = self.sh_channels();
        let mut offset = Vec3::ZERO;
        let mut scale = 0.0;
        for (texel, w) in self.taps(p_t) {
            if w == 0.0 {
                continue;
            }
            let coeffs = &self.sh_map[texel * ch..(texel + 1) * ch];
            for axis in 0..3 {
                let dot: f64 = coeffs[axis * b..(axis + 1) * b]
                    .iter()
                    .zip(&basis_values[..b])
                    .map(|(c, y)| c * y)
                    .sum();
                offset[axis] += w * dot;
            }
            scale += w * self.scale_map[texel];
        }
        Ok(p + offset * scale)
    }

    /// Quantizes each texture with its own affine range.
    pub fn quantize(&self) -> Result<QuantizedMaps> {
        let params = QuantizationParams {
            sh: AffineQuant::fit(&self.sh_map)?,
            scale: AffineQuant::fit(&self.scale_map)?,
        };
        Ok(self.quantize_with(params))
    }

    /// Quantizes with fixed parameters (values outside the range clamp).
    pub fn quantize_with(&self, params: QuantizationParams) -> QuantizedMaps {
        QuantizedMaps {
            resolution: self.resolution,
            sh_degree: self.basis.degree(),
            sh_codes: params.sh.quantize_all(&self.sh_map),
            scale_codes: params.scale.quantize_all(&self.scale_map),
            params,
        }
    }
}

impl QuantizedMaps {
    pub fn dequantize(&self) -> Result<DisplacementMaps> {
        DisplacementMaps::from_parts(
            self.resolution,
            self.sh_degree,
            self.sh_codes.iter().map(|&c| self.params.sh.dequantize(c)).collect(),
            self.scale_codes.iter().map(|&c| self.params.scale.dequantize(c)).collect(),
        )
    }
}

/// Quantizes both textures to 8 bits and returns the dequantized maps
/// together with the parameters used.
pub fn quantize_maps(maps: &DisplacementMaps) -> Result<(DisplacementMaps, QuantizationParams)> {
    let q = maps.quantize()?;
    Ok((q.dequantize()?, q.params))
}
