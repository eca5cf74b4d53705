use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Highest supported degree (25 basis functions).
pub const MAX_SH_DEGREE: u32 = 4;

pub(crate) const C0: f64 = 0.282_094_791_773_878_14;
pub(crate) const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];
const C4: [f64; 9] = [
    2.503_342_941_796_704_6,
    -1.770_130_769_779_930_4,
    0.946_174_695_757_560_1,
    -0.669_046_543_557_289_2,
    0.105_785_546_915_204_31,
    -0.669_046_543_557_289_2,
    0.473_087_347_878_780_04,
    -1.770_130_769_779_930_4,
    0.625_835_735_449_176_1,
];

/// Real spherical-harmonic basis of a fixed degree, ordered by degree then
/// by order `m = -l..=l`, with the Condon–Shortley phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShBasis {
    degree: u32,
}

impl ShBasis {
    pub fn new(degree: u32) -> Result<Self> {
        if degree > MAX_SH_DEGREE {
            return Err(Error::config(format!(
                "SH degree {degree} exceeds the supported maximum {MAX_SH_DEGREE}"
            )));
        }
        Ok(ShBasis { degree })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// `(degree + 1)^2`
    pub fn basis_count(&self) -> usize {
        let n = self.degree as usize + 1;
        n * n
    }

    /// Writes the basis values for unit direction `d` into `out`, which
    /// must hold [`basis_count`](Self::basis_count) values. No norm check.
    pub fn eval_into(&self, d: Vec3, out: &mut [f64]) {
        let (x, y, z) = (d.x, d.y, d.z);
        out[0] = C0;
        if self.degree < 1 {
            return;
        }
        out[1] = -C1 * y;
        out[2] = C1 * z;
        out[3] = -C1 * x;
        if self.degree < 2 {
            return;
        }
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, yz, xz) = (x * y, y * z, x * z);
        out[4] = C2[0] * xy;
        out[5] = C2[1] * yz;
        out[6] = C2[2] * (2.0 * zz - xx - yy);
        out[7] = C2[3] * xz;
        out[8] = C2[4] * (xx - yy);
        if self.degree < 3 {
            return;
        }
        out[9] = C3[0] * y * (3.0 * xx - yy);
        out[10] = C3[1] * xy * z;
        out[11] = C3[2] * y * (4.0 * zz - xx - yy);
        out[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
        out[13] = C3[4] * x * (4.0 * zz - xx - yy);
        out[14] = C3[5] * z * (xx - yy);
        out[15] = C3[6] * x * (xx - 3.0 * yy);
        if self.degree < 4 {
            return;
        }
        out[16] = C4[0] * xy * (xx - yy);
        out[17] = C4[1] * yz * (3.0 * xx - yy);
        out[18] = C4[2] * xy * (7.0 * zz - 1.0);
        out[19] = C4[3] * yz * (7.0 * zz - 3.0);
        out[20] = C4[4] * (zz * (35.0 * zz - 30.0) + 3.0);
        out[21] = C4[5] * xz * (7.0 * zz - 3.0);
        out[22] = C4[6] * (xx - yy) * (7.0 * zz - 1.0);
        out[23] = C4[7] * xz * (xx - 3.0 * yy);
        out[24] = C4[8] * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy));
    }
}

/// Evaluates the basis at a unit direction.
pub fn sh_eval(basis: &ShBasis, d: Vec3) -> Result<Vec<f64>> {
    check_unit(d)?;
    let mut out = vec![0.0; basis.basis_count()];
    basis.eval_into(d, &mut out);
    Ok(out)
}

pub(crate) fn check_unit(d: Vec3) -> Result<()> {
    let norm = d.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NonUnitDirection { norm });
    }
    Ok(())
}
