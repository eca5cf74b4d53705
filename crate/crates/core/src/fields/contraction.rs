use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Every contracted point lies strictly inside a ball of this radius.
pub const CONTRACTED_RADIUS: f64 = 2.0;

/// Spherical contraction: identity on the unit ball, `(2 - 1/|p|) p/|p|`
/// outside it.
pub fn contract(p: Vec3) -> Result<Vec3> {
    if !p.is_finite() {
        return Err(Error::NonFinite("contract input"));
    }
    let r = p.norm();
    if r <= 1.0 {
        Ok(p)
    } else {
        Ok(p * ((2.0 - 1.0 / r) / r))
    }
}

/// Inverse of [`contract`] for points with norm below 2.
pub fn uncontract(q: Vec3) -> Result<Vec3> {
    if !q.is_finite() {
        return Err(Error::NonFinite("uncontract input"));
    }
    let r = q.norm();
    if r <= 1.0 {
        Ok(q)
    } else if r < CONTRACTED_RADIUS {
        let world_r = 1.0 / (2.0 - r);
        Ok(q * (world_r / r))
    } else {
        Err(Error::OutOfDomain { norm: r })
    }
}

/// Jacobian `d contract(p) / d p`, row-major.
pub fn contract_jacobian(p: Vec3) -> Mat3 {
    let r = p.norm();
    if r <= 1.0 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    // f(p) = s(r) p with s = 2/r - 1/r^2.
    let s = 2.0 / r - 1.0 / (r * r);
    let ds_over_r = (-2.0 / (r * r) + 2.0 / (r * r * r)) / r;
    let pa = p.to_array();
    let mut j = [[0.0; 3]; 3];
    for (i, row) in j.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = pa[i] * pa[k] * ds_over_r + if i == k { s } else { 0.0 };
        }
    }
    j
}
