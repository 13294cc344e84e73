//! Exact scallop height between two ball-end passes on a circular section.

use crate::error::{Error, Result};

/// Second-order estimate `w² (1/r + 1/R) / 8`. `R` is signed: positive for
/// convex, negative for concave, infinite for flat.
pub fn approx_scallop_height(design_radius: f64, cutter_radius: f64, side_step: f64) -> f64 {
    let inv_r = if design_radius.is_infinite() { 0.0 } else { 1.0 / design_radius };
    side_step * side_step * (1.0 / cutter_radius + inv_r) / 8.0
}

/// Height of the cusp left between two cutter circles of radius `r` touching
/// a circle of signed radius `R` at contact points a chord `w` apart.
pub fn exact_scallop_2d(design_radius: f64, cutter_radius: f64, side_step: f64) -> Result<f64> {
    let (rr, r, w) = (design_radius, cutter_radius, side_step);
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("cutter radius must be positive, got {r}")));
    }
    if !(w > 0.0) || w >= 2.0 * r {
        return Err(Error::InvalidParameter(format!("side step must lie in (0, 2r), got {w}")));
    }
    if rr.is_nan() || rr == 0.0 {
        return Err(Error::InvalidParameter("design radius must be non-zero".into()));
    }
    if rr.is_infinite() {
        return Ok(r - (r * r - w * w / 4.0).sqrt());
    }
    let big = rr.abs();
    if w > 2.0 * big {
        return Err(Error::InvalidParameter(format!("chord {w} exceeds the design circle diameter")));
    }
    let sin = w / (2.0 * big);
    let cos = (1.0 - sin * sin).sqrt();
    if rr > 0.0 {
        let c = big + r;
        let disc = r * r - c * c * sin * sin;
        if disc < 0.0 {
            return Err(Error::InvalidParameter("cutter circles do not meet".into()));
        }
        Ok(c * cos - disc.sqrt() - big)
    } else {
        if big <= r {
            return Err(Error::InvalidParameter(format!(
                "concave radius {big} must exceed the cutter radius {r}"
            )));
        }
        let c = big - r;
        let disc = r * r - c * c * sin * sin;
        if disc < 0.0 {
            return Err(Error::InvalidParameter("cutter circles do not meet".into()));
        }
        Ok(big - (c * cos + disc.sqrt()))
    }
}
