//! Large-sliding frictionless contact: coincident reference surfaces,
//! deformed-configuration projection, and the stabilized Lagrange
//! multiplier residual with segment-to-segment integration.

mod assemble;
mod projection;
mod surfaces;

pub use assemble::{ContactDiagnostics, ContactSystem, PairDiagnostics, StsPair};
pub use projection::{inverse_project, project_onto, SegmentHash};
pub use surfaces::{extract_surfaces, DeformedSurface, SurfaceSegment};

use crate::error::{Error, Result};

/// Nanson surface area ratio `j = det(F) |F^-T n0|`.
pub fn surface_jacobian(f: [[f64; 2]; 2], n0: [f64; 2]) -> f64 {
    let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
    // F^-T n0 = (1/det) [[f11, -f10], [-f01, f00]] n0
    let w0 = (f[1][1] * n0[0] - f[1][0] * n0[1]) / det;
    let w1 = (-f[0][1] * n0[0] + f[0][0] * n0[1]) / det;
    det * (w0 * w0 + w1 * w1).sqrt()
}

/// Averaging weights for the stabilization traction, biased toward the
/// stiffer/larger side.
pub fn contact_weights(vol_a: f64, vol_b: f64, e_a: f64, e_b: f64) -> Result<(f64, f64)> {
    if vol_a <= 0.0 && vol_b <= 0.0 {
        return Err(Error::config("contact weights need a nonzero phase volume"));
    }
    let (wa, wb) = (vol_a / e_a, vol_b / e_b);
    let ka = wa / (wa + wb);
    Ok((ka, 1.0 - ka))
}

/// Penalty-like stabilization factor `gamma = (E_A + E_B)/h`.
pub fn penalty_factor(e_a: f64, e_b: f64, h: f64) -> f64 {
    (e_a + e_b) / h
}
