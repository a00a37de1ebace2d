//! Compressible neo-Hookean law under plane strain. The 3D tensors are
//! evaluated with the deformation gradient padded by F33 = 1; the 2x2
//! in-plane blocks drive equilibrium, S33 is kept for stress output.

use crate::error::{Error, Result};

/// Hyperelastic material constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub e: f64,
    pub nu: f64,
    pub lambda: f64,
    pub mu: f64,
}

pub fn lame_from_engineering(e: f64, nu: f64) -> Result<Material> {
    if e <= 0.0 {
        return Err(Error::config("Young's modulus must be positive"));
    }
    if !(0.0..0.5).contains(&nu) {
        return Err(Error::config(
            "Poisson ratio must lie in [0, 0.5); incompressibility unsupported",
        ));
    }
    Ok(Material {
        e,
        nu,
        lambda: e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
        mu: e / (2.0 * (1.0 + nu)),
    })
}

/// Kinematic quantities at a material point.
#[derive(Debug, Clone, Copy)]
pub struct Kinematics {
    pub f: [[f64; 2]; 2],
    pub c: [[f64; 2]; 2],
    pub c_inv: [[f64; 2]; 2],
    pub j: f64,
    pub ln_j: f64,
}

impl Kinematics {
    pub fn new(f: [[f64; 2]; 2]) -> Result<Self> {
        let j = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        if j <= 0.0 {
            return Err(Error::ElementInversion { elem: usize::MAX, det_f: j });
        }
        let c = [
            [
                f[0][0] * f[0][0] + f[1][0] * f[1][0],
                f[0][0] * f[0][1] + f[1][0] * f[1][1],
            ],
            [
                f[0][1] * f[0][0] + f[1][1] * f[1][0],
                f[0][1] * f[0][1] + f[1][1] * f[1][1],
            ],
        ];
        let det_c = j * j;
        let c_inv = [
            [c[1][1] / det_c, -c[0][1] / det_c],
            [-c[1][0] / det_c, c[0][0] / det_c],
        ];
        Ok(Kinematics { f, c, c_inv, j, ln_j: j.ln() })
    }
}

/// Second Piola-Kirchhoff stress, in-plane block.
pub fn pk2_stress(kin: &Kinematics, mat: &Material) -> [[f64; 2]; 2] {
    let mut s = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let id = if i == j { 1.0 } else { 0.0 };
            s[i][j] = mat.lambda * kin.ln_j * kin.c_inv[i][j] + mat.mu * (id - kin.c_inv[i][j]);
        }
    }
    s
}

/// Out-of-plane stress component under plane strain (C33 = 1).
pub fn pk2_s33(kin: &Kinematics, mat: &Material) -> f64 {
    mat.lambda * kin.ln_j
}

/// Material tangent `C_IJKL = dS_IJ/dE_KL` (E the Green strain), with both
/// minor symmetries.
pub fn pk2_tangent(kin: &Kinematics, mat: &Material) -> [[[[f64; 2]; 2]; 2]; 2] {
    let ci = &kin.c_inv;
    let coef = mat.mu - mat.lambda * kin.ln_j;
    let mut c = [[[[0.0; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    c[i][j][k][l] = mat.lambda * ci[i][j] * ci[k][l]
                        + coef * (ci[i][k] * ci[j][l] + ci[i][l] * ci[j][k]);
                }
            }
        }
    }
    c
}
