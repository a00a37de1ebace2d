//! Geometric-primitive level set families. Primitives are evaluated at
//! nodal coordinates to produce a `LevelSetField`; downstream treatment is
//! identical to nodal designs.

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// A level set function built from closed-form shape families.
#[derive(Debug, Clone)]
pub enum Primitive {
    /// Circle of radius `r` around `center`; negative inside.
    Circle { center: [f64; 2], r: f64 },
    /// Snap-fit tab outer profile controlled by `s1..s5`: tip location,
    /// peak and base width locations, peak and base heights. Positive
    /// inside the tab.
    SnapFitProfile { s: [f64; 5] },
    /// Elliptical conical field, `((dx/rx)^2 + (dy/ry)^2)^2 - 1`.
    EllipseConic { center: [f64; 2], rx: f64, ry: f64 },
    /// Circle with sinusoidally varying radius; `n` ridges, amplitude `a`,
    /// phase `psi`, coordinates scaled by `l1`. Positive inside (matches
    /// its use as a phase boundary with material on the positive side).
    SineRadiusCircle {
        r: f64,
        a: f64,
        n: u32,
        psi: f64,
        center: [f64; 2],
        l1: f64,
    },
    /// One void petal at angular position `psi_v`, reaching radially from
    /// base `h_b` to `h_b + h_v`, width `w_v`, side sway `a_v`; `n_p` is
    /// the total petal count entering the width taper. Negative inside.
    Petal {
        psi_v: f64,
        h_b: f64,
        h_v: f64,
        a_v: f64,
        w_v: f64,
        n_p: u32,
        center: [f64; 2],
        l1: f64,
    },
    /// Pointwise minimum of sub-fields (union of their interiors).
    MinOf(Vec<Primitive>),
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        match self {
            Primitive::Circle { r, .. } if *r <= 0.0 => {
                Err(Error::config("circle radius must be positive"))
            }
            Primitive::SnapFitProfile { s } => {
                if s[1] <= 0.0 || s[2] <= 0.0 || s[3] <= 0.0 || s[4] <= 0.0 {
                    return Err(Error::config("snap-fit profile lengths must be positive"));
                }
                Ok(())
            }
            Primitive::EllipseConic { rx, ry, .. } if *rx <= 0.0 || *ry <= 0.0 => {
                Err(Error::config("ellipse radii must be positive"))
            }
            Primitive::SineRadiusCircle { r, n, l1, .. } => {
                if *r <= 0.0 || *l1 <= 0.0 {
                    return Err(Error::config("sine-radius circle scales must be positive"));
                }
                if *n == 0 {
                    return Err(Error::config("ridge count must be a positive integer"));
                }
                Ok(())
            }
            Primitive::Petal { h_b, h_v, w_v, n_p, l1, .. } => {
                if *h_b <= 0.0 || *h_v <= 0.0 || *w_v <= 0.0 || *l1 <= 0.0 {
                    return Err(Error::config("petal dimensions must be positive"));
                }
                if *n_p < 2 {
                    return Err(Error::config("petal count must be at least 2"));
                }
                Ok(())
            }
            Primitive::MinOf(ps) => {
                if ps.is_empty() {
                    return Err(Error::config("empty min composition"));
                }
                ps.iter().try_for_each(|p| p.validate())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            Primitive::Circle { center, r } => {
                ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt() - r
            }
            Primitive::SnapFitProfile { s } => {
                let (s1, s2, s3, s4, s5) = (s[0], s[1], s[2], s[3], s[4]);
                let p = (s4 + s5) * (s2 + s3) / (4.0 * s2 + 2.0 * s3);
                let a = 0.5 * s4 - p * s2 / (s2 + s3);
                let xt = (x[0] - s1) / (s2 + s3);
                let ta = std::f64::consts::PI * (2.0 * s2 - s3)
                    / (2.0 * s2 * s3 * (s2 + s3));
                let tb = std::f64::consts::PI
                    * ((s1 + s2 + s3).powi(2) - 3.0 * (s1 + s2).powi(2) + 2.0 * s1 * s1)
                    / (s2 * s3 * (2.0 * s2 + 2.0 * s3));
                let tc = -std::f64::consts::PI * s1
                    * (-2.0 * s2 * s2 + 2.0 * s2 * s3 - 2.0 * s1 * s2
                        + s3 * s3
                        + s1 * s3)
                    / (s2 * s3 * (2.0 * s2 + 2.0 * s3));
                let theta = ta * x[0] * x[0] + tb * x[0] + tc;
                -x[1].abs() + a * theta.sin() + p * xt
            }
            Primitive::EllipseConic { center, rx, ry } => {
                let u = (x[0] - center[0]) / rx;
                let v = (x[1] - center[1]) / ry;
                (u * u + v * v).powi(2) - 1.0
            }
            Primitive::SineRadiusCircle { r, a, n, psi, center, l1 } => {
                let dx = (x[0] - center[0]) / l1;
                let dy = (x[1] - center[1]) / l1;
                let rho = (dx * dx + dy * dy).sqrt();
                let theta = dy.atan2(dx);
                r - (rho - a * (*n as f64 * theta + psi).sin()).abs()
            }
            Primitive::Petal { psi_v, h_b, h_v, a_v, w_v, n_p, center, l1 } => {
                let dx = (x[0] - center[0]) / l1;
                let dy = (x[1] - center[1]) / l1;
                let (c, s) = (psi_v.cos(), psi_v.sin());
                let xr = dx * c - dy * s;
                let yr = dx * s + dy * c;
                let wt = (w_v + std::f64::consts::PI * (yr - h_b) / (*n_p as f64 - 1.0))
                    .max(1e-3 * w_v);
                let sway = a_v * wt
                    * (3.0 * std::f64::consts::PI * (yr - h_b) / (2.0 * h_v)).sin();
                let xv = xr - sway;
                let yv = yr - h_b;
                -h_b
                    + ((2.0 * xv * h_b / wt).powi(10) + (yv * h_b / h_v).powi(10))
                        .powf(0.1)
            }
            Primitive::MinOf(ps) => {
                ps.iter().map(|p| p.eval(x)).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Sample onto mesh nodes, scaled by `sign` (use -1.0 to flip which
    /// side is negative).
    pub fn sample(&self, mesh: &Mesh, sign: f64) -> Vec<f64> {
        mesh.coords().iter().map(|&x| sign * self.eval(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ellipse_center_and_boundary() {
        let e = Primitive::EllipseConic { center: [0.3, -0.2], rx: 0.4, ry: 0.4 };
        assert_relative_eq!(e.eval([0.3, -0.2]), -1.0, max_relative = 1e-15);
        assert!(e.eval([0.3 + 0.4, -0.2]).abs() < 1e-14);
        assert!(e.eval([0.3, -0.2 + 0.4]).abs() < 1e-14);
        // anisotropic boundary point
        let e2 = Primitive::EllipseConic { center: [0.0, 0.0], rx: 0.2, ry: 0.05 };
        assert!(e2.eval([0.0, 0.05]).abs() < 1e-14);
    }

    #[test]
    fn sine_radius_zero_amplitude_is_circle() {
        let p = Primitive::SineRadiusCircle {
            r: 0.271,
            a: 0.0,
            n: 4,
            psi: 0.3,
            center: [0.5, 0.5],
            l1: 1.0,
        };
        for k in 0..32 {
            let th = k as f64 * std::f64::consts::TAU / 32.0;
            let x = [0.5 + 0.271 * th.cos(), 0.5 + 0.271 * th.sin()];
            assert!(p.eval(x).abs() < 1e-13);
        }
        assert!(p.eval([0.5, 0.5]) > 0.0);
        assert!(p.eval([0.5 + 0.4, 0.5]) < 0.0);
    }

    #[test]
    fn sine_radius_ridge_count() {
        // with a > 0 the radial distance to the zero contour oscillates n
        // times per revolution
        let p = Primitive::SineRadiusCircle {
            r: 0.25,
            a: 0.04,
            n: 4,
            psi: 0.0,
            center: [0.0, 0.0],
            l1: 1.0,
        };
        let radius_at = |th: f64| {
            // bisect phi(rho) = 0 along the ray
            let (mut lo, mut hi) = (0.05, 0.6);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let v = p.eval([mid * th.cos(), mid * th.sin()]);
                if v > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        for k in 0..8 {
            let th = k as f64 * std::f64::consts::TAU / 8.0;
            let expect = 0.25 + 0.04 * (4.0 * th).sin();
            assert_relative_eq!(radius_at(th), expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn min_composition_bounds_components() {
        let a = Primitive::Circle { center: [0.0, 0.0], r: 0.2 };
        let b = Primitive::Circle { center: [0.5, 0.0], r: 0.3 };
        let m = Primitive::MinOf(vec![a.clone(), b.clone()]);
        for x in [[0.1, 0.1], [0.4, -0.2], [0.25, 0.0], [-0.3, 0.5]] {
            let v = m.eval(x);
            assert!(v <= a.eval(x) + 1e-15);
            assert!(v <= b.eval(x) + 1e-15);
            assert_relative_eq!(v, a.eval(x).min(b.eval(x)), max_relative = 1e-15);
        }
    }

    #[test]
    fn snap_fit_profile_landmarks() {
        // defaults: tip at x = s1 on the axis, peak half-height s4/2 where
        // theta = pi/2, base half-height s5/2 at x = s1 + s2 + s3
        let s = [0.151, 0.4, 0.9, 0.2451, 0.16];
        let p = Primitive::SnapFitProfile { s };
        assert!(p.eval([s[0], 0.0]).abs() < 1e-12, "tip not on contour");
        let x_peak = s[0] + s[1];
        assert!(
            p.eval([x_peak, 0.5 * s[3]]).abs() < 1e-12,
            "peak half-height off contour: {}",
            p.eval([x_peak, 0.5 * s[3]])
        );
        let x_base = s[0] + s[1] + s[2];
        assert!(
            p.eval([x_base, 0.5 * s[4]]).abs() < 1e-12,
            "base half-height off contour: {}",
            p.eval([x_base, 0.5 * s[4]])
        );
        // inside the tab is negative, far above is positive
        assert!(p.eval([x_peak, 0.0]) > 0.0 || p.eval([x_peak, 0.0]).abs() < 1e-12);
        assert!(p.eval([x_peak, 1.0]) < 0.0);
    }

    #[test]
    fn petal_base_width() {
        // at the petal base radius the cross-section half-width is w_v / 2
        let p = Primitive::Petal {
            psi_v: 0.0,
            h_b: 0.15,
            h_v: 0.04,
            a_v: 0.0,
            w_v: 0.1,
            n_p: 6,
            center: [0.0, 0.0],
            l1: 1.0,
        };
        // rotated frame with psi_v = 0: petal sits along +y at radius h_b
        assert!(p.eval([0.05, 0.15]).abs() < 1e-10);
        assert!(p.eval([0.0, 0.15]) < 0.0);
        assert!(p.eval([0.2, 0.15]) > 0.0);
        // radial extent h_v beyond the base
        assert!(p.eval([0.0, 0.15 + 0.04]).abs() < 1e-10);
        assert!(p.eval([0.0, 0.15 + 0.1]) > 0.0);
    }

    #[test]
    fn validation_rejects_bad_params() {
        assert!(Primitive::Circle { center: [0.0, 0.0], r: -1.0 }.validate().is_err());
        assert!(Primitive::EllipseConic { center: [0.0, 0.0], rx: 0.0, ry: 0.1 }
            .validate()
            .is_err());
        assert!(Primitive::SineRadiusCircle {
            r: 0.2,
            a: 0.0,
            n: 0,
            psi: 0.0,
            center: [0.0, 0.0],
            l1: 1.0
        }
        .validate()
        .is_err());
        assert!(Primitive::MinOf(vec![]).validate().is_err());
    }
}
