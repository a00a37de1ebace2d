//! Deformed-configuration closest-point coupling: forward projection
//! along the master normal onto a slave segment, inverse projection of a
//! point back to master parametric coordinates, and the spatial-hash
//! broad phase over deformed slave segments.

use super::surfaces::{DeformedSurface, SurfaceSegment};

/// Solve `x_B(beta) = x_m + g n_m` on one slave segment by 2x2 Newton.
/// Returns `(beta, g)`; `beta` may land outside [0, 1] (the caller
/// decides admissibility).
pub fn project_onto(
    surf: &DeformedSurface,
    slave: &SurfaceSegment,
    x_m: [f64; 2],
    n_m: [f64; 2],
    h: f64,
) -> Option<(f64, f64)> {
    let mut beta = 0.5;
    let mut g = 0.0;
    for _ in 0..60 {
        let p = surf.eval(slave, beta);
        let r = [
            p.x[0] - x_m[0] - g * n_m[0],
            p.x[1] - x_m[1] - g * n_m[1],
        ];
        let rn = (r[0] * r[0] + r[1] * r[1]).sqrt();
        if rn < 1e-13 * h {
            return Some((beta, g));
        }
        // J = [dx_B/dbeta, -n_m]
        let det = p.dx[0] * (-n_m[1]) - (-n_m[0]) * p.dx[1];
        if det.abs() < 1e-30 {
            return None;
        }
        let db = (r[0] * (-n_m[1]) - (-n_m[0]) * r[1]) / det;
        let dg = (p.dx[0] * r[1] - r[0] * p.dx[1]) / det;
        beta -= db;
        g -= dg;
        if !beta.is_finite() || beta.abs() > 50.0 {
            return None;
        }
    }
    None
}

/// Find `alpha` on the master segment whose normal ray passes through
/// `target`: `t(alpha) . (target - x_A(alpha)) = 0`.
pub fn inverse_project(
    surf: &DeformedSurface,
    master: &SurfaceSegment,
    target: [f64; 2],
    h: f64,
) -> Option<f64> {
    let mut alpha = 0.5;
    for _ in 0..60 {
        let p = surf.eval(master, alpha);
        let d = [target[0] - p.x[0], target[1] - p.x[1]];
        let f = p.dx[0] * d[0] + p.dx[1] * d[1];
        // second derivative of x wrt xi via central difference of dx
        let da = 1e-6;
        let (pp, pm) = (surf.eval(master, alpha + da), surf.eval(master, alpha - da));
        let ddx = [(pp.dx[0] - pm.dx[0]) / (2.0 * da), (pp.dx[1] - pm.dx[1]) / (2.0 * da)];
        let fp = ddx[0] * d[0] + ddx[1] * d[1] - (p.dx[0] * p.dx[0] + p.dx[1] * p.dx[1]);
        if fp.abs() < 1e-30 {
            return None;
        }
        let step = f / fp;
        alpha -= step;
        if !alpha.is_finite() || alpha.abs() > 50.0 {
            return None;
        }
        if step.abs() < 1e-13 * (1.0 + alpha.abs()) || f.abs() < 1e-16 * h {
            return Some(alpha);
        }
    }
    None
}

/// Uniform-grid hash of deformed segment bounding boxes.
pub struct SegmentHash {
    cell: f64,
    map: std::collections::HashMap<(i64, i64), Vec<usize>>,
}

impl SegmentHash {
    pub fn build(boxes: &[[f64; 4]], cell: f64) -> Self {
        let mut map: std::collections::HashMap<(i64, i64), Vec<usize>> = Default::default();
        for (i, b) in boxes.iter().enumerate() {
            let (i0, i1) = ((b[0] / cell).floor() as i64, (b[2] / cell).floor() as i64);
            let (j0, j1) = ((b[1] / cell).floor() as i64, (b[3] / cell).floor() as i64);
            for ci in i0..=i1 {
                for cj in j0..=j1 {
                    map.entry((ci, cj)).or_default().push(i);
                }
            }
        }
        SegmentHash { cell, map }
    }

    /// Candidate segment ids whose boxes may overlap the query box,
    /// sorted and deduplicated for determinism.
    pub fn query(&self, b: [f64; 4]) -> Vec<usize> {
        let (i0, i1) = ((b[0] / self.cell).floor() as i64, (b[2] / self.cell).floor() as i64);
        let (j0, j1) = ((b[1] / self.cell).floor() as i64, (b[3] / self.cell).floor() as i64);
        let mut out = Vec::new();
        for ci in i0..=i1 {
            for cj in j0..=j1 {
                if let Some(v) = self.map.get(&(ci, cj)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::extract_surfaces;
    use crate::geometry::{classify_phases, LevelSetField, Phase};
    use crate::mesh::Mesh;
    use crate::xfem::XfemModel;
    use approx::assert_relative_eq;

    fn flat_model(n: usize) -> XfemModel {
        let m = Mesh::unit_square(n);
        let phi: Vec<f64> = m.coords().iter().map(|x| x[1] - 0.52).collect();
        let mut f1 = LevelSetField::new(phi);
        f1.snap(m.h);
        let pm = classify_phases(&m, &f1, None).unwrap();
        XfemModel::build(&m, pm, &f1.phi, None).unwrap()
    }

    fn set_phase_field(
        model: &XfemModel,
        state: &mut [f64],
        phase: Phase,
        f: impl Fn([f64; 2]) -> [f64; 2],
    ) {
        for n in 0..model.mesh.n_nodes() {
            let x = model.mesh.coord(n);
            let u = f(x);
            for lv in 0..model.enr.node_levels[n][phase.idx()].len() {
                state[model.dofs.dof(n, phase, lv, 0)] = u[0];
                state[model.dofs.dof(n, phase, lv, 1)] = u[1];
            }
        }
    }

    #[test]
    fn rigid_offset_gives_gap_d() {
        let model = flat_model(4);
        let (ma, sl) = extract_surfaces(&model).unwrap();
        let mut state = vec![0.0; model.dofs.n_dofs];
        // lift B (above the interface) by d
        let d = 0.07;
        set_phase_field(&model, &mut state, Phase::B, |_| [0.0, d]);
        let surf = DeformedSurface::new(&model, &state);
        let mp = surf.eval(&ma[1], 0.4);
        let (beta, g) = project_onto(&surf, &sl[1], mp.x, mp.n, model.mesh.h).unwrap();
        assert_relative_eq!(g, d, max_relative = 1e-10);
        assert_relative_eq!(beta, 0.4, max_relative = 1e-9);
    }

    #[test]
    fn coincident_surfaces_zero_gap() {
        let model = flat_model(4);
        let (ma, sl) = extract_surfaces(&model).unwrap();
        let state = vec![0.0; model.dofs.n_dofs];
        let surf = DeformedSurface::new(&model, &state);
        for (a, b) in ma.iter().zip(&sl) {
            for xi in [0.1, 0.5, 0.9] {
                let mp = surf.eval(a, xi);
                let (beta, g) = project_onto(&surf, b, mp.x, mp.n, model.mesh.h).unwrap();
                assert!(g.abs() < 1e-12);
                assert_relative_eq!(beta, xi, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn tangential_slide_lands_on_adjacent_segment() {
        // translate A by one segment length along x; the projection from
        // a master midpoint now hits the neighboring slave segment
        let model = flat_model(4);
        let (ma, sl) = extract_surfaces(&model).unwrap();
        let h = model.mesh.h;
        let mut state = vec![0.0; model.dofs.n_dofs];
        set_phase_field(&model, &mut state, Phase::A, |_| [h, 0.0]);
        let surf = DeformedSurface::new(&model, &state);
        // pick a master away from the right boundary
        let (mi, mseg) = ma
            .iter()
            .enumerate()
            .find(|(_, s)| s.x0(0.5)[0] < 1.0 - 1.5 * h)
            .unwrap();
        let mp = surf.eval(mseg, 0.5);
        // brute-force scan for the admissible projection with minimal |g|
        let mut best: Option<(usize, f64, f64)> = None;
        for (si, s) in sl.iter().enumerate() {
            if let Some((beta, g)) = project_onto(&surf, s, mp.x, mp.n, h) {
                if (-1e-9..=1.0 + 1e-9).contains(&beta)
                    && best.map_or(true, |(_, _, bg)| g.abs() < bg.abs())
                {
                    best = Some((si, beta, g));
                }
            }
        }
        let (si, beta, g) = best.unwrap();
        // the hit lands on a different, shifted slave segment: its
        // reference point at beta coincides with the translated master
        assert_ne!(si, mi);
        assert!(g.abs() < 1e-10);
        let hit = sl[si].x0(beta);
        let ref_m = mseg.x0(0.5);
        assert_relative_eq!(hit[0], ref_m[0] + h, epsilon = 1e-9);
        assert_relative_eq!(hit[1], ref_m[1], epsilon = 1e-9);
    }

    #[test]
    fn inverse_projection_recovers_parameter() {
        let model = flat_model(4);
        let (ma, _) = extract_surfaces(&model).unwrap();
        let mut state = vec![0.0; model.dofs.n_dofs];
        set_phase_field(&model, &mut state, Phase::A, |x| {
            [0.04 * x[0] * x[0], 0.02 * x[0]]
        });
        let surf = DeformedSurface::new(&model, &state);
        for alpha in [0.15, 0.6, 0.95] {
            let p = surf.eval(&ma[2], alpha);
            // target on the normal ray
            let target = [p.x[0] + 0.3 * p.n[0], p.x[1] + 0.3 * p.n[1]];
            let a = inverse_project(&surf, &ma[2], target, model.mesh.h).unwrap();
            assert_relative_eq!(a, alpha, epsilon = 1e-9);
        }
    }

    #[test]
    fn hash_finds_overlapping_boxes() {
        let boxes = vec![
            [0.0, 0.0, 0.1, 0.1],
            [0.5, 0.5, 0.6, 0.6],
            [0.05, 0.05, 0.55, 0.55],
        ];
        let h = SegmentHash::build(&boxes, 0.2);
        let c = h.query([0.0, 0.0, 0.12, 0.12]);
        assert!(c.contains(&0));
        assert!(c.contains(&2));
        let c2 = h.query([0.58, 0.58, 0.59, 0.59]);
        assert!(c2.contains(&1));
        assert!(!c2.contains(&0));
    }
}
