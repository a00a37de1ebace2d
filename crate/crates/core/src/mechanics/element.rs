//! Element-level internal force and consistent tangent, integrated over
//! the phase subcells of one element.

use super::neo_hookean::{pk2_stress, pk2_tangent, Kinematics, Material};
use crate::error::{Error, Result};
use crate::geometry::Phase;
use crate::mesh::Mesh;
use crate::xfem::{QPoint, XfemModel};

/// Residual and tangent block for one (element, local region) pair with
/// its 8 gathered DOFs.
#[derive(Debug, Clone)]
pub struct ElemBlock {
    pub dofs: [usize; 8],
    pub r: [f64; 8],
    pub k: [[f64; 8]; 8],
}

fn def_grad(mesh: &Mesh, e: usize, x: [f64; 2], u: &[f64; 8]) -> [[f64; 2]; 2] {
    let g = mesh.shape_grad(e, x);
    let mut f = [[1.0, 0.0], [0.0, 1.0]];
    for k in 0..4 {
        for i in 0..2 {
            for j in 0..2 {
                f[i][j] += u[2 * k + i] * g[k][j];
            }
        }
    }
    f
}

/// Integrate the internal-force residual and consistent tangent of one
/// element. Returns one block per solid local region; `materials` maps
/// phase index to material. `body_force` is per unit reference area.
pub fn element_residual_tangent(
    model: &XfemModel,
    e: usize,
    state: &[f64],
    materials: &[Material; 2],
    body_force: [f64; 2],
) -> Result<Vec<ElemBlock>> {
    let mesh = &model.mesh;
    let pts: &[QPoint] = &model.quad.elems[e];
    if pts.is_empty() {
        return Ok(Vec::new());
    }
    let n_regions = model.enr.elem_regions[e].len();
    let mut blocks: Vec<Option<ElemBlock>> = vec![None; n_regions];
    for q in pts {
        debug_assert_ne!(q.phase, Phase::Void);
        let mat = &materials[q.phase.idx()];
        let block = blocks[q.region].get_or_insert_with(|| ElemBlock {
            dofs: model.dofs.elem_dofs(e, q.region).expect("solid region"),
            r: [0.0; 8],
            k: [[0.0; 8]; 8],
        });
        let mut u = [0.0; 8];
        for (i, &d) in block.dofs.iter().enumerate() {
            u[i] = state[d];
        }
        let f = def_grad(mesh, e, q.x, &u);
        let kin = Kinematics::new(f).map_err(|err| match err {
            Error::ElementInversion { det_f, .. } => Error::ElementInversion { elem: e, det_f },
            other => other,
        })?;
        let s = pk2_stress(&kin, mat);
        let c4 = pk2_tangent(&kin, mat);
        let grad = mesh.shape_grad(e, q.x);
        let shp = mesh.shape(e, q.x);

        // first Piola-Kirchhoff P = F S
        let mut p = [[0.0; 2]; 2];
        for i in 0..2 {
            for jj in 0..2 {
                for m in 0..2 {
                    p[i][jj] += f[i][m] * s[m][jj];
                }
            }
        }
        for k in 0..4 {
            for i in 0..2 {
                let mut v = 0.0;
                for jj in 0..2 {
                    v += grad[k][jj] * p[i][jj];
                }
                block.r[2 * k + i] += q.w * (v - shp[k] * body_force[i]);
            }
        }

        // first elasticity tensor A_iJkL = delta_ik S_JL + F_iM C_MJNL F_kN
        let mut a = [[[[0.0; 2]; 2]; 2]; 2];
        for i in 0..2 {
            for jj in 0..2 {
                for kk in 0..2 {
                    for ll in 0..2 {
                        let mut v = if i == kk { s[jj][ll] } else { 0.0 };
                        for m in 0..2 {
                            for nn in 0..2 {
                                v += f[i][m] * c4[m][jj][nn][ll] * f[kk][nn];
                            }
                        }
                        a[i][jj][kk][ll] = v;
                    }
                }
            }
        }
        for kn in 0..4 {
            for i in 0..2 {
                for ln in 0..4 {
                    for kk in 0..2 {
                        let mut v = 0.0;
                        for jj in 0..2 {
                            for ll in 0..2 {
                                v += grad[kn][jj] * a[i][jj][kk][ll] * grad[ln][ll];
                            }
                        }
                        block.k[2 * kn + i][2 * ln + kk] += q.w * v;
                    }
                }
            }
        }
    }
    Ok(blocks.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{classify_phases, LevelSetField};
    use crate::mechanics::lame_from_engineering;
    use approx::assert_relative_eq;

    fn one_phase_model(n: usize) -> XfemModel {
        let m = Mesh::unit_square(n);
        let mut f1 = LevelSetField::new(vec![-1.0; m.n_nodes()]);
        f1.snap(m.h);
        let pm = classify_phases(&m, &f1, None).unwrap();
        XfemModel::build(&m, pm, &f1.phi, None).unwrap()
    }

    fn mats() -> [Material; 2] {
        let m = lame_from_engineering(10e6, 0.3).unwrap();
        [m, m]
    }

    #[test]
    fn zero_state_zero_residual() {
        let model = one_phase_model(2);
        let state = vec![0.0; model.dofs.n_dofs];
        for e in 0..model.mesh.n_elems() {
            let blocks =
                element_residual_tangent(&model, e, &state, &mats(), [0.0; 2]).unwrap();
            for b in blocks {
                for v in b.r {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    /// Analytic plane-strain Quad-4 stiffness of a square element with
    /// full 2x2 Gauss integration, for the small-strain limit check.
    fn linear_elastic_ke(h: f64, mat: &Material) -> [[f64; 8]; 8] {
        let d = [
            [mat.lambda + 2.0 * mat.mu, mat.lambda, 0.0],
            [mat.lambda, mat.lambda + 2.0 * mat.mu, 0.0],
            [0.0, 0.0, mat.mu],
        ];
        let gauss = [0.211_324_865_405_187_12, 0.788_675_134_594_812_9];
        let mut ke = [[0.0; 8]; 8];
        for &gx in &gauss {
            for &gy in &gauss {
                let (xi, eta) = (gx, gy);
                let ih = 1.0 / h;
                let grad = [
                    [-(1.0 - eta) * ih, -(1.0 - xi) * ih],
                    [(1.0 - eta) * ih, -xi * ih],
                    [eta * ih, xi * ih],
                    [-eta * ih, (1.0 - xi) * ih],
                ];
                let w = 0.25 * h * h;
                let mut b = [[0.0; 8]; 3];
                for k in 0..4 {
                    b[0][2 * k] = grad[k][0];
                    b[1][2 * k + 1] = grad[k][1];
                    b[2][2 * k] = grad[k][1];
                    b[2][2 * k + 1] = grad[k][0];
                }
                for i in 0..8 {
                    for j in 0..8 {
                        let mut v = 0.0;
                        for a in 0..3 {
                            for c in 0..3 {
                                v += b[a][i] * d[a][c] * b[c][j];
                            }
                        }
                        ke[i][j] += w * v;
                    }
                }
            }
        }
        ke
    }

    #[test]
    fn zero_state_tangent_is_linear_elastic() {
        let model = one_phase_model(3);
        let state = vec![0.0; model.dofs.n_dofs];
        let blocks = element_residual_tangent(&model, 4, &state, &mats(), [0.0; 2]).unwrap();
        assert_eq!(blocks.len(), 1);
        let ke = linear_elastic_ke(model.mesh.h, &mats()[0]);
        for i in 0..8 {
            for j in 0..8 {
                assert_relative_eq!(
                    blocks[0].k[i][j],
                    ke[i][j],
                    epsilon = 1e-8 * mats()[0].e
                );
            }
        }
    }

    #[test]
    fn tangent_matches_fd_and_is_symmetric() {
        let model = one_phase_model(2);
        let mut state = vec![0.0; model.dofs.n_dofs];
        for (i, s) in state.iter_mut().enumerate() {
            *s = 0.02 * ((i as f64 * 1.3).sin() + 0.5 * (i as f64 * 0.7).cos());
        }
        let e = 1;
        let blocks = element_residual_tangent(&model, e, &state, &mats(), [0.0; 2]).unwrap();
        let b = &blocks[0];
        for i in 0..8 {
            for j in 0..8 {
                assert_relative_eq!(b.k[i][j], b.k[j][i], max_relative = 1e-10);
            }
        }
        let d = 1e-7;
        for (jl, &dj) in b.dofs.iter().enumerate() {
            let mut sp = state.clone();
            let mut sm = state.clone();
            sp[dj] += d;
            sm[dj] -= d;
            let rp = element_residual_tangent(&model, e, &sp, &mats(), [0.0; 2]).unwrap();
            let rm = element_residual_tangent(&model, e, &sm, &mats(), [0.0; 2]).unwrap();
            for i in 0..8 {
                let fd = (rp[0].r[i] - rm[0].r[i]) / (2.0 * d);
                assert_relative_eq!(
                    b.k[i][jl],
                    fd,
                    max_relative = 1e-5,
                    epsilon = 1e-5 * mats()[0].e * model.mesh.h
                );
            }
        }
    }

    #[test]
    fn body_force_consistent_loads() {
        // constant body force over a single uncut element: each node gets
        // b * h^2 / 4
        let model = one_phase_model(1);
        let state = vec![0.0; model.dofs.n_dofs];
        let b0 = [3.0, -2.0];
        let blocks = element_residual_tangent(&model, 0, &state, &mats(), b0).unwrap();
        for k in 0..4 {
            assert_relative_eq!(blocks[0].r[2 * k], -b0[0] * 0.25, max_relative = 1e-13);
            assert_relative_eq!(blocks[0].r[2 * k + 1], -b0[1] * 0.25, max_relative = 1e-13);
        }
    }

    #[test]
    fn inversion_reports_element() {
        let model = one_phase_model(1);
        let mut state = vec![0.0; model.dofs.n_dofs];
        // collapse the element: move the right edge (nodes 1 and 3) past
        // the left edge
        state[2] = -1.5;
        state[6] = -1.5;
        let err = element_residual_tangent(&model, 0, &state, &mats(), [0.0; 2]);
        assert!(matches!(err, Err(Error::ElementInversion { elem: 0, .. })));
    }
}
