//! Face-oriented ghost-penalty stabilization. Stress jumps across element
//! borders adjacent to intersected elements are penalized over the whole
//! facet, once per phase region present on both sides.

use super::neo_hookean::{pk2_stress, pk2_tangent, Kinematics, Material};
use crate::error::{Error, Result};
use crate::geometry::Phase;
use crate::xfem::XfemModel;

/// Penalty scaling; the facet weight is `gamma = epsilon * h`.
#[derive(Debug, Clone, Copy)]
pub struct GhostPenaltySpec {
    pub epsilon: f64,
}

impl Default for GhostPenaltySpec {
    fn default() -> Self {
        GhostPenaltySpec { epsilon: 1e-3 }
    }
}

/// One penalized facet for one global region.
#[derive(Debug, Clone, Copy)]
pub struct GhostFacet {
    pub elems: [usize; 2],
    pub nodes: [usize; 2],
    pub normal: [f64; 2],
    pub region: usize,
    pub phase: Phase,
}

/// Residual/tangent block of one facet over the 16 DOFs of both sides
/// (entries may alias on the shared nodes; accumulate, do not overwrite).
#[derive(Debug, Clone)]
pub struct GhostBlock {
    pub dofs: [usize; 16],
    pub r: [f64; 16],
    pub k: [[f64; 16]; 16],
}

/// Enumerate penalized facets: interior edges with at least one
/// intersected neighbor, one facet per region present on both sides.
pub fn ghost_facets(model: &XfemModel) -> Vec<GhostFacet> {
    let mut out = Vec::new();
    for edge in model.mesh.interior_edges() {
        let [e0, e1] = edge.elems;
        if !model.pm.elems[e0].is_cut() && !model.pm.elems[e1].is_cut() {
            continue;
        }
        let mut shared: Vec<usize> = model.enr.elem_regions[e0]
            .iter()
            .filter(|&&g| g != usize::MAX && model.enr.elem_regions[e1].contains(&g))
            .copied()
            .collect();
        shared.sort_unstable();
        shared.dedup();
        for g in shared {
            out.push(GhostFacet {
                elems: edge.elems,
                nodes: edge.nodes,
                normal: edge.normal,
                region: g,
                phase: model.enr.region_phase[g],
            });
        }
    }
    out
}

fn side_dofs(model: &XfemModel, e: usize, g: usize) -> [usize; 8] {
    let lr = model.enr.elem_regions[e]
        .iter()
        .position(|&x| x == g)
        .expect("facet region present");
    model.dofs.elem_dofs(e, lr).expect("solid region")
}

/// Evaluate one facet with a single midpoint rule over the full edge.
pub fn ghost_residual_tangent(
    model: &XfemModel,
    facet: &GhostFacet,
    state: &[f64],
    materials: &[Material; 2],
    spec: &GhostPenaltySpec,
) -> Result<GhostBlock> {
    let mesh = &model.mesh;
    let h = mesh.h;
    let gamma = spec.epsilon * h;
    let (a, b) = (mesh.coord(facet.nodes[0]), mesh.coord(facet.nodes[1]));
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let mat = &materials[facet.phase.idx()];
    let n0 = facet.normal;

    let mut dofs = [0usize; 16];
    let mut r = [0.0; 16];
    let mut k = [[0.0; 16]; 16];
    let sides: [(usize, f64); 2] = [(facet.elems[0], 1.0), (facet.elems[1], -1.0)];

    // per side: S n, normal gradients of the shapes, and dS n per DOF
    let mut sn = [[0.0; 2]; 2];
    let mut gn = [[0.0; 4]; 2];
    let mut dsn = [[[[0.0; 2]; 2]; 4]; 2]; // [side][node][dir][component]
    for (si, &(e, _)) in sides.iter().enumerate() {
        let sd = side_dofs(model, e, facet.region);
        dofs[8 * si..8 * si + 8].copy_from_slice(&sd);
        let grad = mesh.shape_grad(e, mid);
        let mut f = [[1.0, 0.0], [0.0, 1.0]];
        for kn in 0..4 {
            for i in 0..2 {
                for j in 0..2 {
                    f[i][j] += state[sd[2 * kn + i]] * grad[kn][j];
                }
            }
            gn[si][kn] = grad[kn][0] * n0[0] + grad[kn][1] * n0[1];
        }
        let kin = Kinematics::new(f).map_err(|err| match err {
            Error::ElementInversion { det_f, .. } => {
                Error::ElementInversion { elem: e, det_f }
            }
            other => other,
        })?;
        let s = pk2_stress(&kin, mat);
        for i in 0..2 {
            sn[si][i] = s[i][0] * n0[0] + s[i][1] * n0[1];
        }
        let c4 = pk2_tangent(&kin, mat);
        for ln in 0..4 {
            for j in 0..2 {
                // dC_KL for a unit change of u_j at node ln
                let mut dc = [[0.0; 2]; 2];
                for kk in 0..2 {
                    for ll in 0..2 {
                        dc[kk][ll] = f[j][kk] * grad[ln][ll] + grad[ln][kk] * f[j][ll];
                    }
                }
                for i in 0..2 {
                    for jj in 0..2 {
                        let mut ds = 0.0;
                        for kk in 0..2 {
                            for ll in 0..2 {
                                ds += 0.5 * c4[i][jj][kk][ll] * dc[kk][ll];
                            }
                        }
                        dsn[si][ln][j][i] += ds * n0[jj];
                    }
                }
            }
        }
    }

    let w = gamma * len;
    let jump_sn = [sn[0][0] - sn[1][0], sn[0][1] - sn[1][1]];
    for (si, &(_, sgn)) in sides.iter().enumerate() {
        for kn in 0..4 {
            for i in 0..2 {
                let row = 8 * si + 2 * kn + i;
                r[row] += w * sgn * gn[si][kn] * jump_sn[i];
                for (sj, &(_, sgn_c)) in sides.iter().enumerate() {
                    for ln in 0..4 {
                        for j in 0..2 {
                            let col = 8 * sj + 2 * ln + j;
                            k[row][col] +=
                                w * sgn * gn[si][kn] * sgn_c * dsn[sj][ln][j][i];
                        }
                    }
                }
            }
        }
    }
    Ok(GhostBlock { dofs, r, k })
}
