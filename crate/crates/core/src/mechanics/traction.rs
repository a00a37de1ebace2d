//! Consistent nodal loads for tractions prescribed on the reference
//! boundary, phase-aware on intersected boundary edges.

use crate::error::{Error, Result};
use crate::geometry::{Phase, PhaseMap};
use crate::mesh::Side;
use crate::xfem::XfemModel;

fn inward(side: Side) -> [f64; 2] {
    match side {
        Side::Left => [1.0, 0.0],
        Side::Right => [-1.0, 0.0],
        Side::Bottom => [0.0, 1.0],
        Side::Top => [0.0, -1.0],
    }
}

/// External load vector entries `(dof, value)` for a constant traction
/// `t0` (force per unit reference length) on one domain side. Fails if
/// any part of the side lies in the void phase.
pub fn traction_loads(
    model: &XfemModel,
    side: Side,
    t0: [f64; 2],
    phi1: &[f64],
    phi2: Option<&[f64]>,
) -> Result<Vec<(usize, f64)>> {
    let mesh = &model.mesh;
    let h = mesh.h;
    let nrm = inward(side);
    let mut loads = Vec::new();
    for (e, [n0, n1]) in mesh.side_edges(side) {
        let p1 = [phi1[n0], phi1[n1]];
        let p2 = phi2.map(|f| [f[n0], f[n1]]);
        let (a, b) = (mesh.coord(n0), mesh.coord(n1));
        for iv in PhaseMap::edge_intervals(p1, p2) {
            if iv.phase == Phase::Void {
                return Err(Error::config(format!(
                    "traction prescribed on a void stretch of the {side:?} boundary"
                )));
            }
            let tm = 0.5 * (iv.t0 + iv.t1);
            let p = [a[0] + tm * (b[0] - a[0]), a[1] + tm * (b[1] - a[1])];
            let cut = &model.pm.elems[e];
            let mut lr = None;
            for eps_scale in [1e-7, 1e-5, 1e-3] {
                let eps = eps_scale * h;
                let q = [p[0] + eps * nrm[0], p[1] + eps * nrm[1]];
                if let Some(r) = cut.region_of_point(q) {
                    let phase = match cut.uniform {
                        Some(ph) => ph,
                        None => cut.regions[r],
                    };
                    if phase == iv.phase {
                        lr = Some(r);
                        break;
                    }
                }
            }
            let lr = lr.ok_or_else(|| {
                Error::config("could not locate boundary phase region for traction")
            })?;
            let dofs = model
                .dofs
                .elem_dofs(e, lr)
                .ok_or_else(|| Error::config("traction on a region without DOFs"))?;
            let nodes = mesh.elem_nodes(e);
            let k0 = nodes.iter().position(|&n| n == n0).unwrap();
            let k1 = nodes.iter().position(|&n| n == n1).unwrap();
            // linear shape weights integrated over the interval
            let (t0i, t1i) = (iv.t0, iv.t1);
            let w0 = h * ((t1i - t0i) - 0.5 * (t1i * t1i - t0i * t0i));
            let w1 = h * 0.5 * (t1i * t1i - t0i * t0i);
            for i in 0..2 {
                loads.push((dofs[2 * k0 + i], t0[i] * w0));
                loads.push((dofs[2 * k1 + i], t0[i] * w1));
            }
        }
    }
    Ok(loads)
}
