//! Assembled problem definition: discretization, materials, boundary
//! condition programs, and global residual/tangent assembly of the bulk
//! terms (internal forces, ghost penalty, tractions, body force).

use crate::error::{Error, Result};
use crate::geometry::Phase;
use crate::linsolve::TripletMatrix;
use crate::mechanics::{
    element_residual_tangent, ghost_facets, ghost_residual_tangent, traction_loads,
    GhostFacet, GhostPenaltySpec, Material,
};
use crate::mesh::Side;
use crate::par;
use crate::xfem::XfemModel;

/// Prescribed-displacement program over pseudo-time `t` in [0, 1].
#[derive(Debug, Clone)]
pub enum Program {
    /// Hold at zero.
    Fixed,
    /// Linear ramp to the final value; `None` leaves that component free.
    Translate([Option<f64>; 2]),
    /// Rigid rotation about a center, ramping linearly to the final angle.
    Rotation { center: [f64; 2], angle: f64 },
}

/// A set of nodes with a displacement program. When `phase` is set, only
/// DOFs of that phase are constrained; otherwise every level at the node.
#[derive(Debug, Clone)]
pub struct DirichletSpec {
    pub name: String,
    pub nodes: Vec<usize>,
    pub phase: Option<Phase>,
    pub program: Program,
}

/// Constant traction on a domain side, ramped linearly over pseudo-time.
#[derive(Debug, Clone)]
pub struct TractionSpec {
    pub side: Side,
    pub t0: [f64; 2],
}

/// Full problem definition minus contact (which the solver couples in).
pub struct Model {
    pub xfem: XfemModel,
    pub materials: [Material; 2],
    pub ghost: GhostPenaltySpec,
    pub facets: Vec<GhostFacet>,
    pub phi1: Vec<f64>,
    pub phi2: Option<Vec<f64>>,
    pub dirichlet: Vec<DirichletSpec>,
    pub tractions: Vec<TractionSpec>,
    pub body_force: [f64; 2],
}

impl Model {
    pub fn new(
        xfem: XfemModel,
        materials: [Material; 2],
        ghost: GhostPenaltySpec,
        phi1: Vec<f64>,
        phi2: Option<Vec<f64>>,
    ) -> Self {
        let facets = ghost_facets(&xfem);
        Model {
            xfem,
            materials,
            ghost,
            facets,
            phi1,
            phi2,
            dirichlet: Vec::new(),
            tractions: Vec::new(),
            body_force: [0.0; 2],
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.xfem.dofs.n_dofs
    }

    /// Rebuild the discretization from modified level-set fields while
    /// keeping materials, boundary conditions, and loads (used by the
    /// design-derivative finite differences).
    pub fn rebuild_with_phi(&self, phi1: Vec<f64>, phi2: Option<Vec<f64>>) -> Result<Model> {
        let pm = crate::geometry::classify_phases_raw(
            &self.xfem.mesh,
            &phi1,
            phi2.as_deref(),
        )?;
        let xfem = XfemModel::build(&self.xfem.mesh, pm, &phi1, phi2.as_deref())?;
        let facets = ghost_facets(&xfem);
        Ok(Model {
            xfem,
            materials: self.materials,
            ghost: self.ghost.clone(),
            facets,
            phi1,
            phi2,
            dirichlet: self.dirichlet.clone(),
            tractions: self.tractions.clone(),
            body_force: self.body_force,
        })
    }

    fn program_value(program: &Program, x: [f64; 2], t: f64) -> [Option<f64>; 2] {
        match program {
            Program::Fixed => [Some(0.0), Some(0.0)],
            Program::Translate(u) => [u[0].map(|v| v * t), u[1].map(|v| v * t)],
            Program::Rotation { center, angle } => {
                let th = angle * t;
                let (c, s) = (th.cos(), th.sin());
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                [
                    Some(c * dx - s * dy - dx),
                    Some(s * dx + c * dy - dy),
                ]
            }
        }
    }

    /// Constrained DOFs of one spec (every enrichment level of the
    /// selected phases at each node), with prescribed values at time `t`.
    pub fn dirichlet_values_of(&self, spec: &DirichletSpec, t: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for &n in &spec.nodes {
            let x = self.xfem.mesh.coord(n);
            let vals = Self::program_value(&spec.program, x, t);
            for phase in [Phase::A, Phase::B] {
                if spec.phase.is_some_and(|p| p != phase) {
                    continue;
                }
                for level in 0..self.xfem.enr.node_levels[n][phase.idx()].len() {
                    for dir in 0..2 {
                        if let Some(v) = vals[dir] {
                            out.push((self.xfem.dofs.dof(n, phase, level, dir), v));
                        }
                    }
                }
            }
        }
        out
    }

    /// All Dirichlet constraints at pseudo-time `t`. Conflicting values on
    /// a shared DOF are rejected.
    pub fn dirichlet_values(&self, t: f64) -> Result<Vec<(usize, f64)>> {
        let mut map: std::collections::BTreeMap<usize, f64> = Default::default();
        for spec in &self.dirichlet {
            for (d, v) in self.dirichlet_values_of(spec, t) {
                if let Some(&prev) = map.get(&d) {
                    if (prev - v).abs() > 1e-12 {
                        return Err(Error::config(format!(
                            "conflicting Dirichlet values on DOF {d}: {prev} vs {v}"
                        )));
                    }
                } else {
                    map.insert(d, v);
                }
            }
        }
        Ok(map.into_iter().collect())
    }

    /// External load vector at pseudo-time `t` (tractions ramp linearly).
    pub fn external_loads(&self, t: f64) -> Result<Vec<f64>> {
        let mut f = vec![0.0; self.n_dofs()];
        for tr in &self.tractions {
            let scaled = [tr.t0[0] * t, tr.t0[1] * t];
            for (d, v) in traction_loads(
                &self.xfem,
                tr.side,
                scaled,
                &self.phi1,
                self.phi2.as_deref(),
            )? {
                f[d] += v;
            }
        }
        Ok(f)
    }

    /// Assemble bulk residual and tangent at the given state and time:
    /// internal forces + ghost penalty − external loads. Element and facet
    /// evaluations run in parallel; the scatter is serial and ordered, so
    /// the result is reproducible across thread counts.
    pub fn assemble_bulk(&self, state: &[f64], t: f64) -> Result<(Vec<f64>, TripletMatrix)> {
        let n = self.n_dofs();
        let mut r = self.external_loads(t)?;
        for v in &mut r {
            *v = -*v;
        }
        let mut k = TripletMatrix::with_capacity(n, 64 * self.xfem.mesh.n_elems());

        let elem_blocks = par::map_range(self.xfem.mesh.n_elems(), |e| {
            element_residual_tangent(&self.xfem, e, state, &self.materials, self.body_force)
        });
        for blocks in elem_blocks {
            for b in blocks? {
                for (i, &di) in b.dofs.iter().enumerate() {
                    r[di] += b.r[i];
                    for (j, &dj) in b.dofs.iter().enumerate() {
                        k.push(di, dj, b.k[i][j]);
                    }
                }
            }
        }

        let ghost_blocks = par::map_indexed(&self.facets, |_, facet| {
            ghost_residual_tangent(&self.xfem, facet, state, &self.materials, &self.ghost)
        });
        for gb in ghost_blocks {
            let b = gb?;
            for (i, &di) in b.dofs.iter().enumerate() {
                r[di] += b.r[i];
                for (j, &dj) in b.dofs.iter().enumerate() {
                    if b.k[i][j] != 0.0 {
                        k.push(di, dj, b.k[i][j]);
                    }
                }
            }
        }
        Ok((r, k))
    }

    /// Reaction force on one Dirichlet set: the internal-force residual
    /// summed over its constrained DOFs, by direction.
    pub fn reaction(&self, spec_name: &str, residual_internal: &[f64]) -> Result<[f64; 2]> {
        let spec = self
            .dirichlet
            .iter()
            .find(|s| s.name == spec_name)
            .ok_or_else(|| Error::config(format!("no Dirichlet set named {spec_name}")))?;
        let mut f = [0.0; 2];
        let mut seen = std::collections::HashSet::new();
        for (d, _) in self.dirichlet_values_of(spec, 0.0) {
            if seen.insert(d) {
                f[d % 2] += residual_internal[d];
            }
        }
        Ok(f)
    }

    /// Torque about a center exerted by the reaction on one Dirichlet set.
    pub fn reaction_torque(
        &self,
        spec_name: &str,
        center: [f64; 2],
        state: &[f64],
        residual_internal: &[f64],
    ) -> Result<f64> {
        let spec = self
            .dirichlet
            .iter()
            .find(|s| s.name == spec_name)
            .ok_or_else(|| Error::config(format!("no Dirichlet set named {spec_name}")))?;
        let mut torque = 0.0;
        let mut seen = std::collections::HashSet::new();
        for &n in &spec.nodes {
            let xr = self.xfem.mesh.coord(n);
            for phase in [Phase::A, Phase::B] {
                if spec.phase.is_some_and(|p| p != phase) {
                    continue;
                }
                for level in 0..self.xfem.enr.node_levels[n][phase.idx()].len() {
                    let dx = self.xfem.dofs.dof(n, phase, level, 0);
                    let dy = dx + 1;
                    if !seen.insert(dx) {
                        continue;
                    }
                    let x = [xr[0] + state[dx], xr[1] + state[dy]];
                    torque += (x[0] - center[0]) * residual_internal[dy]
                        - (x[1] - center[1]) * residual_internal[dx];
                }
            }
        }
        Ok(torque)
    }
}
