//! Mapping between optimization variables and level-set fields, plus
//! the optimizer-facing problem wrapper (objective normalization,
//! volume constraint, gradient chain rule).

use crate::error::{Error, Result};
use crate::geometry::{FilterSpec, Primitive};
use crate::harness::presets::{
    design_filter, frozen_nodes, rebuild, DesignControl, GeometrySpec, Problem,
};
use crate::mesh::Mesh;
use crate::optimizer::{Eval, OptProblem};
use crate::sensitivity::{
    gradient_wrt_phi, volume_fraction, DesignField, FdSpec, Objective, PhiGradient,
};
use crate::solver::{solve, SolveHistory};

/// Closed-form primitive families with per-instance parameters.
#[derive(Debug, Clone, Copy)]
pub enum PrimFamily {
    /// `s = [s1..s5, void_x1, void_x2, void_x3, void_rx, void_ry12,
    /// void_ry3]`.
    SnapFitVoids,
    /// `s = [R, a, psi, psi_v x n_petals, h_b, h_v x n, a_v x n, w_v x n]`.
    RodPetals { n_ridges: u32, n_petals: u32 },
}

impl PrimFamily {
    pub fn phi(&self, mesh: &Mesh, s: &[f64]) -> (Vec<f64>, Option<Vec<f64>>) {
        match self {
            PrimFamily::SnapFitVoids => {
                let tab = Primitive::SnapFitProfile {
                    s: [s[0], s[1], s[2], s[3], s[4]],
                };
                let voids = Primitive::MinOf(
                    (0..3)
                        .map(|j| Primitive::EllipseConic {
                            center: [s[5 + j], 0.0],
                            rx: s[8],
                            ry: if j < 2 { s[9] } else { s[10] },
                        })
                        .collect(),
                );
                (tab.sample(mesh, 1.0), Some(voids.sample(mesh, 1.0)))
            }
            PrimFamily::RodPetals { n_ridges, n_petals } => {
                let n = *n_petals as usize;
                let rod = Primitive::SineRadiusCircle {
                    r: s[0],
                    a: s[1],
                    n: *n_ridges,
                    psi: s[2],
                    center: [0.5, 0.5],
                    l1: 1.0,
                };
                let h_b = s[3 + n];
                let petals = Primitive::MinOf(
                    (0..n)
                        .map(|j| Primitive::Petal {
                            psi_v: s[3 + j],
                            h_b,
                            h_v: s[4 + n + j],
                            a_v: s[4 + 2 * n + j],
                            w_v: s[4 + 3 * n + j],
                            n_p: *n_petals,
                            center: [0.5, 0.5],
                            l1: 1.0,
                        })
                        .collect(),
                );
                (rod.sample(mesh, 1.0), Some(petals.sample(mesh, 1.0)))
            }
        }
    }
}

/// Runtime design parameterization.
pub enum DesignMap {
    Nodal {
        filter: Option<FilterSpec>,
        initial: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Prims {
        family: PrimFamily,
        initial: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl DesignMap {
    pub fn build(problem: &Problem) -> Result<DesignMap> {
        let preset = &problem.preset;
        let mesh = &problem.model.xfem.mesh;
        match &preset.design {
            DesignControl::None => {
                Err(Error::config("preset has no design parameterization"))
            }
            DesignControl::Nodal { lower, upper, .. } => {
                let filter = design_filter(preset, mesh)?;
                let frozen = frozen_nodes(preset, mesh);
                let (phi0, _) = preset.geometry.initial_phi(mesh);
                let mut init = Vec::with_capacity(phi0.len());
                let mut lo = Vec::with_capacity(phi0.len());
                let mut hi = Vec::with_capacity(phi0.len());
                for (i, &p) in phi0.iter().enumerate() {
                    let v = p.clamp(*lower, *upper);
                    init.push(v);
                    if frozen[i] {
                        lo.push(v);
                        hi.push(v);
                    } else {
                        lo.push(*lower);
                        hi.push(*upper);
                    }
                }
                Ok(DesignMap::Nodal { filter, initial: init, lower: lo, upper: hi })
            }
            DesignControl::Primitives { initial, lower, upper, .. } => {
                let family = match preset.geometry {
                    GeometrySpec::SnapFitTabVoids { .. } => PrimFamily::SnapFitVoids,
                    GeometrySpec::RodPetals { n_ridges, n_petals, .. } => {
                        PrimFamily::RodPetals { n_ridges, n_petals }
                    }
                    _ => {
                        return Err(Error::config(
                            "primitive design control needs a primitive geometry",
                        ))
                    }
                };
                Ok(DesignMap::Prims {
                    family,
                    initial: initial.clone(),
                    lower: lower.clone(),
                    upper: upper.clone(),
                })
            }
        }
    }

    pub fn initial(&self) -> Vec<f64> {
        match self {
            DesignMap::Nodal { initial, .. } | DesignMap::Prims { initial, .. } => {
                initial.clone()
            }
        }
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DesignMap::Nodal { lower, upper, .. }
            | DesignMap::Prims { lower, upper, .. } => (lower.clone(), upper.clone()),
        }
    }

    pub fn phi(&self, mesh: &Mesh, s: &[f64]) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        match self {
            DesignMap::Nodal { filter, .. } => {
                let phi = match filter {
                    Some(f) => f.apply(s)?,
                    None => s.to_vec(),
                };
                Ok((phi, None))
            }
            DesignMap::Prims { family, .. } => Ok(family.phi(mesh, s)),
        }
    }

    /// Pull a nodal-field gradient pair back onto the design variables.
    pub fn chain(
        &self,
        mesh: &Mesh,
        g1: &[f64],
        g2: Option<&[f64]>,
        s: &[f64],
    ) -> Result<Vec<f64>> {
        match self {
            DesignMap::Nodal { filter, .. } => Ok(match filter {
                Some(f) => f.apply_transpose(g1),
                None => g1.to_vec(),
            }),
            DesignMap::Prims { family, lower, upper, .. } => {
                let mut out = vec![0.0; s.len()];
                for j in 0..s.len() {
                    let d = 1e-6 * (upper[j] - lower[j]).max(1e-6);
                    let mut sp = s.to_vec();
                    sp[j] += d;
                    let mut sm = s.to_vec();
                    sm[j] -= d;
                    let (p1, p2) = family.phi(mesh, &sp);
                    let (m1, m2) = family.phi(mesh, &sm);
                    let mut acc = 0.0;
                    for i in 0..g1.len() {
                        if g1[i] != 0.0 {
                            acc += g1[i] * (p1[i] - m1[i]) / (2.0 * d);
                        }
                    }
                    if let (Some(g2), Some(p2), Some(m2)) = (g2, p2, m2) {
                        for i in 0..g2.len() {
                            if g2[i] != 0.0 {
                                acc += g2[i] * (p2[i] - m2[i]) / (2.0 * d);
                            }
                        }
                    }
                    out[j] = acc;
                }
                Ok(out)
            }
        }
    }

    pub fn has_phi2(&self) -> bool {
        matches!(self, DesignMap::Prims { .. })
    }
}

/// Per-iterate bookkeeping row for the optimization history CSV.
#[derive(Debug, Clone)]
pub struct IterateRow {
    pub z: f64,
    pub perim: f64,
    pub vfrac: f64,
}

/// Optimizer-facing wrapper: q = c_u z/z0 + c_p P/P0, volume constraint
/// V_B/(V_A+V_B) - c_v <= 0 (omitted when c_v >= 1).
pub struct PresetOpt<'a> {
    pub problem: &'a Problem,
    pub map: DesignMap,
    pub z0: Option<f64>,
    pub p0: Option<f64>,
    pub last: Option<IterateRow>,
    pub accepted: Vec<(usize, IterateRow)>,
    pub n_evals: usize,
}

impl<'a> PresetOpt<'a> {
    pub fn new(problem: &'a Problem) -> Result<Self> {
        Ok(PresetOpt {
            map: DesignMap::build(problem)?,
            problem,
            z0: None,
            p0: None,
            last: None,
            accepted: Vec::new(),
            n_evals: 0,
        })
    }

    fn has_volume_constraint(&self) -> bool {
        self.problem.preset.volume_ratio_cv < 1.0
    }

    /// Forward solve plus objective pieces at a design.
    pub fn forward(&self, s: &[f64]) -> Result<(crate::model::Model, SolveHistory)> {
        let mesh = &self.problem.model.xfem.mesh;
        let (phi1, phi2) = self.map.phi(mesh, s)?;
        let model = rebuild(self.problem, phi1, phi2)?;
        let hist = solve(&model, &self.problem.preset.solver_spec())?;
        Ok((model, hist))
    }

    fn objective(&self) -> Result<&Objective> {
        self.problem
            .objective
            .as_ref()
            .ok_or_else(|| Error::config("preset has no objective"))
    }
}

impl OptProblem for PresetOpt<'_> {
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.map.bounds()
    }

    fn initial(&mut self) -> Vec<f64> {
        self.map.initial()
    }

    fn eval(&mut self, s: &[f64]) -> Result<Eval> {
        self.n_evals += 1;
        let preset = &self.problem.preset;
        let mesh = &self.problem.model.xfem.mesh;
        let obj = self.objective()?.clone();
        let (model, hist) = self.forward(s)?;
        let z = obj.eval(&model, &hist)?;
        let perim = model.xfem.pm.perimeter();
        let vfrac = volume_fraction(&model);
        let z0 = *self.z0.get_or_insert(if z.abs() > 1e-12 { z.abs() } else { 1.0 });
        let p0 = *self.p0.get_or_insert(if perim > 1e-12 { perim } else { 1.0 });

        let g1 = gradient_wrt_phi(&model, &hist, &obj, DesignField::Phi1, FdSpec::default())?;
        let g2: Option<PhiGradient> = if self.map.has_phi2() {
            Some(gradient_wrt_phi(
                &model,
                &hist,
                &obj,
                DesignField::Phi2,
                FdSpec::default(),
            )?)
        } else {
            None
        };

        let n_nodes = mesh.n_nodes();
        let cu = preset.response_weight_cu;
        let cp = preset.penalty_weight_cp;
        let mut gq1 = vec![0.0; n_nodes];
        let mut gq2 = vec![0.0; n_nodes];
        for i in 0..n_nodes {
            gq1[i] = cu * g1.dz[i] / z0 + cp * g1.dperim[i] / p0;
            if let Some(g2) = &g2 {
                gq2[i] = cu * g2.dz[i] / z0 + cp * g2.dperim[i] / p0;
            }
        }
        let q = cu * z / z0 + cp * perim / p0;
        let dq = self
            .map
            .chain(mesh, &gq1, g2.as_ref().map(|_| gq2.as_slice()), s)?;

        let (g, dg) = if self.has_volume_constraint() {
            let cv = preset.volume_ratio_cv;
            let dv2 = g2.as_ref().map(|g| g.dvol.as_slice());
            let dvs = self.map.chain(mesh, &g1.dvol, dv2, s)?;
            (vec![vfrac - cv], vec![dvs])
        } else {
            (vec![], vec![])
        };

        self.last = Some(IterateRow { z, perim, vfrac });
        Ok(Eval { q, dq, g, dg })
    }

    fn on_iterate(&mut self, iter: usize, _s: &[f64], _eval: &Eval) {
        if let Some(row) = self.last.clone() {
            self.accepted.push((iter, row));
        }
    }
}
