//! Segment-to-segment contact assembly: pairing with deformed-geometry
//! integration limits, per-pair condensation of the piecewise-linear
//! multiplier, analytic gap variation for the residual, and a pair-level
//! finite-difference consistent tangent that captures the
//! solution-dependent integration limits.

use super::projection::{inverse_project, project_onto, SegmentHash};
use super::surfaces::{extract_surfaces, DeformedSurface, SurfPoint, SurfaceSegment};
use super::{contact_weights, penalty_factor};
use crate::error::Result;
use crate::linsolve::TripletMatrix;
use crate::mechanics::{pk2_stress, Kinematics, Material};
use crate::par;
use crate::xfem::XfemModel;

/// Pairs with normal alignment below the cutoff are discarded; between
/// the cutoff and `FACING_FULL` the force is smoothly faded in.
const FACING_CUT: f64 = 0.25;
const FACING_FULL: f64 = 0.7;

const GAUSS2: [(f64, f64); 2] = [
    (0.211_324_865_405_187_12, 0.5),
    (0.788_675_134_594_812_9, 0.5),
];

/// One master/slave pairing with current integration limits on the
/// master parameter.
#[derive(Debug, Clone, Copy)]
pub struct StsPair {
    pub master: usize,
    pub slave: usize,
    pub a1: f64,
    pub a2: f64,
}

/// Per-pair summary written during assembly.
#[derive(Debug, Clone)]
pub struct PairDiagnostics {
    pub master: usize,
    pub slave: usize,
    pub a1: f64,
    pub a2: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub active: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ContactDiagnostics {
    pub pairs: Vec<PairDiagnostics>,
}

impl ContactDiagnostics {
    pub fn min_gap(&self) -> f64 {
        self.pairs
            .iter()
            .filter(|p| p.active && p.g_min.is_finite())
            .map(|p| p.g_min)
            .fold(f64::INFINITY, f64::min)
    }
}

struct PairEval {
    dofs: [usize; 16],
    r: [f64; 16],
    lambda: [f64; 2],
    g: [f64; 2],
    len0: f64,
}

/// Gap variation at one coupled point: for each of the 16 pair DOFs
/// (8 master then 8 slave) the variation of the pulled-back gap
/// `g0 = g j_A`, from the chain
///   mu     = n . d(dx_A)/|dx_A|,
///   dbeta  = (t.dxA - t.dxB - g mu) / (t . x_B'),
///   dg     = n.(dxB - dxA) + (n . x_B') dbeta,
///   dg0    = dg j_A + g dj_A.
#[allow(clippy::too_many_arguments)]
pub fn gap0_variation(
    model: &XfemModel,
    m: &SurfaceSegment,
    s: &SurfaceSegment,
    alpha: f64,
    beta: f64,
    g: f64,
    mp: &SurfPoint,
    sp: &SurfPoint,
) -> [f64; 16] {
    let mesh = &model.mesh;
    let l_def = (mp.dx[0] * mp.dx[0] + mp.dx[1] * mp.dx[1]).sqrt();
    let t = [mp.dx[0] / l_def, mp.dx[1] / l_def];
    let n = mp.n;
    let t_xbp = t[0] * sp.dx[0] + t[1] * sp.dx[1];
    let n_xbp = n[0] * sp.dx[0] + n[1] * sp.dx[1];
    let t_xbp = if t_xbp.abs() < 1e-30 { 1e-30_f64.copysign(t_xbp) } else { t_xbp };

    let x0m = m.x0(alpha);
    let shp_m = mesh.shape(m.elem, x0m);
    let grad_m = mesh.shape_grad(m.elem, x0m);
    let dvec_m = [m.ends[1][0] - m.ends[0][0], m.ends[1][1] - m.ends[0][1]];
    let shp_s = mesh.shape(s.elem, s.x0(beta));

    // F_A inverse and the Nanson vector w = F^-T n0 for the j variation
    let det_f = mp.f[0][0] * mp.f[1][1] - mp.f[0][1] * mp.f[1][0];
    let f_inv = [
        [mp.f[1][1] / det_f, -mp.f[0][1] / det_f],
        [-mp.f[1][0] / det_f, mp.f[0][0] / det_f],
    ];
    let wv = [
        f_inv[0][0] * m.n0[0] + f_inv[1][0] * m.n0[1],
        f_inv[0][1] * m.n0[0] + f_inv[1][1] * m.n0[1],
    ];
    let wn = (wv[0] * wv[0] + wv[1] * wv[1]).sqrt();

    let mut out = [0.0; 16];
    for (kdof, o) in out.iter_mut().enumerate() {
        let (node, dir, is_master) = ((kdof / 2) % 4, kdof % 2, kdof < 8);
        let (dxa, dxb, mu, dj);
        if is_master {
            let nk = shp_m[node];
            dxa = [if dir == 0 { nk } else { 0.0 }, if dir == 1 { nk } else { 0.0 }];
            dxb = [0.0, 0.0];
            // d(dx_A) = dN_k e_dir with dN_k the directional derivative
            // of the shape function along the reference segment
            let dnk = grad_m[node][0] * dvec_m[0] + grad_m[node][1] * dvec_m[1];
            mu = n[dir] * dnk / l_def;
            // dF = e_dir (x) grad N_k
            let dfr = grad_m[node];
            let ddet = det_f * (f_inv[0][dir] * dfr[0] + f_inv[1][dir] * dfr[1]);
            // dw = -F^-T dF^T w ; (dF^T w)_j = w_dir dN_j
            let dw = [
                -wv[dir] * (f_inv[0][0] * dfr[0] + f_inv[1][0] * dfr[1]),
                -wv[dir] * (f_inv[0][1] * dfr[0] + f_inv[1][1] * dfr[1]),
            ];
            let dwn = (wv[0] * dw[0] + wv[1] * dw[1]) / wn;
            dj = ddet * wn + det_f * dwn;
        } else {
            let nk = shp_s[node];
            dxa = [0.0, 0.0];
            dxb = [if dir == 0 { nk } else { 0.0 }, if dir == 1 { nk } else { 0.0 }];
            mu = 0.0;
            dj = 0.0;
        }
        let t_dxa = t[0] * dxa[0] + t[1] * dxa[1];
        let t_dxb = t[0] * dxb[0] + t[1] * dxb[1];
        let dbeta = (t_dxa - t_dxb - g * mu) / t_xbp;
        let dg = n[0] * (dxb[0] - dxa[0]) + n[1] * (dxb[1] - dxa[1]) + n_xbp * dbeta;
        *o = dg * mp.j + g * dj;
    }
    out
}

/// Contact state for one design iterate: reference surfaces and the
/// per-master-segment active flags, which persist across Newton
/// iterations of one load step.
pub struct ContactSystem {
    pub masters: Vec<SurfaceSegment>,
    pub slaves: Vec<SurfaceSegment>,
    pub active: Vec<bool>,
    pub gamma: f64,
    e_a: f64,
    e_b: f64,
    /// Pairing proximity cutoff in units of h.
    pub proximity: f64,
    h: f64,
}

impl ContactSystem {
    pub fn new(model: &XfemModel, materials: &[Material; 2]) -> Result<Self> {
        let (masters, slaves) = extract_surfaces(model)?;
        let h = model.mesh.h;
        let active = vec![true; masters.len()];
        Ok(ContactSystem {
            active,
            gamma: penalty_factor(materials[0].e, materials[1].e, h),
            e_a: materials[0].e,
            e_b: materials[1].e,
            proximity: 1.0,
            masters,
            slaves,
            h,
        })
    }

    pub fn has_interface(&self) -> bool {
        !self.masters.is_empty()
    }

    /// Pair every master segment with nearby slave segments, taking the
    /// integration limits from the inverse projection of the deformed
    /// slave endpoints clipped to the master parameter range.
    pub fn pairs(&self, model: &XfemModel, state: &[f64]) -> Vec<StsPair> {
        self.pairs_scoped(model, state, None)
    }

    /// Same, optionally restricted to pairs where at least one segment
    /// lives in an element of `scope`.
    pub fn pairs_scoped(
        &self,
        model: &XfemModel,
        state: &[f64],
        scope: Option<&std::collections::HashSet<usize>>,
    ) -> Vec<StsPair> {
        let surf = DeformedSurface::new(model, state);
        let prox = self.proximity * self.h;
        let boxes: Vec<[f64; 4]> = self
            .slaves
            .iter()
            .map(|s| {
                let (p0, p1) = (surf.eval(s, 0.0), surf.eval(s, 1.0));
                [
                    p0.x[0].min(p1.x[0]) - prox,
                    p0.x[1].min(p1.x[1]) - prox,
                    p0.x[0].max(p1.x[0]) + prox,
                    p0.x[1].max(p1.x[1]) + prox,
                ]
            })
            .collect();
        let hash = SegmentHash::build(&boxes, 2.0 * self.h);
        let mut pairs = Vec::new();
        for (mi, m) in self.masters.iter().enumerate() {
            let (p0, p1) = (surf.eval(m, 0.0), surf.eval(m, 1.0));
            let mb = [
                p0.x[0].min(p1.x[0]),
                p0.x[1].min(p1.x[1]),
                p0.x[0].max(p1.x[0]),
                p0.x[1].max(p1.x[1]),
            ];
            for si in hash.query(mb) {
                let s = &self.slaves[si];
                if let Some(sc) = scope {
                    if !sc.contains(&m.elem) && !sc.contains(&s.elem) {
                        continue;
                    }
                }
                let (e0, e1) = (surf.eval(s, 0.0), surf.eval(s, 1.0));
                let (Some(a0), Some(a1)) = (
                    inverse_project(&surf, m, e0.x, self.h),
                    inverse_project(&surf, m, e1.x, self.h),
                ) else {
                    continue;
                };
                let (lo, hi) = (a0.min(a1).max(0.0), a0.max(a1).min(1.0));
                if hi - lo < 1e-9 {
                    continue;
                }
                // proximity and orientation check at the interval midpoint
                let pm = surf.eval(m, 0.5 * (lo + hi));
                let Some((beta, g)) = project_onto(&surf, s, pm.x, pm.n, self.h) else {
                    continue;
                };
                // drop pairs separated beyond the proximity band, but keep
                // penetrating pairs at any depth: dropping them would
                // silence the restoring force exactly when it is needed
                if !(-0.2..=1.2).contains(&beta) || g > prox {
                    continue;
                }
                // facing check: slave segments keep the master endpoint
                // ordering, so a genuine pair has closely aligned
                // left-hand normals; a large misalignment means the
                // projection crossed a thin member or a corner wedge onto
                // an unrelated piece of the interface (eval_pair fades the
                // force to zero before this hard cutoff)
                let sp = surf.eval(s, beta.clamp(0.0, 1.0));
                if pm.n[0] * sp.n[0] + pm.n[1] * sp.n[1] <= FACING_CUT {
                    continue;
                }
                pairs.push(StsPair { master: mi, slave: si, a1: lo, a2: hi });
            }
        }
        pairs
    }

    fn eval_pair(
        &self,
        model: &XfemModel,
        surf: &DeformedSurface,
        pair: &StsPair,
        materials: &[Material; 2],
    ) -> Option<PairEval> {
        let m = &self.masters[pair.master];
        let s = &self.slaves[pair.slave];
        let mut dofs = [0usize; 16];
        dofs[..8].copy_from_slice(&m.dofs);
        dofs[8..].copy_from_slice(&s.dofs);
        let len0 = m.len0();
        let span = pair.a2 - pair.a1;
        let vol_a = model.pm.elems[m.elem].vol[0];
        let vol_b = model.pm.elems[s.elem].vol[1];
        let (ka, kb) = contact_weights(vol_a, vol_b, self.e_a, self.e_b).ok()?;

        // first pass: gaps, stabilization traction, condensation system
        let mut mm = [[0.0; 2]; 2];
        let mut bb = [0.0; 2];
        let mut gp: Vec<(f64, f64, [f64; 2], SurfPoint, f64, SurfPoint, f64)> =
            Vec::with_capacity(2);
        for &(xi, wq) in &GAUSS2 {
            let alpha = pair.a1 + xi * span;
            let w = wq * span * len0;
            let phi = [(pair.a2 - alpha) / span, (alpha - pair.a1) / span];
            let mp = surf.eval(m, alpha);
            let (beta, g) = project_onto(surf, s, mp.x, mp.n, self.h)?;
            let sp = surf.eval(s, beta);
            let kin_a = Kinematics::new(mp.f).ok()?;
            let kin_b = Kinematics::new(sp.f).ok()?;
            let s_a = pk2_stress(&kin_a, &materials[0]);
            let s_b = pk2_stress(&kin_b, &materials[1]);
            let (na, nb) = (m.n0, s.n0);
            let sn_a = na[0] * (s_a[0][0] * na[0] + s_a[0][1] * na[1])
                + na[1] * (s_a[1][0] * na[0] + s_a[1][1] * na[1]);
            let sn_b = nb[0] * (s_b[0][0] * nb[0] + s_b[0][1] * nb[1])
                + nb[1] * (s_b[1][0] * nb[0] + s_b[1][1] * nb[1]);
            let lam_tilde = ka * sn_a + kb * sn_b * mp.j / sp.j;
            let g0 = g * mp.j;
            for a in 0..2 {
                bb[a] += w * phi[a] * (lam_tilde + self.gamma * g0);
                for b in 0..2 {
                    mm[a][b] += w * phi[a] * phi[b];
                }
            }
            gp.push((alpha, w, phi, mp, beta, sp, g));
        }
        let det = mm[0][0] * mm[1][1] - mm[0][1] * mm[1][0];
        if det.abs() < 1e-300 {
            return None;
        }
        let lambda = [
            (mm[1][1] * bb[0] - mm[0][1] * bb[1]) / det,
            (-mm[1][0] * bb[0] + mm[0][0] * bb[1]) / det,
        ];

        // second pass: residual rows r_v = sum_q w_q fac_q lambda_q dg0_q(v),
        // where fac ramps the force to zero as the pair normals misalign
        // so pairs enter and leave the facing cutoff continuously
        let mut r = [0.0; 16];
        let mut g_vals = [0.0; 2];
        let prox = self.proximity * self.h;
        for (iq, (alpha, w, phi, mp, beta, sp, g)) in gp.iter().enumerate() {
            g_vals[iq] = *g;
            let dot = mp.n[0] * sp.n[0] + mp.n[1] * sp.n[1];
            let t = ((dot - FACING_CUT) / (FACING_FULL - FACING_CUT)).clamp(0.0, 1.0);
            // fade separated pairs out over the outer half of the
            // proximity band so they enter and leave the search without a
            // force jump; working gaps near contact are far below the band
            let tg = ((prox - g) / (0.5 * prox)).clamp(0.0, 1.0);
            let fac = t * t * (3.0 - 2.0 * t) * tg * tg * (3.0 - 2.0 * tg);
            let lam = phi[0] * lambda[0] + phi[1] * lambda[1];
            let dg0 = gap0_variation(model, m, s, *alpha, *beta, *g, mp, sp);
            for (rv, d) in r.iter_mut().zip(dg0) {
                *rv += fac * w * lam * d;
            }
        }
        Some(PairEval { dofs, r, lambda, g: g_vals, len0 })
    }

    /// Pair residual with a sparse DOF perturbation overlaid. The
    /// (master, slave) pairing is frozen, but the integration limits and
    /// projections are recomputed from the perturbed slave endpoints, so
    /// the FD tangent sees the limit dependence.
    fn eval_pair_perturbed(
        &self,
        model: &XfemModel,
        state: &[f64],
        pair: &StsPair,
        materials: &[Material; 2],
        overlay: Vec<(usize, f64)>,
    ) -> Option<PairEval> {
        let mut surf = DeformedSurface::new(model, state);
        surf.overlay = overlay;
        let m = &self.masters[pair.master];
        let s = &self.slaves[pair.slave];
        let (e0, e1) = (surf.eval(s, 0.0), surf.eval(s, 1.0));
        let (a0, a1) = (
            inverse_project(&surf, m, e0.x, self.h)?,
            inverse_project(&surf, m, e1.x, self.h)?,
        );
        let (lo, hi) = (a0.min(a1).max(0.0), a0.max(a1).min(1.0));
        if hi - lo < 1e-12 {
            return None;
        }
        let moved = StsPair { master: pair.master, slave: pair.slave, a1: lo, a2: hi };
        self.eval_pair(model, &surf, &moved, materials)
    }

    /// Assemble the contact residual and tangent into the global system,
    /// pairing from the current deformed state.
    pub fn assemble(
        &self,
        model: &XfemModel,
        state: &[f64],
        materials: &[Material; 2],
        r: &mut [f64],
        k: &mut TripletMatrix,
    ) -> Result<ContactDiagnostics> {
        let pairs = self.pairs(model, state);
        self.assemble_pairs(model, state, materials, &pairs, r, k)
    }

    /// Same with a caller-frozen pair list, which keeps the residual
    /// smooth across the trials of one damped Newton iteration.
    pub fn assemble_pairs(
        &self,
        model: &XfemModel,
        state: &[f64],
        materials: &[Material; 2],
        pairs: &[StsPair],
        r: &mut [f64],
        k: &mut TripletMatrix,
    ) -> Result<ContactDiagnostics> {
        let surf = DeformedSurface::new(model, state);
        let fd = 1e-6 * self.h;
        let contribs = par::map_indexed(pairs, |_, pair| {
            if !self.active[pair.master] {
                return None;
            }
            let base = self.eval_pair(model, &surf, pair, materials)?;
            // pair-level central FD tangent over the 16 involved DOFs
            let mut kt = Box::new([[0.0; 16]; 16]);
            for j in 0..16 {
                let d = base.dofs[j];
                let rp = self.eval_pair_perturbed(model, state, pair, materials, vec![(d, fd)]);
                let rm =
                    self.eval_pair_perturbed(model, state, pair, materials, vec![(d, -fd)]);
                if let (Some(rp), Some(rm)) = (rp, rm) {
                    for i in 0..16 {
                        kt[i][j] = (rp.r[i] - rm.r[i]) / (2.0 * fd);
                    }
                }
            }
            Some((base, kt))
        });
        let mut diags = ContactDiagnostics::default();
        for (pair, c) in pairs.iter().zip(contribs) {
            let active = self.active[pair.master];
            match c {
                None => diags.pairs.push(PairDiagnostics {
                    master: pair.master,
                    slave: pair.slave,
                    a1: pair.a1,
                    a2: pair.a2,
                    g_min: f64::NAN,
                    g_max: f64::NAN,
                    lambda_min: f64::NAN,
                    lambda_max: f64::NAN,
                    active,
                }),
                Some((base, kt)) => {
                    for (i, &di) in base.dofs.iter().enumerate() {
                        r[di] += base.r[i];
                        for (j, &dj) in base.dofs.iter().enumerate() {
                            if kt[i][j] != 0.0 {
                                k.push(di, dj, kt[i][j]);
                            }
                        }
                    }
                    diags.pairs.push(PairDiagnostics {
                        master: pair.master,
                        slave: pair.slave,
                        a1: pair.a1,
                        a2: pair.a2,
                        g_min: base.g[0].min(base.g[1]),
                        g_max: base.g[0].max(base.g[1]),
                        lambda_min: base.lambda[0].min(base.lambda[1]),
                        lambda_max: base.lambda[0].max(base.lambda[1]),
                        active,
                    });
                }
            }
        }
        Ok(diags)
    }

    /// Residual-only evaluation (used by the adjoint right-hand sides and
    /// finite-difference checks).
    pub fn residual_only(
        &self,
        model: &XfemModel,
        state: &[f64],
        materials: &[Material; 2],
        r: &mut [f64],
    ) -> Result<()> {
        let pairs = self.pairs(model, state);
        let surf = DeformedSurface::new(model, state);
        for pair in &pairs {
            if !self.active[pair.master] {
                continue;
            }
            if let Some(base) = self.eval_pair(model, &surf, pair, materials) {
                for (i, &di) in base.dofs.iter().enumerate() {
                    r[di] += base.r[i];
                }
            }
        }
        Ok(())
    }

    /// Residual restricted to pairs touching the given element set
    /// (design-perturbation locality: pairs between two unperturbed
    /// elements are unchanged and can be skipped).
    pub fn residual_scoped(
        &self,
        model: &XfemModel,
        state: &[f64],
        materials: &[Material; 2],
        scope: &std::collections::HashSet<usize>,
        r: &mut [f64],
    ) -> Result<()> {
        let surf = DeformedSurface::new(model, state);
        for pair in self.pairs_scoped(model, state, Some(scope)) {
            if !self.active[pair.master] {
                continue;
            }
            if let Some(base) = self.eval_pair(model, &surf, &pair, materials) {
                for (i, &di) in base.dofs.iter().enumerate() {
                    r[di] += base.r[i];
                }
            }
        }
        Ok(())
    }

    /// Active-set update from the current state: deactivate master
    /// segments whose length-weighted mean multiplier is tensile,
    /// activate inactive ones showing penetration. Returns whether any
    /// flag flipped.
    pub fn update_active_set(
        &mut self,
        model: &XfemModel,
        state: &[f64],
        materials: &[Material; 2],
    ) -> bool {
        let pairs = self.pairs(model, state);
        let surf = DeformedSurface::new(model, state);
        let tol_lambda = 1e-10 * (self.e_a + self.e_b);
        let mut mean_lambda = vec![(0.0, 0.0); self.masters.len()];
        for pair in &pairs {
            if let Some(e) = self.eval_pair(model, &surf, pair, materials) {
                let wl = (pair.a2 - pair.a1) * e.len0;
                mean_lambda[pair.master].0 += wl * 0.5 * (e.lambda[0] + e.lambda[1]);
                mean_lambda[pair.master].1 += wl;
            }
        }
        // both transitions test the same stabilized multiplier (which the
        // penalty term drives through zero at grazing contact), with a
        // small hysteresis band; segment forces are then continuous at
        // the switch and the update cannot two-cycle
        let mut changed = false;
        for mi in 0..self.masters.len() {
            if mean_lambda[mi].1 == 0.0 {
                continue;
            }
            let lam = mean_lambda[mi].0 / mean_lambda[mi].1;
            if self.active[mi] && lam > tol_lambda {
                self.active[mi] = false;
                changed = true;
            } else if !self.active[mi] && lam < -tol_lambda {
                self.active[mi] = true;
                changed = true;
            }
        }
        changed
    }
}
