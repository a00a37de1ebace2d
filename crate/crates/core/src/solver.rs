//! Incremental-load Newton solver with Levenberg-Marquardt damping,
//! Dirichlet elimination, contact active-set iteration, and automatic
//! step bisection on nonconvergence.

use crate::contact::{ContactDiagnostics, ContactSystem};
use crate::error::{Error, Result};
use crate::linsolve::TripletMatrix;
use crate::model::Model;

#[derive(Debug, Clone)]
pub struct SolverSpec {
    /// Number of pseudo-time load increments on [0, 1].
    pub n_steps: usize,
    /// Relative residual tolerance for Newton convergence.
    pub tol: f64,
    pub max_iters: usize,
    /// Initial Levenberg-Marquardt damping factor.
    pub beta0: f64,
    /// Maximum recursive step-bisection depth.
    pub max_bisect: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec { n_steps: 10, tol: 1e-9, max_iters: 120, beta0: 0.01, max_bisect: 4 }
    }
}

/// Converged record of one load increment.
pub struct StepRecord {
    pub t: f64,
    pub iters: usize,
    /// Levenberg-Marquardt damping factor at convergence (of the last
    /// sub-step when the increment was bisected).
    pub beta: f64,
    /// Converged displacement state.
    pub state: Vec<f64>,
    /// Internal-force residual (bulk + ghost + contact, no external
    /// loads); reactions are sums of these over constrained DOFs.
    pub r_int: Vec<f64>,
    /// Contact active flags frozen at convergence (empty without contact).
    pub active: Vec<bool>,
    pub contact: ContactDiagnostics,
}

pub struct SolveHistory {
    pub steps: Vec<StepRecord>,
    pub total_iters: usize,
    /// Number of Newton solves run, including bisected sub-steps.
    pub n_solves: usize,
}

impl SolveHistory {
    pub fn final_state(&self) -> &[f64] {
        &self.steps.last().expect("no steps recorded").state
    }

    pub fn avg_iters(&self) -> f64 {
        if self.n_solves == 0 {
            0.0
        } else {
            self.total_iters as f64 / self.n_solves as f64
        }
    }
}

/// Map from full DOF ids to free (unconstrained) ids.
pub struct FreeMap {
    pub to_free: Vec<Option<usize>>,
    pub n_free: usize,
}

impl FreeMap {
    pub fn new(n: usize, constrained: &[(usize, f64)]) -> Self {
        let mut to_free = vec![None; n];
        let mut mask = vec![false; n];
        for &(d, _) in constrained {
            mask[d] = true;
        }
        let mut n_free = 0;
        for (d, slot) in to_free.iter_mut().enumerate() {
            if !mask[d] {
                *slot = Some(n_free);
                n_free += 1;
            }
        }
        FreeMap { to_free, n_free }
    }

    pub fn reduce_vec(&self, full: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_free);
        for (d, &m) in self.to_free.iter().enumerate() {
            if m.is_some() {
                out.push(full[d]);
            }
        }
        out
    }

    pub fn reduce_mat(&self, k: &TripletMatrix) -> TripletMatrix {
        let mut out = TripletMatrix::with_capacity(self.n_free, k.nnz_entries());
        for t in k.entries() {
            if let (Some(i), Some(j)) = (self.to_free[t.row], self.to_free[t.col]) {
                out.push(i, j, t.val);
            }
        }
        out
    }

    pub fn scatter_add(&self, free: &[f64], full: &mut [f64], scale: f64) {
        for (d, &m) in self.to_free.iter().enumerate() {
            if let Some(i) = m {
                full[d] += scale * free[i];
            }
        }
    }
}

/// Root-mean-square residual over the free DOFs. Newton acceptance works
/// on this norm because the Newton direction of an exact tangent always
/// descends it; the max norm can deadlock on a single DOF pinned at a
/// contact-kink vertex while the rest of the field is converged.
fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Assemble the full residual/tangent (bulk + contact) at `state`, `t`.
pub fn assemble_all(
    model: &Model,
    contact: Option<&ContactSystem>,
    state: &[f64],
    t: f64,
) -> Result<(Vec<f64>, TripletMatrix, ContactDiagnostics)> {
    let (mut r, mut k) = model.assemble_bulk(state, t)?;
    let mut diags = ContactDiagnostics::default();
    if let Some(cs) = contact {
        diags = cs.assemble(&model.xfem, state, &model.materials, &mut r, &mut k)?;
    }
    Ok((r, k, diags))
}

/// One Newton solve at fixed pseudo-time. Returns the iteration count and
/// final contact diagnostics; `state` holds the converged solution.
fn newton(
    model: &Model,
    contact: Option<&mut ContactSystem>,
    state: &mut [f64],
    t: f64,
    step: usize,
    spec: &SolverSpec,
) -> Result<(usize, f64, ContactDiagnostics)> {
    let constrained = model.dirichlet_values(t)?;
    for &(d, v) in &constrained {
        state[d] = v;
    }
    let fm = FreeMap::new(model.n_dofs(), &constrained);
    let mut contact = contact;

    let assemble = |cs: Option<&ContactSystem>, s: &[f64]| assemble_all(model, cs, s, t);

    let (mut r, mut k, mut diags) =
        assemble(contact.as_deref(), state).map_err(nonconvergent)?;
    let e_ref = 0.5 * (model.materials[0].e + model.materials[1].e);
    let f_ref = norm_inf(&fm.reduce_vec(&r)).max(e_ref * model.xfem.mesh.h);
    let freeze_below = 1e3 * spec.tol * f_ref;
    let mut beta = spec.beta0;
    let mut norm = norm_inf(&fm.reduce_vec(&r));

    // bulk + contact with a caller-frozen pair list; trials inside one
    // damped iteration then see a residual that is smooth in the state
    let assemble_frozen = |cs: Option<&ContactSystem>,
                           pairs: Option<&[crate::contact::StsPair]>,
                           s: &[f64]|
     -> Result<(Vec<f64>, TripletMatrix, ContactDiagnostics)> {
        let (mut r, mut k) = model.assemble_bulk(s, t)?;
        let mut diags = ContactDiagnostics::default();
        if let (Some(cs), Some(p)) = (cs, pairs) {
            diags = cs.assemble_pairs(&model.xfem, s, &model.materials, p, &mut r, &mut k)?;
        }
        Ok((r, k, diags))
    };

    let debug = std::env::var_os("SOLVER_DEBUG").is_some();
    let mut as_hist: Vec<Vec<bool>> = Vec::new();
    let mut as_frozen = false;
    for iter in 0..spec.max_iters {
        // one active-set update per iteration, frozen near convergence
        if norm > freeze_below && !as_frozen {
            if let Some(cs) = contact.as_deref_mut() {
                let before = cs.active.clone();
                if cs.update_active_set(&model.xfem, state, &model.materials) {
                    // a revisited active set means the update is cycling on
                    // marginal segments; keep them active and stop updating
                    if as_hist.iter().any(|h| *h == cs.active) {
                        for (a, b) in cs.active.iter_mut().zip(&before) {
                            *a = *a || *b;
                        }
                        as_frozen = true;
                    }
                    as_hist.push(before);
                }
            }
        }
        // re-pair from the current state and reassemble; the pairing
        // stays frozen through the damped trials below
        let frozen: Option<Vec<crate::contact::StsPair>> =
            contact.as_deref().map(|cs| cs.pairs(&model.xfem, state));
        {
            let (r2, k2, d2) =
                assemble_frozen(contact.as_deref(), frozen.as_deref(), state)
                    .map_err(nonconvergent)?;
            r = r2;
            k = k2;
            diags = d2;
            norm = norm_inf(&fm.reduce_vec(&r));
        }
        if debug {
            let (mut worst, mut wdof) = (0.0, 0);
            for (d, &v) in r.iter().enumerate() {
                if fm.to_free[d].is_some() && v.abs() > worst {
                    worst = v.abs();
                    wdof = d;
                }
            }
            let mut loc = None;
            'outer: for nd in 0..model.xfem.mesh.n_nodes() {
                for phase in [crate::geometry::Phase::A, crate::geometry::Phase::B] {
                    for lv in 0..model.xfem.enr.node_levels[nd][phase.idx()].len() {
                        for c in 0..2 {
                            if model.xfem.dofs.dof(nd, phase, lv, c) == wdof {
                                loc = Some((nd, phase, lv, c));
                                break 'outer;
                            }
                        }
                    }
                }
            }
            let coord = loc.map(|(nd, ..)| model.xfem.mesh.coord(nd));
            eprintln!(
                "step {step} iter {iter}: norm {norm:.6e} (target {:.3e}) beta {beta:.1e} pairs {} active {} worst_dof {wdof} {loc:?} at {coord:?}",
                spec.tol * f_ref,
                diags.pairs.len(),
                diags.pairs.iter().filter(|p| p.active).count()
            );
        }
        if norm <= spec.tol * f_ref {
            return Ok((iter, beta, diags));
        }
        let rf = fm.reduce_vec(&r);
        let kf = fm.reduce_mat(&k);
        let diag = kf.diagonal();
        // damped solve with rejection: grow beta until the step reduces
        // the residual
        let mut accepted = false;
        while !accepted {
            let lu = kf.factor_damped(beta, &diag).map_err(nonconvergent)?;
            let du = lu.solve(&rf);
            let mut trial = state.to_vec();
            fm.scatter_add(&du, &mut trial, -1.0);
            match assemble_frozen(contact.as_deref(), frozen.as_deref(), &trial) {
                Ok((r2, k2, d2)) => {
                    let norm2 = norm_inf(&fm.reduce_vec(&r2));
                    if norm2 < norm || norm2 <= spec.tol * f_ref {
                        state.copy_from_slice(&trial);
                        r = r2;
                        k = k2;
                        diags = d2;
                        norm = norm2;
                        beta = (beta / 10.0).max(1e-14);
                        accepted = true;
                        continue;
                    }
                }
                Err(_) => {}
            }
            // the frozen pairing can pin the iterate at an artificial
            // residual minimum when a pair should enter or leave the
            // search; once heavily damped trials keep failing, rejudge
            // the trial against a freshly paired residual
            if beta >= 1e3 {
                if let Ok((r2, k2, d2)) = assemble(contact.as_deref(), &trial) {
                    let norm2 = norm_inf(&fm.reduce_vec(&r2));
                    if norm2 < norm {
                        state.copy_from_slice(&trial);
                        r = r2;
                        k = k2;
                        diags = d2;
                        norm = norm2;
                        beta = (beta / 10.0).max(1e-14);
                        accepted = true;
                        continue;
                    }
                }
            }
            beta *= 10.0;
            if beta > 1e10 {
                // descent exhausted; accept if the residual is already at
                // the non-smooth floor just above the target (kinks from
                // boundary-clipped pairs block the last digits)
                if norm <= 10.0 * spec.tol * f_ref {
                    return Ok((iter, beta, diags));
                }
                return Err(Error::NonConvergence { step, residual: norm, iters: iter });
            }
        }
    }
    if norm <= 10.0 * spec.tol * f_ref {
        return Ok((spec.max_iters, beta, diags));
    }
    Err(Error::NonConvergence { step, residual: norm, iters: spec.max_iters })
}

fn nonconvergent(e: Error) -> Error {
    match e {
        Error::ElementInversion { det_f, .. } => {
            Error::NonConvergence { step: 0, residual: det_f, iters: 0 }
        }
        other => other,
    }
}

/// Advance from the current state to pseudo-time `t1`, bisecting the
/// increment recursively on nonconvergence.
#[allow(clippy::too_many_arguments)]
fn advance(
    model: &Model,
    contact: &mut Option<ContactSystem>,
    state: &mut Vec<f64>,
    t0: f64,
    t1: f64,
    step: usize,
    level: usize,
    spec: &SolverSpec,
    total_iters: &mut usize,
    n_solves: &mut usize,
    step_iters: &mut usize,
) -> Result<(ContactDiagnostics, f64)> {
    let mut trial = state.clone();
    match newton(model, contact.as_mut(), &mut trial, t1, step, spec) {
        Ok((iters, beta, diags)) => {
            *state = trial;
            *total_iters += iters;
            *n_solves += 1;
            *step_iters += iters;
            Ok((diags, beta))
        }
        Err(Error::NonConvergence { .. }) if level < spec.max_bisect => {
            let tm = 0.5 * (t0 + t1);
            advance(
                model, contact, state, t0, tm, step, level + 1, spec, total_iters, n_solves,
                step_iters,
            )?;
            advance(
                model, contact, state, tm, t1, step, level + 1, spec, total_iters, n_solves,
                step_iters,
            )
        }
        Err(e) => Err(e),
    }
}

/// Run the full incremental solve. A contact system is built when the
/// model has a two-phase interface.
pub fn solve(model: &Model, spec: &SolverSpec) -> Result<SolveHistory> {
    let mut contact = {
        let cs = ContactSystem::new(&model.xfem, &model.materials)?;
        if cs.has_interface() {
            Some(cs)
        } else {
            None
        }
    };
    let mut state = vec![0.0; model.n_dofs()];
    let mut steps = Vec::with_capacity(spec.n_steps);
    let mut total_iters = 0;
    let mut n_solves = 0;
    for k in 1..=spec.n_steps {
        let t0 = (k - 1) as f64 / spec.n_steps as f64;
        let t1 = k as f64 / spec.n_steps as f64;
        let mut step_iters = 0;
        let (diags, beta) = advance(
            model,
            &mut contact,
            &mut state,
            t0,
            t1,
            k,
            0,
            spec,
            &mut total_iters,
            &mut n_solves,
            &mut step_iters,
        )?;
        // internal force = residual + external loads
        let mut r_int = {
            let mut r = vec![0.0; model.n_dofs()];
            let (rb, _kb) = model.assemble_bulk(&state, t1)?;
            r.copy_from_slice(&rb);
            r
        };
        let f_ext = model.external_loads(t1)?;
        for (ri, fe) in r_int.iter_mut().zip(&f_ext) {
            *ri += fe;
        }
        if let Some(cs) = &contact {
            cs.residual_only(&model.xfem, &state, &model.materials, &mut r_int)?;
        }
        steps.push(StepRecord {
            t: t1,
            iters: step_iters,
            beta,
            state: state.clone(),
            r_int,
            active: contact.as_ref().map(|c| c.active.clone()).unwrap_or_default(),
            contact: diags,
        });
    }
    Ok(SolveHistory { steps, total_iters, n_solves })
}
