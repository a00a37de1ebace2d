//! Batch entry point: preset problem definitions, run modes (forward,
//! sweep, gradcheck, optimize), and artifact export (CSV traces, field
//! snapshots, optimization history).

pub mod design;
pub mod presets;

pub use design::{DesignMap, PresetOpt, PrimFamily};
pub use presets::{
    build_problem, rebuild, DesignControl, GeometrySpec, ObjectiveSpec, Preset,
    Problem, PRESET_NAMES,
};

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::contact::ContactSystem;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::optimizer::{optimize, MmaConfig};
use crate::sensitivity::{
    gradient_wrt_phi, interface_nodes, DesignField, FdSpec, TargetCurve,
};
use crate::solver::{solve, SolveHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Forward,
    Sweep,
    Gradcheck,
    Optimize,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s.to_ascii_lowercase().as_str() {
            "forward" => Ok(Mode::Forward),
            "sweep" => Ok(Mode::Sweep),
            "gradcheck" => Ok(Mode::Gradcheck),
            "optimize" => Ok(Mode::Optimize),
            other => Err(Error::config(format!(
                "unknown mode `{other}` (forward, sweep, gradcheck, optimize)"
            ))),
        }
    }
}

pub struct RunConfig {
    pub preset: Preset,
    pub mode: Mode,
    pub out: Option<PathBuf>,
}

/// Execute a run; the returned code follows the CLI contract
/// (0 success, 4 gradient-check failure; config and solve errors
/// surface as `Err`).
pub fn run(cfg: &RunConfig) -> Result<i32> {
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("run_config.echo"), cfg.preset.to_toml()?)?;
    }
    match cfg.mode {
        Mode::Forward => {
            let problem = build_problem(&cfg.preset)?;
            let hist = solve(&problem.model, &cfg.preset.solver_spec())?;
            if let Some(out) = &cfg.out {
                export_forward(&problem, &hist, out)?;
            }
            Ok(0)
        }
        Mode::Sweep => {
            let table = radius_sweep(&cfg.preset, 20)?;
            let mut failed = false;
            if let Some(out) = &cfg.out {
                let mut s = String::from("radius_m,objective\n");
                for (r, z) in &table {
                    match z {
                        Some(z) => s.push_str(&format!("{r:.6},{z:.10e}\n")),
                        None => {
                            failed = true;
                            s.push_str(&format!("{r:.6},failed\n"));
                        }
                    }
                }
                fs::write(out.join("sweep.csv"), s)?;
            } else {
                failed = table.iter().any(|(_, z)| z.is_none());
            }
            Ok(if failed { 3 } else { 0 })
        }
        Mode::Gradcheck => {
            let check = gradcheck(&cfg.preset)?;
            if let Some(out) = &cfg.out {
                let mut s = String::from("perturbation,fd,adjoint,rel_error\n");
                for row in &check.rows {
                    s.push_str(&format!(
                        "{:.3e},{:.10e},{:.10e},{:.3e}\n",
                        row.delta, row.g_fd, check.g_adjoint, row.rel_error
                    ));
                }
                fs::write(out.join("gradcheck.csv"), s)?;
            }
            Ok(if check.passed() { 0 } else { 4 })
        }
        Mode::Optimize => {
            let problem = build_problem(&cfg.preset)?;
            run_optimize(&problem, cfg.out.as_deref())?;
            Ok(0)
        }
    }
}

// ---- forward artifacts -----------------------------------------------

/// Applied boundary magnitude at pseudo-time `t` (displacement,
/// rotation angle, or load factor).
pub fn applied_magnitude(preset: &Preset, t: f64) -> f64 {
    if let Some(u) = preset.applied_displacement_m {
        (u[0] * u[0] + u[1] * u[1]).sqrt() * t
    } else if let Some(th) = preset.applied_rotation_rad {
        th * t
    } else {
        t
    }
}

/// Target-curve value of tracking presets at pseudo-time `t`.
pub fn target_value(preset: &Preset, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::config(format!("pseudo-time {t} outside [0, 1]")));
    }
    let curve = match &preset.objective {
        ObjectiveSpec::ForceTracking { amp_n, omega, .. } => {
            TargetCurve::Sine { amp: *amp_n, omega: *omega }
        }
        ObjectiveSpec::TorqueTracking { amp_nm, omega, .. } => {
            TargetCurve::Sine { amp: *amp_nm, omega: *omega }
        }
        ObjectiveSpec::TorqueSmoothStep { amp_nm, .. } => {
            TargetCurve::SmoothStep { amp: *amp_nm }
        }
        _ => return Err(Error::config("preset has no tracking target")),
    };
    Ok(curve.eval(t))
}

pub fn export_forward(problem: &Problem, hist: &SolveHistory, out: &Path) -> Result<()> {
    let preset = &problem.preset;
    let model = &problem.model;
    let sym = preset.sym_factor();

    let mut trace =
        String::from("step,t,applied,reaction_fx,reaction_fy,torque,newton_iters,beta\n");
    for (k, step) in hist.steps.iter().enumerate() {
        let f = model.reaction(&problem.report_set, &step.r_int)?;
        let torque = match problem.torque_center {
            Some(c) => {
                model.reaction_torque(&problem.report_set, c, &step.state, &step.r_int)?
            }
            None => 0.0,
        };
        trace.push_str(&format!(
            "{},{:.6},{:.6},{:.8e},{:.8e},{:.8e},{},{:.3e}\n",
            k + 1,
            step.t,
            applied_magnitude(preset, step.t),
            sym * f[0],
            sym * f[1],
            sym * torque,
            step.iters,
            step.beta,
        ));
    }
    fs::write(out.join("trace.csv"), trace)?;

    let mut diag = String::from(
        "step,pair,master,slave,a1,a2,g_min,g_max,lambda_min,lambda_max,active\n",
    );
    for (k, step) in hist.steps.iter().enumerate() {
        for (i, p) in step.contact.pairs.iter().enumerate() {
            diag.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6e},{:.6e},{:.6e},{:.6e},{}\n",
                k + 1,
                i,
                p.master,
                p.slave,
                p.a1,
                p.a2,
                p.g_min,
                p.g_max,
                p.lambda_min,
                p.lambda_max,
                p.active as u8
            ));
        }
    }
    fs::write(out.join("contact_diag.csv"), diag)?;

    let fields = out.join("fields");
    fs::create_dir_all(&fields)?;
    let every = preset.snapshot_every.max(1);
    for (k, step) in hist.steps.iter().enumerate() {
        if (k + 1) % every == 0 || k + 1 == hist.steps.len() {
            write_vtk(model, &step.state, &fields.join(format!("step_{:04}.vtk", k + 1)))?;
        }
    }
    Ok(())
}

/// Legacy-VTK structured grid snapshot with level sets and the
/// displacement of the locally dominant phase (zero in void).
pub fn write_vtk(model: &Model, state: &[f64], path: &Path) -> Result<()> {
    let mesh = &model.xfem.mesh;
    let n = mesh.n_nodes();
    let mut f = fs::File::create(path)?;
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "level-set contact fields")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET STRUCTURED_GRID")?;
    writeln!(f, "DIMENSIONS {} {} 1", mesh.nx + 1, mesh.ny + 1)?;
    writeln!(f, "POINTS {n} double")?;
    for x in mesh.coords() {
        writeln!(f, "{:.8} {:.8} 0.0", x[0], x[1])?;
    }
    writeln!(f, "POINT_DATA {n}")?;
    writeln!(f, "SCALARS phi1 double 1")?;
    writeln!(f, "LOOKUP_TABLE default")?;
    for v in &model.phi1 {
        writeln!(f, "{v:.8e}")?;
    }
    if let Some(phi2) = &model.phi2 {
        writeln!(f, "SCALARS phi2 double 1")?;
        writeln!(f, "LOOKUP_TABLE default")?;
        for v in phi2 {
            writeln!(f, "{v:.8e}")?;
        }
    }
    writeln!(f, "VECTORS displacement double")?;
    for nd in 0..n {
        let x = mesh.coord(nd);
        let e = mesh.elem_of_point(x);
        let u = model
            .xfem
            .interpolate_displacement(e, x, state)
            .unwrap_or([0.0, 0.0]);
        writeln!(f, "{:.8e} {:.8e} 0.0", u[0], u[1])?;
    }
    Ok(())
}

// ---- derived measures ------------------------------------------------

/// Time-integrated normal-penetration L2 error over active contact
/// pairs, normalized by the reference interface length.
pub fn penetration_l2(problem: &Problem, hist: &SolveHistory) -> Result<f64> {
    let cs = ContactSystem::new(&problem.model.xfem, &problem.model.materials)?;
    let total_len: f64 = cs.masters.iter().map(|m| m.len0()).sum();
    if total_len == 0.0 {
        return Err(Error::config("model has no contact interface"));
    }
    let n = hist.steps.len() as f64;
    let mut num = 0.0;
    for step in &hist.steps {
        let dt = 1.0 / n;
        for p in &step.contact.pairs {
            if !p.active {
                continue;
            }
            let len = (p.a2 - p.a1) * cs.masters[p.master].len0();
            // two-point quadrature values are the pair's min and max
            num += dt * 0.5 * len * (p.g_min * p.g_min + p.g_max * p.g_max);
        }
    }
    Ok((num / total_len).sqrt())
}

/// Total reported contact force magnitude at the final step.
pub fn final_reaction(problem: &Problem, hist: &SolveHistory) -> Result<[f64; 2]> {
    let step = hist
        .steps
        .last()
        .ok_or_else(|| Error::config("history has no steps"))?;
    let f = problem.model.reaction(&problem.report_set, &step.r_int)?;
    let s = problem.preset.sym_factor();
    Ok([s * f[0], s * f[1]])
}

// ---- sweep and gradient check ----------------------------------------

fn preset_with_radius(preset: &Preset, r: f64) -> Result<Preset> {
    let mut p = preset.clone();
    match &mut p.geometry {
        GeometrySpec::Inclusion { interface_radius_m, .. } => *interface_radius_m = r,
        _ => {
            return Err(Error::config(
                "radius sweep requires the inclusion geometry",
            ))
        }
    }
    Ok(p)
}

/// Objective over a radius grid in [0.191, 0.375]; `None` marks solve
/// failures.
pub fn radius_sweep(preset: &Preset, n_points: usize) -> Result<Vec<(f64, Option<f64>)>> {
    let (lo, hi) = (0.191, 0.375);
    let radii: Vec<f64> = (0..n_points)
        .map(|i| lo + (hi - lo) * i as f64 / (n_points - 1) as f64)
        .collect();
    let rows = crate::par::map_indexed(&radii, |_, &r| -> Result<Option<f64>> {
        let p = preset_with_radius(preset, r)?;
        let problem = build_problem(&p)?;
        let obj = problem
            .objective
            .as_ref()
            .ok_or_else(|| Error::config("sweep preset has no objective"))?;
        match solve(&problem.model, &p.solver_spec()) {
            Ok(hist) => Ok(Some(obj.eval(&problem.model, &hist)?)),
            Err(Error::NonConvergence { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    });
    radii
        .into_iter()
        .zip(rows)
        .map(|(r, z)| z.map(|z| (r, z)))
        .collect()
}

pub struct GradcheckRow {
    pub delta: f64,
    pub g_fd: f64,
    pub rel_error: f64,
}

pub struct Gradcheck {
    pub g_adjoint: f64,
    pub rows: Vec<GradcheckRow>,
}

impl Gradcheck {
    fn row(&self, delta: f64) -> Option<&GradcheckRow> {
        self.rows
            .iter()
            .find(|r| (r.delta / delta - 1.0).abs() < 1e-9)
    }

    /// Plateau agreement at moderate perturbations, with round-off
    /// degradation at the smallest one.
    pub fn passed(&self) -> bool {
        let plateau = [1e-7, 1e-6, 1e-5]
            .iter()
            .all(|&d| self.row(d).is_some_and(|r| r.rel_error <= 1e-5));
        let roundoff = match (self.row(1e-12), self.row(1e-7)) {
            (Some(a), Some(b)) => a.rel_error > b.rel_error,
            _ => false,
        };
        plateau && roundoff
    }
}

/// Compare the adjoint radius derivative against central differences of
/// the full solve over a range of perturbation sizes. Requires the
/// inclusion geometry (the radius enters every nodal level-set value
/// with unit sensitivity).
pub fn gradcheck(preset: &Preset) -> Result<Gradcheck> {
    let GeometrySpec::Inclusion { interface_radius_m: r1, .. } = preset.geometry else {
        return Err(Error::config("gradcheck requires the inclusion geometry"));
    };
    let problem = build_problem(preset)?;
    let obj = problem
        .objective
        .as_ref()
        .ok_or_else(|| Error::config("gradcheck preset has no objective"))?;
    let spec = preset.solver_spec();
    let hist = solve(&problem.model, &spec)?;
    let g = gradient_wrt_phi(&problem.model, &hist, obj, DesignField::Phi1, FdSpec::default())?;
    // dphi_i/dr = 1 at every node; restrict to interface nodes (all
    // others carry zero by construction)
    let g_adjoint: f64 = interface_nodes(&problem.model)
        .iter()
        .map(|&i| g.dz[i])
        .sum();

    let z_at = |r: f64| -> Result<f64> {
        let p = preset_with_radius(preset, r)?;
        let prob = build_problem(&p)?;
        let hist = solve(&prob.model, &spec)?;
        p.objective_of(&prob)?.eval(&prob.model, &hist)
    };
    let deltas: Vec<f64> = (2..=12).map(|k| 10f64.powi(-k)).collect();
    let rows = crate::par::map_indexed(&deltas, |_, &d| -> Result<GradcheckRow> {
        let g_fd = (z_at(r1 + d)? - z_at(r1 - d)?) / (2.0 * d);
        let rel_error = ((g_fd - g_adjoint) / g_adjoint).abs();
        Ok(GradcheckRow { delta: d, g_fd, rel_error })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Gradcheck { g_adjoint, rows })
}

impl Preset {
    fn objective_of(&self, problem: &Problem) -> Result<crate::sensitivity::Objective> {
        problem
            .objective
            .clone()
            .ok_or_else(|| Error::config("preset has no objective"))
    }
}

// ---- optimization driver ---------------------------------------------

pub struct OptimizeOutcome {
    pub history: crate::optimizer::OptHistory,
    pub rows: Vec<design::IterateRow>,
    pub z0: f64,
    pub p0: f64,
}

pub fn run_optimize(problem: &Problem, out: Option<&Path>) -> Result<OptimizeOutcome> {
    let preset = &problem.preset;
    let mut opt = PresetOpt::new(problem)?;
    let cfg = MmaConfig {
        rel_step: preset.rel_step_size,
        max_outer: preset.max_outer_iters,
        ..Default::default()
    };
    let history = optimize(&mut opt, &cfg)?;
    let z0 = opt.z0.unwrap_or(1.0);
    let p0 = opt.p0.unwrap_or(1.0);
    let rows: Vec<design::IterateRow> =
        opt.accepted.iter().map(|(_, r)| r.clone()).collect();

    if let Some(out) = out {
        fs::create_dir_all(out)?;
        let mut s = String::from(
            "iterate,q,z_over_z0,p_over_p0,constraint,design_change,inner_iters\n",
        );
        let mut prev: Option<&[f64]> = None;
        for (k, it) in history.iterates.iter().enumerate() {
            let change = prev
                .map(|p| {
                    it.design
                        .iter()
                        .zip(p)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max)
                })
                .unwrap_or(f64::NAN);
            let row = rows.get(k);
            s.push_str(&format!(
                "{},{:.8e},{:.8e},{:.8e},{:.8e},{:.4e},{}\n",
                k,
                it.objective,
                row.map_or(f64::NAN, |r| r.z / z0),
                row.map_or(f64::NAN, |r| r.perim / p0),
                it.constraints.first().copied().unwrap_or(0.0),
                change,
                it.inner_iters
            ));
            prev = Some(&it.design);
        }
        fs::write(out.join("opt_history.csv"), s)?;

        let every = preset.snapshot_every.max(1);
        for (k, it) in history.iterates.iter().enumerate() {
            if (k + 1) % every == 0 || k + 1 == history.iterates.len() {
                let mut s = String::from("variable,value\n");
                for (j, v) in it.design.iter().enumerate() {
                    s.push_str(&format!("{j},{v:.12e}\n"));
                }
                fs::write(out.join(format!("design_{k:04}.csv")), s)?;
            }
        }
        if let Some(last) = history.iterates.last() {
            let (model, hist) = opt.forward(&last.design)?;
            write_vtk(&model, hist.final_state(), &out.join("final_design.vtk"))?;
        }
    }
    Ok(OptimizeOutcome { history, rows, z0, p0 })
}
