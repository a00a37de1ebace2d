//! Built-in example problems: serializable parameter sets plus the
//! builders that turn them into discretized models, solver settings,
//! objectives, and design parameterizations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{classify_phases_raw, FilterSpec, LevelSetField, Phase, Primitive};
use crate::mechanics::{lame_from_engineering, GhostPenaltySpec};
use crate::mesh::{Mesh, Side};
use crate::model::{DirichletSpec, Model, Program, TractionSpec};
use crate::sensitivity::{Objective, TargetCurve};
use crate::solver::SolverSpec;
use crate::xfem::XfemModel;

pub const PRESET_NAMES: [&str; 7] = [
    "benchmark",
    "sensverify",
    "anchor",
    "snapfit2p",
    "snapfit3p",
    "torque2p",
    "torque3p",
];

/// Interface geometry families, one per example.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GeometrySpec {
    /// Two stacked blocks meeting on a circular arc. The arc has its
    /// lowest point at `(sag_x_m, sag_y_m)` and curves upward; the upper
    /// block is phase A.
    Arc { radius_m: f64, sag_x_m: f64, sag_y_m: f64 },
    /// Circular phase-B inclusion centered in the domain, held within an
    /// inner fixed core.
    Inclusion { interface_radius_m: f64, fixed_radius_m: f64 },
    /// Anchor lattice (phase B) embedded in a host (phase A), modeled on
    /// the half domain with the symmetry plane at the top edge. The
    /// lattice layout is a generator: base block, spine, bottom chord,
    /// tip post, and a diagonal zigzag of bar thickness `bar_m`.
    AnchorLattice {
        host_depth_m: f64,
        lattice_length_m: f64,
        lattice_width_m: f64,
        cuboid_length_m: f64,
        base_width_m: f64,
        support_width_m: f64,
        bar_m: f64,
    },
    /// Snap-fit tab profile (phase B) on the half domain, symmetry plane
    /// at the bottom edge; `s_m = [tip, peak offset, base offset, peak
    /// height, base height]`.
    SnapFitTab { s_m: [f64; 5], support_height_m: f64 },
    /// Snap-fit tab with three elliptical void regions on the symmetry
    /// axis.
    SnapFitTabVoids {
        s_m: [f64; 5],
        support_height_m: f64,
        void_x_m: [f64; 3],
        void_rx_m: f64,
        void_ry12_m: f64,
        void_ry3_m: f64,
    },
    /// Circular rod (phase B) inside a grounded square shaft, driven by
    /// a rigid rotation within `loading_radius_m`.
    Rod { interface_radius_m: f64, loading_radius_m: f64 },
    /// Sine-radius rod with radial void petals.
    RodPetals {
        base_radius_m: f64,
        amplitude_m: f64,
        phase_rad: f64,
        n_ridges: u32,
        loading_radius_m: f64,
        petal_base_m: f64,
        petal_height_m: f64,
        petal_width_m: f64,
        petal_sway_m: f64,
        n_petals: u32,
    },
}

/// How optimization variables drive the level-set fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DesignControl {
    None,
    /// One variable per mesh node, mapped through the linear filter.
    /// Initial values are the initial field clamped to the bounds.
    Nodal {
        lower: f64,
        upper: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        filter_radius_m: Option<f64>,
    },
    /// Geometric-primitive parameters.
    Primitives {
        names: Vec<String>,
        initial: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

/// Objective families; scales carry the symmetry factor and unit
/// conversion, signs are fixed so improvement decreases the value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ObjectiveSpec {
    None,
    PointDisplacement { point_m: [f64; 2], dir: usize, target_m: f64, scale: f64 },
    AnchorForce { offset: f64, scale: f64 },
    ForceTracking { amp_n: f64, omega: f64, scale: f64 },
    TorqueTracking { amp_nm: f64, omega: f64, scale: f64 },
    TorqueSmoothStep { amp_nm: f64, scale: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub mesh: [usize; 2],
    pub domain_m: [f64; 2],
    pub symmetric: bool,
    pub n_steps: usize,
    pub newton_tol: f64,
    pub young_modulus_a_pa: f64,
    pub young_modulus_b_pa: f64,
    pub poisson_ratio_a: f64,
    pub poisson_ratio_b: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub applied_displacement_m: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub applied_rotation_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traction_pa_per_m: Option<[f64; 2]>,
    pub response_weight_cu: f64,
    pub penalty_weight_cp: f64,
    pub volume_ratio_cv: f64,
    pub rel_step_size: f64,
    pub max_outer_iters: usize,
    pub snapshot_every: usize,
    pub geometry: GeometrySpec,
    pub design: DesignControl,
    pub objective: ObjectiveSpec,
}

impl Preset {
    pub fn named(name: &str) -> Result<Preset> {
        match name.to_ascii_lowercase().as_str() {
            "benchmark" => Ok(benchmark()),
            "sensverify" => Ok(sensverify()),
            "anchor" => Ok(anchor()),
            "snapfit2p" => Ok(snapfit2p()),
            "snapfit3p" => Ok(snapfit3p()),
            "torque2p" => Ok(torque2p()),
            "torque3p" => Ok(torque3p()),
            other => Err(Error::config(format!(
                "unknown preset `{other}`; available: {}",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    /// Apply a `key=value` override to a named scalar parameter.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| {
                Error::config(format!("override {key}: cannot parse `{v}`"))
            })
        }
        match key {
            "n_steps" => self.n_steps = parse(key, value)?,
            "newton_tol" => self.newton_tol = parse(key, value)?,
            "mesh_nx" => self.mesh[0] = parse(key, value)?,
            "mesh_ny" => self.mesh[1] = parse(key, value)?,
            "response_weight_cu" => self.response_weight_cu = parse(key, value)?,
            "penalty_weight_cp" => self.penalty_weight_cp = parse(key, value)?,
            "volume_ratio_cv" => self.volume_ratio_cv = parse(key, value)?,
            "rel_step_size" => self.rel_step_size = parse(key, value)?,
            "max_outer_iters" => self.max_outer_iters = parse(key, value)?,
            "snapshot_every" => self.snapshot_every = parse(key, value)?,
            "applied_displacement_x" => {
                let u = self
                    .applied_displacement_m
                    .as_mut()
                    .ok_or_else(|| Error::config("preset has no applied displacement"))?;
                u[0] = parse(key, value)?;
            }
            "applied_rotation_rad" => {
                if self.applied_rotation_rad.is_none() {
                    return Err(Error::config("preset has no applied rotation"));
                }
                self.applied_rotation_rad = Some(parse(key, value)?);
            }
            other => {
                return Err(Error::config(format!(
                    "unknown override key `{other}` (known: n_steps, newton_tol, \
                     mesh_nx, mesh_ny, response_weight_cu, penalty_weight_cp, \
                     volume_ratio_cv, rel_step_size, max_outer_iters, \
                     snapshot_every, applied_displacement_x, applied_rotation_rad)"
                )))
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("preset serialization: {e}")))
    }

    pub fn sym_factor(&self) -> f64 {
        if self.symmetric {
            2.0
        } else {
            1.0
        }
    }

    pub fn solver_spec(&self) -> SolverSpec {
        SolverSpec {
            n_steps: self.n_steps,
            tol: self.newton_tol,
            ..Default::default()
        }
    }
}

fn base(name: &str) -> Preset {
    Preset {
        name: name.into(),
        mesh: [20, 20],
        domain_m: [1.0, 1.0],
        symmetric: false,
        n_steps: 10,
        newton_tol: 1e-6,
        young_modulus_a_pa: 10e6,
        young_modulus_b_pa: 10e6,
        poisson_ratio_a: 0.3,
        poisson_ratio_b: 0.3,
        applied_displacement_m: None,
        applied_rotation_rad: None,
        traction_pa_per_m: None,
        response_weight_cu: 1.0,
        penalty_weight_cp: 0.0,
        volume_ratio_cv: 1.0,
        rel_step_size: 8e-3,
        max_outer_iters: 200,
        snapshot_every: 10,
        geometry: GeometrySpec::Arc { radius_m: 1.2, sag_x_m: 0.5, sag_y_m: 0.5 },
        design: DesignControl::None,
        objective: ObjectiveSpec::None,
    }
}

fn benchmark() -> Preset {
    Preset {
        mesh: [21, 21],
        n_steps: 50,
        newton_tol: 1e-9,
        applied_displacement_m: Some([0.5, 0.0]),
        geometry: GeometrySpec::Arc { radius_m: 1.2, sag_x_m: 0.5, sag_y_m: 0.5 },
        ..base("benchmark")
    }
}

fn sensverify() -> Preset {
    Preset {
        mesh: [20, 20],
        n_steps: 2,
        newton_tol: 1e-9,
        traction_pa_per_m: Some([10e3, 0.0]),
        geometry: GeometrySpec::Inclusion {
            interface_radius_m: 0.275,
            fixed_radius_m: 0.125,
        },
        objective: ObjectiveSpec::PointDisplacement {
            point_m: [0.9, 0.5],
            dir: 0,
            target_m: 2.7731e-2,
            scale: 1e4,
        },
        ..base("sensverify")
    }
}

fn anchor() -> Preset {
    Preset {
        mesh: [120, 60],
        domain_m: [1.0, 0.5],
        symmetric: true,
        n_steps: 2,
        applied_displacement_m: Some([0.01, 0.0]),
        response_weight_cu: 75.0,
        penalty_weight_cp: 25.0,
        volume_ratio_cv: 0.5,
        rel_step_size: 8e-3,
        geometry: GeometrySpec::AnchorLattice {
            host_depth_m: 0.175,
            lattice_length_m: 0.715,
            lattice_width_m: 0.523,
            cuboid_length_m: 0.0833,
            base_width_m: 0.2,
            support_width_m: 0.133,
            bar_m: 0.038,
        },
        design: DesignControl::Nodal {
            lower: -8.33e-3,
            upper: 8.33e-3,
            filter_radius_m: Some(0.0375),
        },
        // offset/scale in kN; the factor 2 reports the full domain from
        // the half model, the sign makes a stronger anchor decrease z
        objective: ObjectiveSpec::AnchorForce { offset: 100.0, scale: -2.0e-3 },
        ..base("anchor")
    }
}

fn snapfit2p() -> Preset {
    let h = 1.0 / 48.0;
    Preset {
        mesh: [48, 24],
        domain_m: [1.0, 0.5],
        symmetric: true,
        n_steps: 45,
        applied_displacement_m: Some([0.5, 0.0]),
        response_weight_cu: 100.0,
        penalty_weight_cp: 0.0,
        volume_ratio_cv: 1.0,
        rel_step_size: 8e-3,
        geometry: GeometrySpec::SnapFitTab {
            s_m: [0.151, 0.4, 0.9, 0.25, 0.16],
            support_height_m: 0.133,
        },
        design: DesignControl::Nodal {
            lower: -0.0125,
            upper: 0.0125,
            filter_radius_m: Some(3.0 * h),
        },
        objective: ObjectiveSpec::ForceTracking {
            amp_n: 1.0e3,
            omega: 1.5 * std::f64::consts::PI,
            scale: 2.0,
        },
        ..base("snapfit2p")
    }
}

fn snapfit3p() -> Preset {
    Preset {
        mesh: [80, 40],
        domain_m: [1.0, 0.5],
        symmetric: true,
        n_steps: 45,
        applied_displacement_m: Some([0.6, 0.0]),
        response_weight_cu: 99.9,
        penalty_weight_cp: 0.1,
        volume_ratio_cv: 0.15,
        rel_step_size: 4e-4,
        geometry: GeometrySpec::SnapFitTabVoids {
            s_m: [0.151, 0.4, 0.9, 0.2451, 0.16],
            support_height_m: 0.133,
            void_x_m: [0.4, 0.6, 0.8],
            void_rx_m: 0.07,
            void_ry12_m: 0.07,
            void_ry3_m: 0.035,
        },
        design: DesignControl::Primitives {
            names: vec![
                "host_depth".into(),
                "peak_width_location".into(),
                "base_width_location".into(),
                "peak_height".into(),
                "base_height".into(),
                "void1_x".into(),
                "void2_x".into(),
                "void3_x".into(),
                "void_rx".into(),
                "void12_ry".into(),
                "void3_ry".into(),
            ],
            initial: vec![
                0.151, 0.4, 0.9, 0.2451, 0.16, 0.4, 0.6, 0.8, 0.07, 0.07, 0.035,
            ],
            lower: vec![0.1, 0.25, 0.8, 0.15, 0.04, 0.25, 0.25, 0.25, 0.02, 0.02, 0.02],
            upper: vec![0.3, 0.7, 1.0, 0.4, 0.25, 0.85, 0.85, 0.85, 0.3, 0.2, 0.06],
        },
        objective: ObjectiveSpec::ForceTracking {
            amp_n: 0.5e3,
            omega: 1.5 * std::f64::consts::PI,
            scale: 2.0,
        },
        ..base("snapfit3p")
    }
}

fn torque2p() -> Preset {
    let h = 1.0 / 41.0;
    Preset {
        mesh: [41, 41],
        n_steps: 30,
        applied_rotation_rad: Some(std::f64::consts::FRAC_PI_2),
        response_weight_cu: 100.0,
        penalty_weight_cp: 0.01,
        volume_ratio_cv: 1.0,
        rel_step_size: 1e-2,
        geometry: GeometrySpec::Rod {
            interface_radius_m: 0.291,
            loading_radius_m: 0.12,
        },
        design: DesignControl::Nodal {
            lower: -0.0244,
            upper: 0.0244,
            filter_radius_m: Some(1.5 * std::f64::consts::SQRT_2 * h),
        },
        objective: ObjectiveSpec::TorqueTracking {
            amp_nm: 2.5e3,
            omega: std::f64::consts::TAU,
            scale: 1.0,
        },
        ..base("torque2p")
    }
}

fn torque3p() -> Preset {
    let quarter = std::f64::consts::FRAC_PI_4;
    let mut names = vec!["base_radius".into(), "amplitude".into(), "phase".into()];
    let mut initial = vec![0.271, 0.0, 0.0];
    let mut lower = vec![0.1, 0.0, -std::f64::consts::FRAC_PI_2];
    let mut upper = vec![0.4, 0.05, std::f64::consts::FRAC_PI_2];
    for j in 0..6 {
        let psi = j as f64 * std::f64::consts::PI / 3.0;
        names.push(format!("petal{j}_psi"));
        initial.push(psi);
        lower.push(psi - quarter);
        upper.push(psi + quarter);
    }
    names.push("petal_base".into());
    initial.push(0.15);
    lower.push(0.012);
    upper.push(0.3);
    for j in 0..6 {
        names.push(format!("petal{j}_height"));
        initial.push(0.04);
        lower.push(0.01);
        upper.push(0.1);
    }
    for j in 0..6 {
        names.push(format!("petal{j}_sway"));
        initial.push(0.0);
        lower.push(-0.1);
        upper.push(0.1);
    }
    for j in 0..6 {
        names.push(format!("petal{j}_width"));
        initial.push(0.1);
        lower.push(0.05);
        upper.push(0.3);
    }
    Preset {
        mesh: [41, 41],
        n_steps: 30,
        applied_rotation_rad: Some(std::f64::consts::FRAC_PI_3),
        response_weight_cu: 99.9,
        penalty_weight_cp: 0.1,
        volume_ratio_cv: 0.16,
        rel_step_size: 1e-2,
        geometry: GeometrySpec::RodPetals {
            base_radius_m: 0.271,
            amplitude_m: 0.0,
            phase_rad: 0.0,
            n_ridges: 4,
            loading_radius_m: 0.06,
            petal_base_m: 0.15,
            petal_height_m: 0.04,
            petal_width_m: 0.1,
            petal_sway_m: 0.0,
            n_petals: 6,
        },
        design: DesignControl::Primitives { names, initial, lower, upper },
        objective: ObjectiveSpec::TorqueSmoothStep { amp_nm: 5.20e3, scale: 1.0 },
        ..base("torque3p")
    }
}

// ---- geometry evaluation ---------------------------------------------

fn rect(x: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> f64 {
    let dx = (lo[0] - x[0]).max(x[0] - hi[0]);
    let dy = (lo[1] - x[1]).max(x[1] - hi[1]);
    dx.max(dy)
}

fn capsule(x: [f64; 2], a: [f64; 2], b: [f64; 2], r: f64) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [x[0] - a[0], x[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt() - r
}

impl GeometrySpec {
    /// Initial level-set fields sampled on the mesh nodes (before
    /// snapping). phi1 > 0 is phase B; phi2 < 0 is void.
    pub fn initial_phi(&self, mesh: &Mesh) -> (Vec<f64>, Option<Vec<f64>>) {
        match self {
            GeometrySpec::Arc { radius_m, sag_x_m, sag_y_m } => {
                let c = [*sag_x_m, sag_y_m + radius_m];
                let phi: Vec<f64> = mesh
                    .coords()
                    .iter()
                    .map(|x| {
                        ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt() - radius_m
                    })
                    .collect();
                (phi, None)
            }
            GeometrySpec::Inclusion { interface_radius_m, .. } => {
                let phi: Vec<f64> = mesh
                    .coords()
                    .iter()
                    .map(|x| {
                        interface_radius_m
                            - ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt()
                    })
                    .collect();
                (phi, None)
            }
            GeometrySpec::AnchorLattice {
                lattice_length_m: l3,
                lattice_width_m: l4,
                cuboid_length_m: l5,
                base_width_m: l6,
                bar_m: t,
                ..
            } => {
                let ytop = 0.5;
                let ybot = ytop - 0.5 * l4;
                let xtip = l5 + l3;
                let phi: Vec<f64> = mesh
                    .coords()
                    .iter()
                    .map(|&x| {
                        let mut d = rect(x, [0.0, ytop - 0.5 * l6], [*l5, ytop]);
                        d = d.min(rect(x, [0.0, ytop - 0.5 * t], [xtip, ytop]));
                        d = d.min(rect(x, [*l5, ybot], [xtip, ybot + t]));
                        d = d.min(rect(x, [xtip - t, ybot], [xtip, ytop]));
                        for k in 0..4 {
                            let xa = l5 + k as f64 * l3 / 4.0;
                            let xb = l5 + (k + 1) as f64 * l3 / 4.0;
                            let (ya, yb) = if k % 2 == 0 {
                                (ytop, ybot + 0.5 * t)
                            } else {
                                (ybot + 0.5 * t, ytop)
                            };
                            d = d.min(capsule(x, [xa, ya], [xb, yb], 0.5 * t));
                        }
                        -d
                    })
                    .collect();
                (phi, None)
            }
            GeometrySpec::SnapFitTab { s_m, .. } => {
                let p = Primitive::SnapFitProfile { s: *s_m };
                (p.sample(mesh, 1.0), None)
            }
            GeometrySpec::SnapFitTabVoids {
                s_m,
                void_x_m,
                void_rx_m,
                void_ry12_m,
                void_ry3_m,
                ..
            } => {
                let p = Primitive::SnapFitProfile { s: *s_m };
                let voids = Primitive::MinOf(vec![
                    Primitive::EllipseConic {
                        center: [void_x_m[0], 0.0],
                        rx: *void_rx_m,
                        ry: *void_ry12_m,
                    },
                    Primitive::EllipseConic {
                        center: [void_x_m[1], 0.0],
                        rx: *void_rx_m,
                        ry: *void_ry12_m,
                    },
                    Primitive::EllipseConic {
                        center: [void_x_m[2], 0.0],
                        rx: *void_rx_m,
                        ry: *void_ry3_m,
                    },
                ]);
                (p.sample(mesh, 1.0), Some(voids.sample(mesh, 1.0)))
            }
            GeometrySpec::Rod { interface_radius_m, .. } => {
                let phi: Vec<f64> = mesh
                    .coords()
                    .iter()
                    .map(|x| {
                        interface_radius_m
                            - ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt()
                    })
                    .collect();
                (phi, None)
            }
            GeometrySpec::RodPetals {
                base_radius_m,
                amplitude_m,
                phase_rad,
                n_ridges,
                petal_base_m,
                petal_height_m,
                petal_width_m,
                petal_sway_m,
                n_petals,
                ..
            } => {
                let rod = Primitive::SineRadiusCircle {
                    r: *base_radius_m,
                    a: *amplitude_m,
                    n: *n_ridges,
                    psi: *phase_rad,
                    center: [0.5, 0.5],
                    l1: 1.0,
                };
                let petals = Primitive::MinOf(
                    (0..*n_petals)
                        .map(|j| Primitive::Petal {
                            psi_v: j as f64 * std::f64::consts::TAU / *n_petals as f64,
                            h_b: *petal_base_m,
                            h_v: *petal_height_m,
                            a_v: *petal_sway_m,
                            w_v: *petal_width_m,
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

/// Fully assembled problem ready for the solver and drivers.
pub struct Problem {
    pub preset: Preset,
    pub model: Model,
    /// Dirichlet set whose reaction is reported and enters reaction
    /// objectives.
    pub report_set: String,
    pub torque_center: Option<[f64; 2]>,
    pub objective: Option<Objective>,
}

pub fn build_problem(preset: &Preset) -> Result<Problem> {
    let [nx, ny] = preset.mesh;
    let [lx, ly] = preset.domain_m;
    let mesh = Mesh::new(nx, ny, lx, ly, [0.0, 0.0])?;
    let (phi1, phi2) = preset.geometry.initial_phi(&mesh);
    let mut model = assemble_model(preset, mesh, phi1, phi2)?;
    let report_set = attach_boundary_conditions(preset, &mut model)?;
    let torque_center = match preset.geometry {
        GeometrySpec::Rod { .. } | GeometrySpec::RodPetals { .. } => Some([0.5, 0.5]),
        _ => None,
    };
    let objective = build_objective(preset, &report_set, torque_center);
    Ok(Problem { preset: preset.clone(), model, report_set, torque_center, objective })
}

/// Snap, classify, and assemble a model from nodal fields.
pub fn assemble_model(
    preset: &Preset,
    mesh: Mesh,
    phi1: Vec<f64>,
    phi2: Option<Vec<f64>>,
) -> Result<Model> {
    let mut f1 = LevelSetField::new(phi1);
    f1.snap(mesh.h);
    let phi2 = phi2.map(|p| {
        let mut f2 = LevelSetField::new(p);
        f2.snap(mesh.h);
        f2.phi
    });
    let pm = classify_phases_raw(&mesh, &f1.phi, phi2.as_deref())?;
    let xfem = XfemModel::build(&mesh, pm, &f1.phi, phi2.as_deref())?;
    let mat_a = lame_from_engineering(preset.young_modulus_a_pa, preset.poisson_ratio_a)?;
    let mat_b = lame_from_engineering(preset.young_modulus_b_pa, preset.poisson_ratio_b)?;
    Ok(Model::new(
        xfem,
        [mat_a, mat_b],
        GhostPenaltySpec::default(),
        f1.phi,
        phi2,
    ))
}

fn nodes_where(mesh: &Mesh, pred: impl Fn([f64; 2]) -> bool) -> Vec<usize> {
    (0..mesh.n_nodes())
        .filter(|&n| pred(mesh.coord(n)))
        .collect()
}

/// Install the Dirichlet sets and tractions for a preset; returns the
/// name of the reported reaction set.
fn attach_boundary_conditions(preset: &Preset, model: &mut Model) -> Result<String> {
    let mesh = &model.xfem.mesh;
    let u = preset.applied_displacement_m;
    match &preset.geometry {
        GeometrySpec::Arc { .. } => {
            let u = u.ok_or_else(|| Error::config("arc preset needs a displacement"))?;
            let top = mesh.side_nodes(Side::Top);
            let bottom = mesh.side_nodes(Side::Bottom);
            model.dirichlet.push(DirichletSpec {
                name: "top".into(),
                nodes: top,
                phase: None,
                program: Program::Translate([Some(u[0]), Some(u[1])]),
            });
            model.dirichlet.push(DirichletSpec {
                name: "bottom".into(),
                nodes: bottom,
                phase: None,
                program: Program::Fixed,
            });
            Ok("top".into())
        }
        GeometrySpec::Inclusion { fixed_radius_m, .. } => {
            let r2 = *fixed_radius_m;
            let core = nodes_where(mesh, |x| {
                ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt() <= r2
            });
            model.dirichlet.push(DirichletSpec {
                name: "core".into(),
                nodes: core,
                phase: Some(Phase::B),
                program: Program::Fixed,
            });
            model.dirichlet.push(DirichletSpec {
                name: "left".into(),
                nodes: mesh.side_nodes(Side::Left),
                phase: None,
                program: Program::Translate([None, Some(0.0)]),
            });
            let t0 = preset
                .traction_pa_per_m
                .ok_or_else(|| Error::config("inclusion preset needs a traction"))?;
            model.tractions.push(TractionSpec { side: Side::Right, t0 });
            Ok("core".into())
        }
        GeometrySpec::AnchorLattice { support_width_m, .. } => {
            let u = u.ok_or_else(|| Error::config("anchor preset needs a displacement"))?;
            let half_sup = 0.5 * support_width_m;
            let ytop = preset.domain_m[1];
            let support = nodes_where(mesh, |x| {
                x[0] <= 1e-12 && x[1] >= ytop - half_sup
            });
            model.dirichlet.push(DirichletSpec {
                name: "anchor".into(),
                nodes: support,
                phase: Some(Phase::B),
                program: Program::Fixed,
            });
            let mut host = mesh.side_nodes(Side::Right);
            host.extend(mesh.side_nodes(Side::Bottom));
            host.sort_unstable();
            host.dedup();
            model.dirichlet.push(DirichletSpec {
                name: "host".into(),
                nodes: host,
                phase: Some(Phase::A),
                program: Program::Translate([Some(u[0]), Some(0.0)]),
            });
            model.dirichlet.push(DirichletSpec {
                name: "symmetry".into(),
                nodes: mesh.side_nodes(Side::Top),
                phase: None,
                program: Program::Translate([None, Some(0.0)]),
            });
            Ok("anchor".into())
        }
        GeometrySpec::SnapFitTab { support_height_m, .. }
        | GeometrySpec::SnapFitTabVoids { support_height_m, .. } => {
            let u = u.ok_or_else(|| Error::config("snap-fit preset needs a displacement"))?;
            let hs = *support_height_m;
            let lx = preset.domain_m[0];
            let support = nodes_where(mesh, |x| x[0] >= lx - 1e-12 && x[1] <= hs);
            model.dirichlet.push(DirichletSpec {
                name: "fixed".into(),
                nodes: support,
                phase: Some(Phase::B),
                program: Program::Fixed,
            });
            model.dirichlet.push(DirichletSpec {
                name: "drive".into(),
                nodes: mesh.side_nodes(Side::Left),
                phase: Some(Phase::A),
                program: Program::Translate([Some(u[0]), Some(0.0)]),
            });
            model.dirichlet.push(DirichletSpec {
                name: "symmetry".into(),
                nodes: mesh.side_nodes(Side::Bottom),
                phase: None,
                program: Program::Translate([None, Some(0.0)]),
            });
            Ok("fixed".into())
        }
        GeometrySpec::Rod { loading_radius_m, .. }
        | GeometrySpec::RodPetals { loading_radius_m, .. } => {
            let angle = preset
                .applied_rotation_rad
                .ok_or_else(|| Error::config("rod preset needs a rotation"))?;
            let r1 = *loading_radius_m;
            let mut outer = Vec::new();
            for side in [Side::Left, Side::Right, Side::Top, Side::Bottom] {
                outer.extend(mesh.side_nodes(side));
            }
            outer.sort_unstable();
            outer.dedup();
            model.dirichlet.push(DirichletSpec {
                name: "outer".into(),
                nodes: outer,
                phase: Some(Phase::A),
                program: Program::Fixed,
            });
            let drive = nodes_where(mesh, |x| {
                ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt() <= r1
            });
            model.dirichlet.push(DirichletSpec {
                name: "drive".into(),
                nodes: drive,
                phase: Some(Phase::B),
                program: Program::Rotation { center: [0.5, 0.5], angle },
            });
            Ok("outer".into())
        }
    }
}

fn build_objective(
    preset: &Preset,
    report_set: &str,
    torque_center: Option<[f64; 2]>,
) -> Option<Objective> {
    match &preset.objective {
        ObjectiveSpec::None => None,
        ObjectiveSpec::PointDisplacement { point_m, dir, target_m, scale } => {
            Some(Objective::PointDisplacement {
                point: *point_m,
                dir: *dir,
                target: *target_m,
                scale: *scale,
            })
        }
        ObjectiveSpec::AnchorForce { offset, scale } => Some(Objective::AnchorForce {
            set: report_set.into(),
            dir: 0,
            offset: *offset,
            scale: *scale,
        }),
        ObjectiveSpec::ForceTracking { amp_n, omega, scale } => {
            Some(Objective::ForceTracking {
                set: report_set.into(),
                dir: 0,
                target: TargetCurve::Sine { amp: *amp_n, omega: *omega },
                scale: *scale,
            })
        }
        ObjectiveSpec::TorqueTracking { amp_nm, omega, scale } => {
            Some(Objective::TorqueTracking {
                set: report_set.into(),
                center: torque_center.unwrap_or([0.5, 0.5]),
                target: TargetCurve::Sine { amp: *amp_nm, omega: *omega },
                scale: *scale,
            })
        }
        ObjectiveSpec::TorqueSmoothStep { amp_nm, scale } => {
            Some(Objective::TorqueTracking {
                set: report_set.into(),
                center: torque_center.unwrap_or([0.5, 0.5]),
                target: TargetCurve::SmoothStep { amp: *amp_nm },
                scale: *scale,
            })
        }
    }
}

/// Nodes whose design variables stay frozen (exclusion strips keeping
/// the supports and loaded boundaries in their initial phase).
pub fn frozen_nodes(preset: &Preset, mesh: &Mesh) -> Vec<bool> {
    let mut frozen = vec![false; mesh.n_nodes()];
    if let GeometrySpec::AnchorLattice {
        cuboid_length_m: l5,
        lattice_length_m: l3,
        ..
    } = preset.geometry
    {
        for n in 0..mesh.n_nodes() {
            let x = mesh.coord(n);
            frozen[n] = x[0] <= l5 || x[0] >= l5 + l3 + 0.02 || x[1] <= 0.05;
        }
    }
    frozen
}

/// Rebuild a problem's model from modified level-set fields.
pub fn rebuild(problem: &Problem, phi1: Vec<f64>, phi2: Option<Vec<f64>>) -> Result<Model> {
    let h = problem.model.xfem.mesh.h;
    let mut f1 = LevelSetField::new(phi1);
    f1.snap(h);
    let phi2 = phi2.map(|p| {
        let mut f2 = LevelSetField::new(p);
        f2.snap(h);
        f2.phi
    });
    problem.model.rebuild_with_phi(f1.phi, phi2)
}

/// Build the linear design filter for nodal presets.
pub fn design_filter(preset: &Preset, mesh: &Mesh) -> Result<Option<FilterSpec>> {
    match &preset.design {
        DesignControl::Nodal { filter_radius_m: Some(r), .. } => {
            Ok(Some(FilterSpec::build(mesh, *r)?))
        }
        _ => Ok(None),
    }
}
