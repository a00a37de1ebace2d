//! Level-set geometry: design vectors, the linear design filter, phase
//! classification into subcell triangulations, and geometric-primitive
//! level set function families.

mod classify;
mod filter;
mod primitives;

pub use classify::{classify_phases, classify_phases_raw, ElemCut, ISeg, PhaseMap, SegKind, Tri};
pub use filter::FilterSpec;
pub use primitives::Primitive;

use crate::error::{Error, Result};

/// Material phase tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    A,
    B,
    Void,
}

impl Phase {
    pub fn idx(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::Void => 2,
        }
    }
}

/// How the optimization variables map to level set fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    NodalLevelSet,
    Primitives,
}

/// Optimization variable vector with box bounds.
#[derive(Debug, Clone)]
pub struct DesignVector {
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub kind: DesignKind,
}

impl DesignVector {
    pub fn new(values: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>, kind: DesignKind) -> Result<Self> {
        if values.len() != lower.len() || values.len() != upper.len() {
            return Err(Error::config("design vector bound lengths mismatch"));
        }
        for i in 0..values.len() {
            if !(lower[i] <= values[i] && values[i] <= upper[i]) {
                return Err(Error::config(format!(
                    "design variable {i} = {} outside bounds [{}, {}]",
                    values[i], lower[i], upper[i]
                )));
            }
        }
        Ok(DesignVector { values, lower, upper, kind })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Nodal level set values on the mesh grid.
#[derive(Debug, Clone)]
pub struct LevelSetField {
    pub phi: Vec<f64>,
}

impl LevelSetField {
    pub fn new(phi: Vec<f64>) -> Self {
        LevelSetField { phi }
    }

    /// Shift nodal values away from exact zero so intersections stay
    /// non-degenerate. Values with `|phi| < 1e-6 h` are moved to
    /// `±1e-6 h`, keeping the current sign (exact zeros go negative).
    pub fn snap(&mut self, h: f64) {
        let tol = 1e-6 * h;
        for p in &mut self.phi {
            if p.abs() < tol {
                *p = if *p > 0.0 { tol } else { -tol };
            }
        }
    }
}
