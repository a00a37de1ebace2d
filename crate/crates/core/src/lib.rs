//! Two-dimensional finite-strain contact analysis and level-set topology
//! optimization.
//!
//! The crate couples an immersed (XFEM) discretization of two- and
//! three-phase material layouts with a stabilized Lagrange multiplier
//! treatment of large-sliding frictionless contact, a damped Newton
//! solver for quasi-static load histories, adjoint design sensitivities,
//! and a GCMMA nonlinear programming driver. The `harness` module exposes
//! the built-in problem presets and the batch CLI entry points.

pub mod contact;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linsolve;
pub mod mechanics;
pub mod mesh;
pub mod model;
pub mod optimizer;
pub mod par;
pub mod sensitivity;
pub mod solver;
pub mod xfem;

pub use error::{Error, Result};
