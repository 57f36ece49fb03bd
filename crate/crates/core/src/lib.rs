//! Verification of metallic Riemannian structures and the Σ-structures they
//! induce on round spheres and hyperplane spheres.

pub mod covariant;
pub mod error;
pub mod jet;
pub mod metallic;
pub mod normality;
pub mod report;
pub mod sigma;
pub mod surface;

pub use error::{Error, Result};
pub use metallic::{
    build_ambient_structure, metallic_ratio, AmbientStructure, Matrix, MetallicParams, Preset,
    Sign, Vector,
};
pub use report::{emit_report, run_suite, Format, ResidualReport, RunConfig};
pub use sigma::{induce_sigma, SigmaAtPoint, SigmaField};
pub use surface::{EmbeddedSurface, SurfaceKind, SurfacePoint};
