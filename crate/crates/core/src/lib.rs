//! Thin conductive rods in the plane.
//!
//! The crate solves the conductivity transmission problem
//! `∇·(σ∇u) = 0`, `u − H = O(|x|⁻¹)` for a rod-shaped inclusion of
//! conductivity `σ₀` by the single-layer representation `u = H + S[φ]`,
//! `(λI − K*)φ = ∂H/∂ν`, and provides the closed-form small-thickness
//! approximations of `u` and `∇u` together with a single-measurement fitter
//! for the rod's position, orientation and length.

pub mod asymptotics;
pub mod compare;
pub mod fieldmap;
pub mod geometry;
pub mod inverse;
pub mod io;
mod par;
pub mod potentials;
pub mod quadrature;
pub mod solver;
pub mod validate;

pub use geometry::{build_mesh, BoundaryMesh, BoundaryNode, MeshResolution, RodSpec, SegmentTag, Vec2};
pub use potentials::{DensityVector, Flagged, HarmonicBackground, NpMatrix};
pub use solver::{lambda_of_sigma, solve_forward, ForwardSolution};
