//! Forward solution of the transmission problem, `u = H + S[φ]`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::{build_mesh, BoundaryMesh, GeometryError, MeshResolution, RodSpec, Vec2};
use crate::par;
use crate::potentials::{
    assemble_np, neumann_data, single_layer_with_grad, solve_conserving, DensityVector, Flagged, HarmonicBackground,
    NpMatrix, PotentialError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("sigma0 = {0} gives no contrast with the unit background")]
    NoContrast(f64),
    #[error("sigma0 = {0} must be positive and finite")]
    InvalidConductivity(f64),
    #[error("background potential is constant; there is nothing to perturb")]
    TrivialBackground,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// `λ = (σ₀ + 1) / (2(σ₀ − 1))`.
pub fn lambda_of_sigma(sigma0: f64) -> Result<f64, SolverError> {
    if !(sigma0.is_finite() && sigma0 > 0.0) {
        return Err(SolverError::InvalidConductivity(sigma0));
    }
    if sigma0 == 1.0 {
        return Err(SolverError::NoContrast(sigma0));
    }
    Ok((sigma0 + 1.0) / (2.0 * (sigma0 - 1.0)))
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub mesh: BoundaryMesh,
    pub np: NpMatrix,
    pub phi: DensityVector,
    pub lambda: f64,
    pub background: HarmonicBackground,
}

/// Point value of `u` and `∇u` with the proximity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub x: Vec2,
    pub u: f64,
    pub grad: Vec2,
    pub near_boundary: bool,
}

pub fn solve_forward(
    spec: &RodSpec,
    background: &HarmonicBackground,
    resolution: MeshResolution,
) -> Result<ForwardSolution, SolverError> {
    let lambda = lambda_of_sigma(spec.sigma0)?;
    if background.is_trivial() {
        return Err(SolverError::TrivialBackground);
    }
    let mesh = build_mesh(spec, resolution)?;
    let np = assemble_np(&mesh);
    let phi = solve_conserving(&mesh, &np, lambda, &neumann_data(&mesh, background))?;
    Ok(ForwardSolution {
        mesh,
        np,
        phi,
        lambda,
        background: *background,
    })
}

impl ForwardSolution {
    pub fn spec(&self) -> &RodSpec {
        &self.mesh.spec
    }

    pub fn eval_u(&self, x: Vec2) -> Flagged<f64> {
        let (s, _, near) = single_layer_with_grad(&self.mesh, &self.phi, x);
        Flagged {
            value: self.background.value(x) + s,
            near_boundary: near,
        }
    }

    pub fn eval_grad_u(&self, x: Vec2) -> Flagged<Vec2> {
        let (_, g, near) = single_layer_with_grad(&self.mesh, &self.phi, x);
        Flagged {
            value: self.background.gradient(x) + g,
            near_boundary: near,
        }
    }

    pub fn sample(&self, x: Vec2) -> FieldSample {
        let (s, g, near) = single_layer_with_grad(&self.mesh, &self.phi, x);
        FieldSample {
            x,
            u: self.background.value(x) + s,
            grad: self.background.gradient(x) + g,
            near_boundary: near,
        }
    }

    /// Samples in input order; evaluated in parallel.
    pub fn sample_many(&self, points: &[Vec2]) -> Vec<FieldSample> {
        par::map(points, |x| self.sample(*x))
    }

    /// `Σ wφ`, which vanishes for a harmonic background.
    pub fn density_total(&self) -> f64 {
        self.phi.weighted_total(&self.mesh)
    }

    /// `|Σ wφ| / Σ |wφ|`.
    pub fn relative_density_total(&self) -> f64 {
        let scale = self.phi.weighted_abs_total(&self.mesh);
        if scale == 0.0 {
            0.0
        } else {
            self.density_total().abs() / scale
        }
    }

    /// Five-point finite-difference Laplacian of `u` at `x` with step `h`.
    pub fn fd_laplacian(&self, x: Vec2, h: f64) -> f64 {
        let u = |p: Vec2| self.eval_u(p).value;
        let c = u(x);
        (u(x + Vec2::new(h, 0.0)) + u(x - Vec2::new(h, 0.0)) + u(x + Vec2::new(0.0, h)) + u(x - Vec2::new(0.0, h))
            - 4.0 * c)
            / (h * h)
    }

    /// Net density on the nodes of one tag.
    pub fn segment_total(&self, tag: crate::geometry::SegmentTag) -> f64 {
        self.mesh
            .indices_with_tag(tag)
            .map(|i| self.mesh.nodes[i].weight * self.phi.values[i])
            .sum()
    }

    /// Flux-continuity check at `n_probe` nodes spread evenly along the boundary.
    pub fn transmission_check(&self, n_probe: usize) -> TransmissionReport {
        let n = self.mesh.len();
        let count = n_probe.clamp(1, n);
        let idx: Vec<usize> = (0..count).map(|k| k * n / count).collect();
        self.transmission_check_at(&idx, DEFAULT_PROBE_OFFSET)
    }

    /// Compares `∂νu` just outside with `σ₀ ∂νu` just inside at the given nodes.
    ///
    /// Each one-sided normal derivative is extrapolated linearly to the
    /// boundary from the offsets `h` and `2h`, `h = offset_factor · wᵢ`, so no
    /// point is evaluated on `∂D`. Nodes whose probes leave their side of the
    /// boundary or come within the proximity radius of another panel are
    /// skipped.
    pub fn transmission_check_at(&self, nodes: &[usize], offset_factor: f64) -> TransmissionReport {
        let spec = self.spec();
        let sigma0 = spec.sigma0;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        let mut used = 0;
        let mut skipped = 0;
        for &i in nodes {
            let node = &self.mesh.nodes[i];
            let h = offset_factor * node.weight;
            let probe = |sign: f64| -> Option<f64> {
                let p1 = node.position + sign * h * node.normal;
                let p2 = node.position + sign * 2.0 * h * node.normal;
                let inside = sign < 0.0;
                if spec.contains(p1) != inside || spec.contains(p2) != inside {
                    return None;
                }
                let g1 = self.eval_grad_u(p1);
                let g2 = self.eval_grad_u(p2);
                if g1.near_boundary || g2.near_boundary {
                    return None;
                }
                Some(2.0 * g1.value.dot(&node.normal) - g2.value.dot(&node.normal))
            };
            match (probe(1.0), probe(-1.0)) {
                (Some(out), Some(inn)) => {
                    worst = worst.max((out - sigma0 * inn).abs());
                    scale = scale.max(out.abs()).max((sigma0 * inn).abs());
                    used += 1;
                }
                _ => skipped += 1,
            }
        }
        TransmissionReport {
            max_mismatch: worst,
            field_scale: scale,
            relative: if scale > 0.0 { worst / scale } else { 0.0 },
            probes: used,
            skipped,
        }
    }
}

pub const DEFAULT_PROBE_OFFSET: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionReport {
    /// `max |∂νu₊ − σ₀ ∂νu₋|` over the probes.
    pub max_mismatch: f64,
    /// Largest one-sided normal flux seen.
    pub field_scale: f64,
    pub relative: f64,
    pub probes: usize,
    pub skipped: usize,
}

/// Closed-form perturbation `u − H` for a disc of radius `radius` centred at
/// the origin in the uniform field `a`, by separation of variables:
/// outside `−k ρ² ⟨a, x⟩/|x|²`, inside `−k ⟨a, x⟩`, with
/// `k = (σ₀ − 1)/(σ₀ + 1)`.
pub fn disc_perturbation(sigma0: f64, radius: f64, a: Vec2, x: Vec2) -> f64 {
    let k = (sigma0 - 1.0) / (sigma0 + 1.0);
    let r2 = x.norm_squared();
    if r2 >= radius * radius {
        -k * radius * radius * a.dot(&x) / r2
    } else {
        -k * a.dot(&x)
    }
}

/// Conventional `1/(2π) ln|x|`.
pub fn fundamental_solution(x: Vec2) -> f64 {
    x.norm().ln() / (2.0 * PI)
}
