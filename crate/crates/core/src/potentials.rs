//! Layer potentials on a [`BoundaryMesh`]: the Nyström matrix of the
//! Neumann–Poincaré operator `K*`, the density equation `(λI − K*)φ = ∂H/∂ν`
//! and the single-layer potential `S[φ]` with its gradient.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundaryMesh, Vec2};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error(
        "density system is singular or ill-conditioned: |λ| - 1/2 = {margin:.3e}, estimated condition {condition:.3e}"
    )]
    IllConditioned { margin: f64, condition: f64 },
    #[error("right-hand side has {got} entries but the mesh has {expected} nodes")]
    SizeMismatch { expected: usize, got: usize },
}

/// Harmonic background potential `H` of degree at most two.
///
/// `Quadratic` holds the coefficients of `1, x₁, x₂, x₁² − x₂², x₁x₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmonicBackground {
    Linear([f64; 2]),
    Quadratic([f64; 5]),
}

impl HarmonicBackground {
    pub fn linear(a1: f64, a2: f64) -> Self {
        HarmonicBackground::Linear([a1, a2])
    }

    /// `(constant, linear part, symmetric traceless Hessian / 2)` so that
    /// `H(x) = c + b·x + xᵀMx`.
    fn parts(&self) -> (f64, Vec2, Matrix2<f64>) {
        match *self {
            HarmonicBackground::Linear([a1, a2]) => (0.0, Vec2::new(a1, a2), Matrix2::zeros()),
            HarmonicBackground::Quadratic([c0, c1, c2, c3, c4]) => {
                (c0, Vec2::new(c1, c2), Matrix2::new(c3, 0.5 * c4, 0.5 * c4, -c3))
            }
        }
    }

    pub fn value(&self, x: Vec2) -> f64 {
        let (c, b, m) = self.parts();
        c + b.dot(&x) + x.dot(&(m * x))
    }

    pub fn gradient(&self, x: Vec2) -> Vec2 {
        let (_, b, m) = self.parts();
        b + 2.0 * m * x
    }

    pub fn hessian(&self, _x: Vec2) -> Matrix2<f64> {
        let (_, _, m) = self.parts();
        2.0 * m
    }

    /// Uniform gradient `a` when the background is linear (a quadratic with
    /// vanishing second-order part also counts).
    pub fn uniform_gradient(&self) -> Option<Vec2> {
        match *self {
            HarmonicBackground::Linear([a1, a2]) => Some(Vec2::new(a1, a2)),
            HarmonicBackground::Quadratic([_, c1, c2, 0.0, 0.0]) => Some(Vec2::new(c1, c2)),
            HarmonicBackground::Quadratic(_) => None,
        }
    }

    pub fn is_trivial(&self) -> bool {
        match *self {
            HarmonicBackground::Linear(a) => a == [0.0, 0.0],
            HarmonicBackground::Quadratic(c) => c[1..] == [0.0; 4],
        }
    }

    /// The same function written in the coordinates `ξ` of a frame placed at
    /// `origin` with rotation `angle`, i.e. `ξ ↦ H(origin + R(angle)ξ)`.
    pub fn in_frame(&self, origin: Vec2, angle: f64) -> HarmonicBackground {
        let (c, b, m) = self.parts();
        let (s, co) = angle.sin_cos();
        let r = Matrix2::new(co, -s, s, co);
        let c_new = c + b.dot(&origin) + origin.dot(&(m * origin));
        let b_new = r.transpose() * (b + 2.0 * m * origin);
        let m_new = r.transpose() * m * r;
        match self {
            HarmonicBackground::Linear(_) => HarmonicBackground::Linear([b_new.x, b_new.y]),
            HarmonicBackground::Quadratic(_) => HarmonicBackground::Quadratic([
                c_new,
                b_new.x,
                b_new.y,
                0.5 * (m_new[(0, 0)] - m_new[(1, 1)]),
                m_new[(0, 1)] + m_new[(1, 0)],
            ]),
        }
    }
}

/// Layer density sampled at the mesh nodes, in mesh order.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector {
    pub values: Vec<f64>,
}

impl DensityVector {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Σ wᵢ φᵢ`.
    pub fn weighted_total(&self, mesh: &BoundaryMesh) -> f64 {
        mesh.weights().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    /// `Σ |wᵢ φᵢ|`, the scale against which `weighted_total` is judged.
    pub fn weighted_abs_total(&self, mesh: &BoundaryMesh) -> f64 {
        mesh.weights().zip(&self.values).map(|(w, v)| (w * v).abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Density dump rows: `node, x1, x2, phi`.
    pub fn write_csv<W: std::io::Write>(&self, mesh: &BoundaryMesh, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node", "x1", "x2", "phi"])?;
        for (i, (n, v)) in mesh.nodes.iter().zip(&self.values).enumerate() {
            w.write_record([
                i.to_string(),
                n.position.x.to_string(),
                n.position.y.to_string(),
                v.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A value that may have been evaluated too close to the boundary for the
/// quadrature to be trusted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    pub near_boundary: bool,
}

/// `(1/2π) ⟨x − y, νₓ⟩ / |x − y|²`
#[inline]
pub fn np_kernel(x: Vec2, nu_x: Vec2, y: Vec2) -> f64 {
    let d = x - y;
    d.dot(&nu_x) / (2.0 * PI * d.norm_squared())
}

/// Nyström matrix of `K*`: entry `(i, j) = k*(xᵢ, xⱼ) wⱼ`, diagonal `κᵢ wᵢ / 4π`.
#[derive(Debug, Clone, PartialEq)]
pub struct NpMatrix {
    pub matrix: DMatrix<f64>,
}

pub fn assemble_np(mesh: &BoundaryMesh) -> NpMatrix {
    let n = mesh.len();
    let nodes = &mesh.nodes;
    let rows: Vec<Vec<f64>> = par::map_indices(n, |i| {
        let xi = &nodes[i];
        nodes
            .iter()
            .enumerate()
            .map(|(j, yj)| {
                if i == j {
                    xi.curvature * xi.weight / (4.0 * PI)
                } else {
                    np_kernel(xi.position, xi.normal, yj.position) * yj.weight
                }
            })
            .collect()
    });
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    NpMatrix {
        matrix: DMatrix::from_row_slice(n, n, &flat),
    }
}

impl NpMatrix {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn apply(&self, phi: &DensityVector) -> DensityVector {
        let v = &self.matrix * DVector::from_column_slice(&phi.values);
        DensityVector {
            values: v.iter().copied().collect(),
        }
    }

    /// `Σᵢ wᵢ k*(xᵢ, xⱼ)` for every column `j`, the discrete `K[1](xⱼ)`; equal
    /// to ½ on a closed curve.
    pub fn weighted_column_sums(&self, mesh: &BoundaryMesh) -> Vec<f64> {
        let w: Vec<f64> = mesh.weights().collect();
        (0..self.len())
            .map(|j| {
                let col = self.matrix.column(j);
                col.iter().zip(&w).map(|(m, wi)| m * wi).sum::<f64>() / w[j]
            })
            .collect()
    }

    /// Rank-one update `K* − (1/|∂D|)·1·eᵀ`, where `e` is the defect of the
    /// weighted column sums from ½. The result satisfies the discrete Gauss
    /// law `wᵀK* = ½wᵀ` exactly.
    pub fn gauss_corrected(&self, mesh: &BoundaryMesh) -> NpMatrix {
        let w: Vec<f64> = mesh.weights().collect();
        let total: f64 = w.iter().sum();
        let mut matrix = self.matrix.clone();
        for j in 0..self.len() {
            let col_sum: f64 = self.matrix.column(j).iter().zip(&w).map(|(m, wi)| m * wi).sum();
            let shift = (col_sum - 0.5 * w[j]) / total;
            for v in matrix.column_mut(j).iter_mut() {
                *v -= shift;
            }
        }
        NpMatrix { matrix }
    }

    /// Full (complex) spectrum via a real Schur decomposition.
    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        self.matrix.clone().complex_eigenvalues().iter().copied().collect()
    }
}

/// `∂H/∂ν` at every node.
pub fn neumann_data(mesh: &BoundaryMesh, background: &HarmonicBackground) -> DensityVector {
    DensityVector {
        values: mesh
            .nodes
            .iter()
            .map(|n| background.gradient(n.position).dot(&n.normal))
            .collect(),
    }
}

/// Solves `(λI − K*)φ = rhs` by dense LU.
pub fn solve_density(np: &NpMatrix, lambda: f64, rhs: &DensityVector) -> Result<DensityVector, PotentialError> {
    let n = np.len();
    if rhs.len() != n {
        return Err(PotentialError::SizeMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let margin = lambda.abs() - 0.5;
    // the spectrum of K* lies in [-1/2, 1/2], so this bounds the resolvent
    if margin.is_nan() || margin <= 1e-12 {
        return Err(PotentialError::IllConditioned {
            margin,
            condition: f64::INFINITY,
        });
    }
    let mut system = -np.matrix.clone();
    for i in 0..n {
        system[(i, i)] += lambda;
    }
    let b = DVector::from_column_slice(&rhs.values);
    let lu = system.clone().lu();
    let x = lu.solve(&b).ok_or(PotentialError::IllConditioned {
        margin,
        condition: f64::INFINITY,
    })?;
    let resid = (&system * &x - &b).norm();
    let scale = b.norm().max(f64::MIN_POSITIVE);
    if !x.iter().all(|v| v.is_finite()) || resid > 1e-8 * scale {
        return Err(PotentialError::IllConditioned {
            margin,
            condition: resid / scale / f64::EPSILON,
        });
    }
    Ok(DensityVector {
        values: x.iter().copied().collect(),
    })
}

/// Solves the density equation after enforcing the discrete Gauss law on
/// both the operator and the data, so that `Σ wᵢφᵢ = 0` to roundoff.
pub fn solve_conserving(
    mesh: &BoundaryMesh,
    np: &NpMatrix,
    lambda: f64,
    rhs: &DensityVector,
) -> Result<DensityVector, PotentialError> {
    if rhs.len() != mesh.len() {
        return Err(PotentialError::SizeMismatch {
            expected: mesh.len(),
            got: rhs.len(),
        });
    }
    solve_density(&np.gauss_corrected(mesh), lambda, &project_zero_total(mesh, rhs))
}

/// Removes the weighted mean of `g` so that `Σ wᵢgᵢ = 0`.
pub fn project_zero_total(mesh: &BoundaryMesh, g: &DensityVector) -> DensityVector {
    let total: f64 = mesh.weights().sum();
    let mean = g.weighted_total(mesh) / total;
    DensityVector {
        values: g.values.iter().map(|v| v - mean).collect(),
    }
}

/// Relative residual `‖(λI − K*)φ − rhs‖ / ‖rhs‖`.
pub fn density_residual(np: &NpMatrix, lambda: f64, phi: &DensityVector, rhs: &DensityVector) -> f64 {
    let applied = np.apply(phi);
    let num: f64 = phi
        .values
        .iter()
        .zip(&applied.values)
        .zip(&rhs.values)
        .map(|((p, k), r)| (lambda * p - k - r).powi(2))
        .sum::<f64>()
        .sqrt();
    let den = rhs.values.iter().map(|r| r * r).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// `S[φ](x) = Σⱼ (1/2π) ln|x − yⱼ| φⱼ wⱼ`.
pub fn single_layer(mesh: &BoundaryMesh, phi: &DensityVector, x: Vec2) -> Flagged<f64> {
    let mut acc = 0.0;
    let mut near = false;
    for (n, v) in mesh.nodes.iter().zip(&phi.values) {
        let r2 = (x - n.position).norm_squared();
        near |= r2 < 4.0 * n.weight * n.weight;
        acc += 0.5 * r2.ln() * v * n.weight;
    }
    Flagged {
        value: acc / (2.0 * PI),
        near_boundary: near,
    }
}

/// `∇S[φ](x) = Σⱼ (1/2π) (x − yⱼ)/|x − yⱼ|² φⱼ wⱼ`.
pub fn single_layer_grad(mesh: &BoundaryMesh, phi: &DensityVector, x: Vec2) -> Flagged<Vec2> {
    let (_, g, near) = single_layer_with_grad(mesh, phi, x);
    Flagged {
        value: g,
        near_boundary: near,
    }
}

pub(crate) fn single_layer_with_grad(mesh: &BoundaryMesh, phi: &DensityVector, x: Vec2) -> (f64, Vec2, bool) {
    let mut val = 0.0;
    let mut grad = Vec2::zeros();
    let mut near = false;
    for (n, v) in mesh.nodes.iter().zip(&phi.values) {
        let d = x - n.position;
        let r2 = d.norm_squared();
        near |= r2 < 4.0 * n.weight * n.weight;
        let q = v * n.weight;
        val += 0.5 * r2.ln() * q;
        grad += d * (q / r2);
    }
    let s = 1.0 / (2.0 * PI);
    (val * s, grad * s, near)
}

/// Compares `∂ν S[φ]` at `xᵢ ± hνᵢ` (with `h` a multiple of the local panel
/// length) with the jump relations `(±½I + K*)φ` at `xᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceConsistency {
    /// Max over probed nodes of the exterior mismatch divided by `max|φ|`.
    pub exterior: f64,
    /// Same for the interior side.
    pub interior: f64,
    pub probed: usize,
}

pub fn trace_consistency(
    mesh: &BoundaryMesh,
    np: &NpMatrix,
    phi: &DensityVector,
    nodes: &[usize],
    offset_factor: f64,
) -> TraceConsistency {
    let k = np.apply(phi);
    let scale = phi.max_abs().max(f64::MIN_POSITIVE);
    let (mut ext, mut int) = (0.0f64, 0.0f64);
    for &i in nodes {
        let n = &mesh.nodes[i];
        let h = offset_factor * n.weight;
        let out = single_layer_grad(mesh, phi, n.position + h * n.normal)
            .value
            .dot(&n.normal);
        let inn = single_layer_grad(mesh, phi, n.position - h * n.normal)
            .value
            .dot(&n.normal);
        ext = ext.max((out - (0.5 * phi.values[i] + k.values[i])).abs());
        int = int.max((inn - (-0.5 * phi.values[i] + k.values[i])).abs());
    }
    TraceConsistency {
        exterior: ext / scale,
        interior: int / scale,
        probed: nodes.len(),
    }
}
