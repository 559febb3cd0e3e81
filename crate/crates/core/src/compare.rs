//! Boundary-element solution against the small-thickness approximation on a
//! probe circle around the rod.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotics::{AsymptoticError, AsymptoticModel};
use crate::geometry::{MeshResolution, RodSpec, Vec2};
use crate::par;
use crate::potentials::HarmonicBackground;
use crate::solver::{solve_forward, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("a disc (L = 0) has no thin-rod approximation")]
    Disc,
    #[error("probe circle radius {radius} does not clear the rod (needs > {needed})")]
    ProbeTooClose { radius: f64, needed: f64 },
    #[error("need at least one probe point")]
    NoProbes,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Asymptotic(#[from] AsymptoticError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeCircle {
    pub radius: f64,
    pub count: usize,
    /// Gauss–Legendre order per panel for non-linear backgrounds.
    pub n_quad: usize,
}

impl Default for ProbeCircle {
    fn default() -> Self {
        Self {
            radius: 3.0,
            count: 128,
            n_quad: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub delta: f64,
    /// `max |u_bem − u_asym|` over the probe circle.
    pub error: f64,
    pub ratio: f64,
    pub nodes: usize,
    pub probes: usize,
}

/// Maximum deviation between the two forward models on a circle centred at
/// the rod centre.
pub fn asymptotic_gap(
    spec: &RodSpec,
    background: &HarmonicBackground,
    resolution: MeshResolution,
    probes: ProbeCircle,
) -> Result<GapReport, CompareError> {
    if spec.length == 0.0 {
        return Err(CompareError::Disc);
    }
    if probes.count == 0 {
        return Err(CompareError::NoProbes);
    }
    let needed = 0.5 * spec.length + 2.0 * spec.delta;
    if probes.radius.is_nan() || probes.radius <= needed {
        return Err(CompareError::ProbeTooClose {
            radius: probes.radius,
            needed,
        });
    }
    let model = AsymptoticModel::new(spec, *background)?;
    let sol = solve_forward(spec, background, resolution)?;
    let c = spec.center();
    let points: Vec<Vec2> = (0..probes.count)
        .map(|k| {
            let t = std::f64::consts::TAU * (k as f64 + 0.5) / probes.count as f64;
            c + Vec2::new(t.cos(), t.sin()) * probes.radius
        })
        .collect();
    let linear = background.uniform_gradient().is_some();
    let diffs = par::map(&points, |&x| -> Result<f64, AsymptoticError> {
        let asym = if linear {
            model.u_linear(x)?
        } else {
            model.u_general(x, probes.n_quad)?.value
        };
        Ok((sol.eval_u(x).value - asym).abs())
    });
    let mut error: f64 = 0.0;
    for d in diffs {
        error = error.max(d?);
    }
    Ok(GapReport {
        delta: spec.delta,
        error,
        ratio: error / spec.delta,
        nodes: sol.mesh.len(),
        probes: probes.count,
    })
}
