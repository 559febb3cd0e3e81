//! Perturbation maps `|u − H|`, `|∇u − ∇H|` on rectangular grids.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotics::AsymptoticModel;
use crate::geometry::{RodSpec, Vec2};
use crate::io::PerturbationSample;
use crate::par;
use crate::solver::ForwardSolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 2 points per axis, got nx = {nx}, ny = {ny}")]
    TooFewPoints { nx: usize, ny: usize },
    #[error("empty grid extent: [{min}, {max}] on {axis}")]
    EmptyExtent { axis: &'static str, min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn validate(&self) -> Result<(), GridError> {
        if self.nx < 2 || self.ny < 2 {
            return Err(GridError::TooFewPoints {
                nx: self.nx,
                ny: self.ny,
            });
        }
        for (axis, min, max) in [("x", self.xmin, self.xmax), ("y", self.ymin, self.ymax)] {
            if !min.is_finite() || !max.is_finite() || min >= max {
                return Err(GridError::EmptyExtent { axis, min, max });
            }
        }
        Ok(())
    }

    /// Row-major points, `x₁` varying fastest.
    pub fn points(&self) -> Vec<Vec2> {
        let dx = (self.xmax - self.xmin) / (self.nx - 1) as f64;
        let dy = (self.ymax - self.ymin) / (self.ny - 1) as f64;
        (0..self.ny)
            .flat_map(|j| (0..self.nx).map(move |i| Vec2::new(self.xmin + i as f64 * dx, self.ymin + j as f64 * dy)))
            .collect()
    }
}

/// Source of the field on the grid.
#[derive(Debug, Clone, Copy)]
pub enum FieldModel<'a> {
    Bem(&'a ForwardSolution),
    /// `spec` only decides which points count as near the rod.
    Asymptotic {
        model: &'a AsymptoticModel,
        spec: &'a RodSpec,
        n_quad: usize,
    },
}

fn asymptotic_sample(model: &AsymptoticModel, spec: &RodSpec, n_quad: usize, x: Vec2) -> PerturbationSample {
    let bg = model.background;
    let near_rod = spec.signed_distance(x) < 0.5 * spec.delta;
    let (potential, gradient, flagged) = if bg.uniform_gradient().is_some() {
        match (model.perturbation_linear(x), model.perturbed_gradient(x)) {
            (Ok(p), Ok(g)) => (p.abs(), g.norm(), false),
            _ => (f64::NAN, f64::NAN, true),
        }
    } else {
        let h = 1e-5 * spec.length.max(1.0);
        let pert = |y: Vec2| {
            model
                .u_general(y, n_quad)
                .map(|f| (f.value - bg.value(y), f.near_boundary))
        };
        let probes = [
            x,
            x + Vec2::new(h, 0.0),
            x - Vec2::new(h, 0.0),
            x + Vec2::new(0.0, h),
            x - Vec2::new(0.0, h),
        ];
        let vals: Result<Vec<_>, _> = probes.iter().map(|y| pert(*y)).collect();
        match vals {
            Ok(v) => {
                let g = Vec2::new(v[1].0 - v[2].0, v[3].0 - v[4].0) / (2.0 * h);
                (v[0].0.abs(), g.norm(), v.iter().any(|(_, f)| *f))
            }
            Err(_) => (f64::NAN, f64::NAN, true),
        }
    };
    PerturbationSample {
        x,
        potential,
        gradient,
        near_boundary: near_rod || flagged,
    }
}

/// Evaluates the perturbation at every point, in input order.
pub fn perturbation_map(model: FieldModel<'_>, points: &[Vec2]) -> Vec<PerturbationSample> {
    match model {
        FieldModel::Bem(sol) => par::map(points, |&x| {
            let s = sol.sample(x);
            PerturbationSample {
                x,
                potential: (s.u - sol.background.value(x)).abs(),
                gradient: (s.grad - sol.background.gradient(x)).norm(),
                near_boundary: s.near_boundary,
            }
        }),
        FieldModel::Asymptotic { model, spec, n_quad } => {
            par::map(points, |&x| asymptotic_sample(model, spec, n_quad, x))
        }
    }
}

/// Index of the largest `|∇u − ∇H|` among points that are outside the rod and
/// not flagged.
pub fn exterior_argmax(spec: &RodSpec, samples: &[PerturbationSample]) -> Option<usize> {
    samples
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.near_boundary && !spec.contains(s.x) && s.gradient.is_finite())
        .max_by(|a, b| a.1.gradient.total_cmp(&b.1.gradient))
        .map(|(i, _)| i)
}
