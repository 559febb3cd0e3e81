//! Single-measurement inversion: recover a rod's placement, length and
//! strength from one set of voltages on a circle around it.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotics::{AsymptoticError, AsymptoticModel};
use crate::geometry::{MeshResolution, RodSpec, Vec2};
use crate::potentials::HarmonicBackground;
use crate::solver::{solve_forward, SolverError};

#[derive(Debug, Error)]
pub enum InverseError {
    #[error("sensor {index} at ({x}, {y}) is {distance:.3e} from the rod; at least {required:.3e} is required")]
    SensorTooClose {
        index: usize,
        x: f64,
        y: f64,
        distance: f64,
        required: f64,
    },
    #[error("the measurement circle (radius {radius}) does not enclose the rod")]
    CircleTooSmall { radius: f64 },
    #[error("background gradient is zero; a single measurement carries no rod information")]
    Unidentifiable,
    #[error("inversion needs a uniform background field")]
    NonUniformBackground,
    #[error("{0}")]
    InvalidOptions(String),
    #[error("sensor data has {points} points but {values} values")]
    LengthMismatch { points: usize, values: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Asymptotic(#[from] AsymptoticError),
}

/// Which forward model produces synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Asymptotic,
    Bem(MeshResolution),
}

/// Boundary measurements of `u` on a circle.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSet {
    pub center: [f64; 2],
    pub radius: f64,
    pub points: Vec<Vec2>,
    pub values: Vec<f64>,
    pub background: HarmonicBackground,
}

/// `count` points evenly spaced on a circle, starting on the `+x₁` side.
pub fn circle_points(center: [f64; 2], radius: f64, count: usize) -> Vec<Vec2> {
    (0..count)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / count as f64;
            Vec2::new(center[0] + radius * t.cos(), center[1] + radius * t.sin())
        })
        .collect()
}

/// Checks that every sensor keeps at least `2δ` from the rod and that the
/// circle encloses it.
pub fn check_sensors(spec: &RodSpec, center: [f64; 2], radius: f64, points: &[Vec2]) -> Result<(), InverseError> {
    let reach = (spec.center() - Vec2::new(center[0], center[1])).norm() + 0.5 * spec.length + spec.delta;
    if reach >= radius {
        return Err(InverseError::CircleTooSmall { radius });
    }
    let required = 2.0 * spec.delta;
    for (index, p) in points.iter().enumerate() {
        let distance = spec.distance(*p);
        if distance < required {
            return Err(InverseError::SensorTooClose {
                index,
                x: p.x,
                y: p.y,
                distance,
                required,
            });
        }
    }
    Ok(())
}

/// Synthetic voltages from the chosen forward model plus independent Gaussian
/// noise of standard deviation `noise_rms`, reproducible from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_measurements(
    spec: &RodSpec,
    background: &HarmonicBackground,
    center: [f64; 2],
    radius: f64,
    points: Vec<Vec2>,
    noise_rms: f64,
    seed: u64,
    source: DataSource,
) -> Result<SensorSet, InverseError> {
    check_sensors(spec, center, radius, &points)?;
    let mut values = match source {
        DataSource::Asymptotic => {
            let model = AsymptoticModel::new(spec, *background)?;
            let linear = background.uniform_gradient().is_some();
            points
                .iter()
                .map(|p| {
                    if linear {
                        model.u_linear(*p)
                    } else {
                        model.u_general(*p, 32).map(|f| f.value)
                    }
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        DataSource::Bem(resolution) => {
            let sol = solve_forward(spec, background, resolution)?;
            sol.sample_many(&points).into_iter().map(|s| s.u).collect()
        }
    };
    if noise_rms > 0.0 {
        let normal = Normal::new(0.0, noise_rms).map_err(|e| InverseError::InvalidOptions(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut values {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(SensorSet {
        center,
        radius,
        points,
        values,
        background: *background,
    })
}

/// Parameters the leading-order model can identify.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub center: [f64; 2],
    pub angle: f64,
    pub length: f64,
    /// `c = δ (λ − ½)⁻¹`.
    pub strength: f64,
}

impl FitParams {
    fn to_vec(self) -> [f64; 5] {
        [self.center[0], self.center[1], self.angle, self.length, self.strength]
    }

    fn from_slice(p: &[f64]) -> Self {
        Self {
            center: [p[0], p[1]],
            angle: p[2],
            length: p[3],
            strength: p[4],
        }
    }

    /// Angle reduced to `[0, π)`; the model is invariant under `θ → θ + π`.
    pub fn canonical(mut self) -> Self {
        self.angle = self.angle.rem_euclid(PI);
        if self.angle >= PI {
            self.angle = 0.0;
        }
        self
    }

    /// `(P̂, Q̂) = ẑ₀ ∓ (L̂/2)(cos θ̂, sin θ̂)`.
    pub fn endpoints(&self) -> (Vec2, Vec2) {
        let c = Vec2::new(self.center[0], self.center[1]);
        let d = 0.5 * self.length * Vec2::new(self.angle.cos(), self.angle.sin());
        (c - d, c + d)
    }

    pub fn model(&self, background: HarmonicBackground) -> AsymptoticModel {
        AsymptoticModel {
            length: self.length,
            strength: self.strength,
            center: self.center,
            angle: self.angle,
            background,
            transverse: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative step tolerance.
    pub xtol: f64,
    /// Relative decrease of the misfit below which a step counts as stalled.
    pub ftol: f64,
    /// Transverse strength ratio of the model being fitted (1 for the
    /// standard leading-order formula).
    pub transverse: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            xtol: 1e-10,
            ftol: 1e-10,
            transverse: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitParams,
    pub endpoints: ([f64; 2], [f64; 2]),
    pub strength: f64,
    /// Root-mean-square data misfit at `params`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// RMS misfit after every accepted step, starting with the initial guess.
    pub history: Vec<f64>,
}

fn residuals(data: &SensorSet, p: &[f64], transverse: f64, out: &mut [f64]) -> bool {
    if p[3].is_nan() || p[3] <= 0.0 {
        return false;
    }
    let model = FitParams::from_slice(p)
        .model(data.background)
        .with_transverse(transverse);
    for ((r, x), v) in out.iter_mut().zip(&data.points).zip(&data.values) {
        match model.u_linear(*x) {
            Ok(u) => *r = u - v,
            Err(_) => return false,
        }
    }
    true
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// RMS misfit of the leading-order model with the given parameters.
pub fn misfit(data: &SensorSet, params: &FitParams, transverse: f64) -> f64 {
    let mut r = vec![0.0; data.points.len()];
    if residuals(data, &params.to_vec(), transverse, &mut r) {
        (sum_sq(&r) / r.len() as f64).sqrt()
    } else {
        f64::INFINITY
    }
}

fn validate_data(data: &SensorSet) -> Result<(), InverseError> {
    if data.points.len() != data.values.len() {
        return Err(InverseError::LengthMismatch {
            points: data.points.len(),
            values: data.values.len(),
        });
    }
    let a = data
        .background
        .uniform_gradient()
        .ok_or(InverseError::NonUniformBackground)?;
    if a.norm() == 0.0 {
        return Err(InverseError::Unidentifiable);
    }
    if data.points.len() < 5 {
        return Err(InverseError::InvalidOptions(format!(
            "{} sensors cannot determine 5 parameters",
            data.points.len()
        )));
    }
    Ok(())
}

/// Least-squares fit of `(z₀, θ, L, c)` with a Levenberg–Marquardt iteration
/// on central-difference Jacobians.
pub fn fit_rod(data: &SensorSet, init: FitParams, options: FitOptions) -> Result<FitResult, InverseError> {
    validate_data(data)?;
    let m = data.points.len();
    let mut p = init.to_vec();
    let mut r = vec![0.0; m];
    if !residuals(data, &p, options.transverse, &mut r) {
        return Err(InverseError::InvalidOptions(
            "initial guess is not admissible (L must be > 0)".into(),
        ));
    }
    let mut cost = sum_sq(&r);
    let rms = |c: f64| (c / m as f64).sqrt();
    let data_scale = data.values.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let mut history = vec![rms(cost)];
    let mut mu = -1.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = DMatrix::<f64>::zeros(m, 5);
    let (mut rp, mut rm) = (vec![0.0; m], vec![0.0; m]);

    while iterations < options.max_iterations {
        iterations += 1;
        if cost <= (1e-15 * data_scale).powi(2) {
            converged = true;
            break;
        }
        for k in 0..5 {
            let h = 1e-7 * p[k].abs().max(0.1);
            let mut q = p;
            q[k] = p[k] + h;
            let ok_p = residuals(data, &q, options.transverse, &mut rp);
            q[k] = p[k] - h;
            let ok_m = residuals(data, &q, options.transverse, &mut rm);
            for i in 0..m {
                jac[(i, k)] = match (ok_p, ok_m) {
                    (true, true) => (rp[i] - rm[i]) / (2.0 * h),
                    (true, false) => (rp[i] - r[i]) / h,
                    (false, true) => (r[i] - rm[i]) / h,
                    (false, false) => 0.0,
                };
            }
        }
        let rv = DVector::from_column_slice(&r);
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * &rv;
        let diag: Vec<f64> = (0..5).map(|k| jtj[(k, k)].max(1e-12 * jtj.diagonal().max())).collect();
        if mu < 0.0 {
            mu = 1e-3;
        }

        let mut accepted = None;
        while mu < 1e16 {
            let mut a = jtj.clone();
            for k in 0..5 {
                a[(k, k)] += mu * diag[k];
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                mu *= 10.0;
                continue;
            };
            let mut trial = p;
            for k in 0..5 {
                trial[k] += step[k];
            }
            let mut rt = vec![0.0; m];
            if residuals(data, &trial, options.transverse, &mut rt) {
                let ct = sum_sq(&rt);
                if ct < cost {
                    accepted = Some((trial, rt, ct, step.norm()));
                    mu = (mu / 3.0).max(1e-12);
                    break;
                }
            }
            mu *= 4.0;
        }

        match accepted {
            Some((trial, rt, ct, step_norm)) => {
                let rel = (cost - ct) / cost;
                let pnorm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                p = trial;
                r = rt;
                cost = ct;
                history.push(rms(cost));
                if step_norm <= options.xtol * (pnorm + options.xtol) && rel <= options.ftol {
                    converged = true;
                    break;
                }
            }
            None => {
                // no decrease possible along any damped direction: stationary
                converged = true;
                break;
            }
        }
    }

    let params = FitParams::from_slice(&p).canonical();
    let (pe, qe) = params.endpoints();
    Ok(FitResult {
        params,
        endpoints: ([pe.x, pe.y], [qe.x, qe.y]),
        strength: params.strength,
        residual: rms(cost),
        iterations,
        converged,
        history,
    })
}

/// Warm start: centre from the `|u − H|`-weighted centroid of the sensors,
/// then the best of a small grid of angles and lengths with the strength
/// fitted by linear least squares (the model is linear in `c`).
pub fn initial_guess(data: &SensorSet, transverse: f64) -> Result<FitParams, InverseError> {
    validate_data(data)?;
    let bg = data.background;
    let pert: Vec<f64> = data
        .points
        .iter()
        .zip(&data.values)
        .map(|(x, v)| v - bg.value(*x))
        .collect();
    let wsum: f64 = pert.iter().map(|d| d.abs()).sum();
    let center = if wsum > 0.0 {
        let c: Vec2 = data.points.iter().zip(&pert).map(|(x, d)| x * d.abs()).sum::<Vec2>() / wsum;
        [c.x, c.y]
    } else {
        data.center
    };

    let mut best: Option<(f64, FitParams)> = None;
    for i in 0..8 {
        let angle = i as f64 * PI / 8.0;
        for frac in [0.1, 0.25, 0.5] {
            let length = frac * data.radius;
            let unit = FitParams {
                center,
                angle,
                length,
                strength: 1.0,
            }
            .model(bg)
            .with_transverse(transverse);
            let g: Vec<f64> = data
                .points
                .iter()
                .map(|x| unit.perturbation_linear(*x).unwrap_or(0.0))
                .collect();
            let gg: f64 = g.iter().map(|v| v * v).sum();
            if gg == 0.0 {
                continue;
            }
            let strength = g.iter().zip(&pert).map(|(a, b)| a * b).sum::<f64>() / gg;
            let cand = FitParams {
                center,
                angle,
                length,
                strength,
            };
            let cost = misfit(data, &cand, transverse);
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, cand));
            }
        }
    }
    best.map(|(_, p)| p).ok_or(InverseError::Unidentifiable)
}

/// Largest difference of the two rods' voltages over the sensors, from the
/// boundary-integral solver.
pub fn distinguishability_gap(
    spec1: &RodSpec,
    spec2: &RodSpec,
    background: &HarmonicBackground,
    sensors: &[Vec2],
    resolution: MeshResolution,
) -> Result<f64, InverseError> {
    let s1 = solve_forward(spec1, background, resolution)?;
    let s2 = solve_forward(spec2, background, resolution)?;
    let u1 = s1.sample_many(sensors);
    let u2 = s2.sample_many(sensors);
    Ok(u1.iter().zip(&u2).map(|(a, b)| (a.u - b.u).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn truth() -> RodSpec {
        RodSpec::centered(2.0, 0.05, 2.0).with_placement([0.3, -0.2], 0.4)
    }

    fn synth(noise: f64, source: DataSource) -> SensorSet {
        simulate_measurements(
            &truth(),
            &HarmonicBackground::linear(1.0, 1.0),
            [0.0, 0.0],
            5.0,
            circle_points([0.0, 0.0], 5.0, 64),
            noise,
            7,
            source,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_round_trip() {
        let data = synth(0.0, DataSource::Asymptotic);
        let init = initial_guess(&data, 1.0).unwrap();
        let fit = fit_rod(&data, init, FitOptions::default()).unwrap();
        assert!(fit.converged);
        let (p, q) = truth().cap_centers();
        assert!((Vec2::from(fit.endpoints.0) - p).norm() < 1e-3, "{fit:?}");
        assert!((Vec2::from(fit.endpoints.1) - q).norm() < 1e-3);
        assert_relative_eq!(fit.strength, 0.05, max_relative = 0.01);
        assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn noise_is_seeded() {
        let a = synth(1e-4, DataSource::Asymptotic);
        let b = synth(1e-4, DataSource::Asymptotic);
        assert_eq!(a.values, b.values);
        let clean = synth(0.0, DataSource::Asymptotic);
        let rms = (a
            .values
            .iter()
            .zip(&clean.values)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            / 64.0)
            .sqrt();
        assert!(rms > 2e-5 && rms < 5e-4);
    }

    #[test]
    fn bem_and_asymptotic_data_agree_to_order_delta() {
        let spec = RodSpec::centered(2.0, 0.05, 2.0);
        let bg = HarmonicBackground::linear(1.0, 1.0);
        let pts = circle_points([0.0, 0.0], 5.0, 48);
        let a =
            simulate_measurements(&spec, &bg, [0.0, 0.0], 5.0, pts.clone(), 0.0, 0, DataSource::Asymptotic).unwrap();
        let b = simulate_measurements(
            &spec,
            &bg,
            [0.0, 0.0],
            5.0,
            pts,
            0.0,
            0,
            DataSource::Bem(MeshResolution::auto(&spec)),
        )
        .unwrap();
        let gap = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 0.2 * 0.05 * 2f64.sqrt(), "gap {gap}");
    }

    #[test]
    fn angle_symmetry_is_canonicalized() {
        let data = synth(0.0, DataSource::Asymptotic);
        let p = FitParams {
            center: [0.3, -0.2],
            angle: 0.4,
            length: 2.0,
            strength: 0.05,
        };
        let flipped = FitParams { angle: 0.4 + PI, ..p };
        assert_relative_eq!(misfit(&data, &p, 1.0), misfit(&data, &flipped, 1.0), epsilon = 1e-14);
        let c = flipped.canonical();
        assert_relative_eq!(c.angle, 0.4, epsilon = 1e-12);
        assert_eq!(FitParams { angle: -0.1, ..p }.canonical().angle, PI - 0.1);
    }

    #[test]
    fn degenerate_field_rejected() {
        let mut data = synth(0.0, DataSource::Asymptotic);
        data.background = HarmonicBackground::linear(0.0, 0.0);
        let init = FitParams {
            center: [0.0, 0.0],
            angle: 0.0,
            length: 1.0,
            strength: 0.1,
        };
        assert!(matches!(
            fit_rod(&data, init, FitOptions::default()),
            Err(InverseError::Unidentifiable)
        ));
    }

    #[test]
    fn sensors_must_clear_the_rod() {
        let spec = RodSpec::centered(2.0, 0.05, 2.0);
        let bg = HarmonicBackground::linear(1.0, 0.0);
        let err = simulate_measurements(
            &spec,
            &bg,
            [0.0, 0.0],
            1.0,
            circle_points([0.0, 0.0], 1.0, 8),
            0.0,
            0,
            DataSource::Asymptotic,
        );
        assert!(matches!(err, Err(InverseError::CircleTooSmall { .. })));
        let pts = vec![Vec2::new(0.0, 0.06), Vec2::new(3.0, 0.0)];
        let err = simulate_measurements(&spec, &bg, [0.0, 0.0], 5.0, pts, 0.0, 0, DataSource::Asymptotic);
        assert!(matches!(err, Err(InverseError::SensorTooClose { index: 0, .. })));
    }

    #[test]
    fn truth_is_a_local_minimum() {
        let data = synth(0.0, DataSource::Asymptotic);
        let t = FitParams {
            center: [0.3, -0.2],
            angle: 0.4,
            length: 2.0,
            strength: 0.05,
        };
        let base = misfit(&data, &t, 1.0);
        for (dx, dy) in [(1e-2, 0.0), (0.0, -1e-2), (7e-3, 7e-3)] {
            let moved = FitParams {
                center: [t.center[0] + dx, t.center[1] + dy],
                ..t
            };
            assert!(misfit(&data, &moved, 1.0) > base);
        }
        assert!(misfit(&data, &FitParams { length: 2.02, ..t }, 1.0) > base);
        assert!(misfit(&data, &FitParams { angle: 0.41, ..t }, 1.0) > base);
    }
}
