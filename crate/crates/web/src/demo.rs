//! Demo operations in plain Rust; the exported wrappers only convert errors.

use serde::Serialize;
use thinrod::asymptotics::{f1_f2, transverse_ratio, AsymptoticModel};
use thinrod::fieldmap::{perturbation_map, FieldModel, Grid};
use thinrod::inverse::{circle_points, fit_rod, initial_guess, simulate_measurements, DataSource, FitOptions};
use thinrod::{solve_forward, HarmonicBackground, MeshResolution, RodSpec, Vec2};

/// Largest grid the page may request.
pub const MAX_GRID_POINTS: usize = 250_000;
/// Largest boundary mesh solved in the browser.
pub const MAX_NODES: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rod {
    pub length: f64,
    pub delta: f64,
    pub sigma0: f64,
    pub angle: f64,
}

impl Rod {
    fn spec(&self, center: [f64; 2]) -> Result<RodSpec, String> {
        let spec = RodSpec {
            length: self.length,
            delta: self.delta,
            center,
            angle: self.angle,
            sigma0: self.sigma0,
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

pub fn grid(xmin: f64, xmax: f64, ymin: f64, ymax: f64, nx: usize, ny: usize) -> Grid {
    Grid {
        xmin,
        xmax,
        ymin,
        ymax,
        nx,
        ny,
    }
}

fn checked_points(grid: Grid) -> Result<Vec<Vec2>, String> {
    grid.validate().map_err(|e| e.to_string())?;
    if grid.nx.saturating_mul(grid.ny) > MAX_GRID_POINTS {
        return Err(format!("grid has more than {MAX_GRID_POINTS} points"));
    }
    Ok(grid.points())
}

fn resolution(spec: &RodSpec) -> Result<MeshResolution, String> {
    let res = MeshResolution::auto(spec);
    let nodes = 2 * (res.n_cap + res.n_facade);
    if nodes > MAX_NODES {
        return Err(format!(
            "this rod needs {nodes} boundary nodes (limit {MAX_NODES}); increase δ or shorten L"
        ));
    }
    Ok(res)
}

/// `|∇u − a|` per grid point, `NaN` where flagged.
pub fn field_map(rod: Rod, a: [f64; 2], asymptotic: bool, grid: Grid) -> Result<Vec<f64>, String> {
    let points = checked_points(grid)?;
    let spec = rod.spec([0.0, 0.0])?;
    let bg = HarmonicBackground::linear(a[0], a[1]);
    if bg.is_trivial() {
        return Err("background gradient a must be nonzero".into());
    }
    let samples = if asymptotic {
        let model = AsymptoticModel::new(&spec, bg).map_err(|e| e.to_string())?;
        perturbation_map(
            FieldModel::Asymptotic {
                model: &model,
                spec: &spec,
                n_quad: 32,
            },
            &points,
        )
    } else {
        let sol = solve_forward(&spec, &bg, resolution(&spec)?).map_err(|e| e.to_string())?;
        perturbation_map(FieldModel::Bem(&sol), &points)
    };
    Ok(samples
        .iter()
        .map(|s| {
            if s.near_boundary || spec.contains(s.x) {
                f64::NAN
            } else {
                s.gradient
            }
        })
        .collect())
}

/// `δ²(f₁² + f₂²)` for an axis-aligned rod centred at the origin; `NaN` at the
/// two cap centres.
pub fn localization_map(length: f64, delta: f64, grid: Grid) -> Result<Vec<f64>, String> {
    if length.is_nan() || delta.is_nan() || length <= 0.0 || delta <= 0.0 {
        return Err("need L > 0 and δ > 0".into());
    }
    let points = checked_points(grid)?;
    Ok(points
        .iter()
        .map(|x| match f1_f2(*x, length) {
            Ok((f1, f2)) => delta * delta * (f1 * f1 + f2 * f2),
            Err(_) => f64::NAN,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitDemo {
    pub center: [f64; 2],
    pub noise_rms: f64,
    pub seed: u64,
    pub bem_data: bool,
    pub layer_transverse: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub true_endpoints: [[f64; 2]; 2],
    pub fitted_endpoints: [[f64; 2]; 2],
    pub true_strength: f64,
    pub fitted_strength: f64,
    pub endpoint_error: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub sensor_radius: f64,
    pub sensors: Vec<[f64; 2]>,
}

/// Background `a = (1, 1)`, 64 sensors on a circle about the origin of
/// radius `2.5 (|z₀| + L/2 + δ)`.
pub fn fit_demo(rod: Rod, opts: FitDemo) -> Result<FitReport, String> {
    let spec = rod.spec(opts.center)?;
    let bg = HarmonicBackground::linear(1.0, 1.0);
    let radius = 2.5 * (spec.center().norm() + 0.5 * spec.length + spec.delta);
    let source = if opts.bem_data {
        DataSource::Bem(resolution(&spec)?)
    } else {
        DataSource::Asymptotic
    };
    let points = circle_points([0.0, 0.0], radius, 64);
    let data = simulate_measurements(
        &spec,
        &bg,
        [0.0, 0.0],
        radius,
        points,
        opts.noise_rms,
        opts.seed,
        source,
    )
    .map_err(|e| e.to_string())?;
    let ratio = if opts.layer_transverse {
        transverse_ratio(spec.sigma0)
    } else {
        1.0
    };
    let init = initial_guess(&data, ratio).map_err(|e| e.to_string())?;
    let fit = fit_rod(
        &data,
        init,
        FitOptions {
            transverse: ratio,
            ..FitOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let (p, q) = spec.cap_centers();
    let (ph, qh) = (Vec2::from(fit.endpoints.0), Vec2::from(fit.endpoints.1));
    let endpoint_error = ((ph - p).norm().max((qh - q).norm())).min((ph - q).norm().max((qh - p).norm()));
    let lambda = thinrod::lambda_of_sigma(spec.sigma0).map_err(|e| e.to_string())?;
    Ok(FitReport {
        true_endpoints: [[p.x, p.y], [q.x, q.y]],
        fitted_endpoints: [fit.endpoints.0, fit.endpoints.1],
        true_strength: spec.delta / (lambda - 0.5),
        fitted_strength: fit.strength,
        endpoint_error,
        residual: fit.residual,
        iterations: fit.iterations,
        converged: fit.converged,
        sensor_radius: radius,
        sensors: data.points.iter().map(|p| [p.x, p.y]).collect(),
    })
}
