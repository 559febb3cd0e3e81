//! Flat TOML run configuration.

use std::path::Path;

use serde::Deserialize;
use thinrod::compare::ProbeCircle;
use thinrod::fieldmap::Grid;
use thinrod::geometry::GeometryError;
use thinrod::inverse::circle_points;
use thinrod::{HarmonicBackground, MeshResolution, RodSpec, Vec2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("config: {0}")]
    Geometry(#[from] GeometryError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Transverse {
    /// Transverse terms with the same strength as the axial ones.
    #[default]
    Printed,
    /// Transverse strength `−c/σ₀` of a thin conducting layer.
    Layer,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "L", default = "defaults::length")]
    pub length: f64,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    #[serde(default = "defaults::sigma0")]
    pub sigma0: f64,
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default)]
    pub angle: f64,

    /// Uniform background gradient.
    #[serde(default)]
    pub a: Option<[f64; 2]>,
    /// Coefficients of `1, x₁, x₂, x₁² − x₂², x₁x₂`; excludes `a`.
    #[serde(default)]
    pub quadratic: Option<[f64; 5]>,

    pub n_cap: Option<usize>,
    pub n_facade: Option<usize>,
    #[serde(default = "defaults::n_quad")]
    pub n_quad: usize,

    #[serde(default = "defaults::xmin")]
    pub xmin: f64,
    #[serde(default = "defaults::xmax")]
    pub xmax: f64,
    #[serde(default = "defaults::ymin")]
    pub ymin: f64,
    #[serde(default = "defaults::ymax")]
    pub ymax: f64,
    #[serde(default = "defaults::nx")]
    pub nx: usize,
    #[serde(default = "defaults::ny")]
    pub ny: usize,

    #[serde(default)]
    pub sensor_center: [f64; 2],
    #[serde(default = "defaults::sensor_radius")]
    pub sensor_radius: f64,
    #[serde(default = "defaults::sensor_count")]
    pub sensor_count: usize,
    #[serde(default)]
    pub noise_rms: f64,
    #[serde(default)]
    pub transverse: Transverse,
    #[serde(default = "defaults::max_iterations")]
    pub max_iterations: usize,

    #[serde(default = "defaults::deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "defaults::probe_radius")]
    pub probe_radius: f64,
    #[serde(default = "defaults::probe_count")]
    pub probe_count: usize,
}

mod defaults {
    pub fn length() -> f64 {
        2.0
    }
    pub fn delta() -> f64 {
        0.05
    }
    pub fn sigma0() -> f64 {
        2.0
    }
    pub fn n_quad() -> usize {
        32
    }
    pub fn xmin() -> f64 {
        -2.0
    }
    pub fn xmax() -> f64 {
        2.0
    }
    pub fn ymin() -> f64 {
        -1.0
    }
    pub fn ymax() -> f64 {
        1.0
    }
    pub fn nx() -> usize {
        81
    }
    pub fn ny() -> usize {
        41
    }
    pub fn sensor_radius() -> f64 {
        5.0
    }
    pub fn sensor_count() -> usize {
        64
    }
    pub fn max_iterations() -> usize {
        500
    }
    pub fn deltas() -> Vec<f64> {
        vec![0.1, 0.05, 0.025]
    }
    pub fn probe_radius() -> f64 {
        3.0
    }
    pub fn probe_count() -> usize {
        128
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults parse")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        self.rod()?;
        self.background()?;
        self.grid()?;
        if self.n_quad < 16 {
            return Err(invalid("n_quad", format!("{} < 16", self.n_quad)));
        }
        if self.n_cap.is_some() != self.n_facade.is_some() {
            return Err(invalid("n_cap", "set n_cap and n_facade together or neither"));
        }
        if !self.noise_rms.is_finite() || self.noise_rms < 0.0 {
            return Err(invalid(
                "noise_rms",
                format!("{} must be finite and ≥ 0", self.noise_rms),
            ));
        }
        if self.sensor_count < 5 {
            return Err(invalid("sensor_count", format!("{} < 5", self.sensor_count)));
        }
        if self.probe_count == 0 {
            return Err(invalid("probe_count", "must be positive"));
        }
        if let Some(d) = self.deltas.iter().find(|d| !d.is_finite() || **d <= 0.0) {
            return Err(invalid("deltas", format!("{d} is not a positive thickness")));
        }
        Ok(())
    }

    pub fn rod(&self) -> Result<RodSpec, ConfigError> {
        let spec = RodSpec {
            length: self.length,
            delta: self.delta,
            center: self.center,
            angle: self.angle,
            sigma0: self.sigma0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn rod_with_delta(&self, delta: f64) -> Result<RodSpec, ConfigError> {
        let spec = RodSpec { delta, ..self.rod()? };
        spec.validate()?;
        Ok(spec)
    }

    pub fn background(&self) -> Result<HarmonicBackground, ConfigError> {
        let bg = match (self.a, self.quadratic) {
            (Some(_), Some(_)) => return Err(invalid("a", "give either `a` or `quadratic`, not both")),
            (Some([a1, a2]), None) => HarmonicBackground::linear(a1, a2),
            (None, Some(c)) => HarmonicBackground::Quadratic(c),
            (None, None) => HarmonicBackground::linear(1.0, 0.0),
        };
        if bg.is_trivial() {
            return Err(invalid("a", "background field has no gradient"));
        }
        Ok(bg)
    }

    pub fn resolution(&self, spec: &RodSpec) -> MeshResolution {
        match (self.n_cap, self.n_facade) {
            (Some(c), Some(f)) => MeshResolution::new(c, f),
            _ => MeshResolution::auto(spec),
        }
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let g = Grid {
            xmin: self.xmin,
            xmax: self.xmax,
            ymin: self.ymin,
            ymax: self.ymax,
            nx: self.nx,
            ny: self.ny,
        };
        g.validate().map_err(|e| invalid("grid", e.to_string()))?;
        Ok(g)
    }

    pub fn sensors(&self) -> Vec<Vec2> {
        circle_points(self.sensor_center, self.sensor_radius, self.sensor_count)
    }

    pub fn probes(&self) -> ProbeCircle {
        ProbeCircle {
            radius: self.probe_radius,
            count: self.probe_count,
            n_quad: self.n_quad,
        }
    }

    pub fn transverse_ratio(&self) -> f64 {
        match self.transverse {
            Transverse::Printed => 1.0,
            Transverse::Layer => thinrod::asymptotics::transverse_ratio(self.sigma0),
        }
    }
}
