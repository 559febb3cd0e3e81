//! Rod ("stadium") geometry: the inclusion description, its rigid placement in
//! the plane and the midpoint quadrature mesh of its boundary.
//!
//! In the rod's local frame the inclusion is the union of a `2δ × L` rectangle
//! centred at the origin and two half-disks of radius `δ` centred at
//! `P = (-L/2, 0)` and `Q = (L/2, 0)`. World coordinates are obtained by a
//! rotation by `angle` followed by a translation by `center`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid rod parameter `{field}` = {value}: {reason}")]
    InvalidSpec {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("mesh resolution `{field}` = {value} is below the minimum of {min}")]
    Resolution {
        field: &'static str,
        value: usize,
        min: usize,
    },
}

/// Geometric and material description of a rod inclusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RodSpec {
    /// Length of the straight part.
    pub length: f64,
    /// Half-thickness, also the radius of the end caps.
    pub delta: f64,
    /// Geometric centre in world coordinates.
    pub center: [f64; 2],
    /// Rotation of the rod axis from the `x1` axis, radians.
    pub angle: f64,
    /// Conductivity inside the rod (background conductivity is 1).
    pub sigma0: f64,
}

impl RodSpec {
    /// Axis-aligned rod centred at the origin.
    pub fn centered(length: f64, delta: f64, sigma0: f64) -> Self {
        Self {
            length,
            delta,
            center: [0.0, 0.0],
            angle: 0.0,
            sigma0,
        }
    }

    pub fn with_placement(mut self, center: [f64; 2], angle: f64) -> Self {
        self.center = center;
        self.angle = angle;
        self
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |field, value, reason| GeometryError::InvalidSpec { field, value, reason };
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(bad("delta", self.delta, "must be finite and > 0"));
        }
        if !(self.length.is_finite() && self.length >= 0.0) {
            return Err(bad("L", self.length, "must be finite and >= 0"));
        }
        if !(self.sigma0.is_finite() && self.sigma0 > 0.0) {
            return Err(bad("sigma0", self.sigma0, "must be finite and > 0"));
        }
        if self.sigma0 == 1.0 {
            return Err(bad("sigma0", self.sigma0, "equals the background conductivity"));
        }
        if !(self.angle.is_finite() && self.center.iter().all(|c| c.is_finite())) {
            return Err(bad("center/angle", f64::NAN, "must be finite"));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.center[0], self.center[1])
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * self.length + 2.0 * PI * self.delta
    }

    pub fn area(&self) -> f64 {
        2.0 * self.delta * self.length + PI * self.delta * self.delta
    }

    /// Rotates a local-frame vector into the world frame (no translation).
    pub fn rotate(&self, v: Vec2) -> Vec2 {
        let (s, c) = self.angle.sin_cos();
        Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    pub fn unrotate(&self, v: Vec2) -> Vec2 {
        let (s, c) = self.angle.sin_cos();
        Vec2::new(c * v.x + s * v.y, -s * v.x + c * v.y)
    }

    pub fn to_world(&self, local: Vec2) -> Vec2 {
        self.rotate(local) + self.center()
    }

    pub fn to_local(&self, world: Vec2) -> Vec2 {
        self.unrotate(world - self.center())
    }

    /// Cap centres `(P, Q)` in world coordinates.
    pub fn cap_centers(&self) -> (Vec2, Vec2) {
        let half = 0.5 * self.length;
        (
            self.to_world(Vec2::new(-half, 0.0)),
            self.to_world(Vec2::new(half, 0.0)),
        )
    }

    /// Euclidean distance from a world point to the closed rod; 0 inside.
    pub fn distance(&self, world: Vec2) -> f64 {
        (self.axis_distance(world) - self.delta).max(0.0)
    }

    /// Signed distance to the boundary, negative inside.
    pub fn signed_distance(&self, world: Vec2) -> f64 {
        self.axis_distance(world) - self.delta
    }

    fn axis_distance(&self, world: Vec2) -> f64 {
        let p = self.to_local(world);
        let half = 0.5 * self.length;
        let along = p.x.clamp(-half, half);
        ((p.x - along).powi(2) + p.y * p.y).sqrt()
    }

    pub fn contains(&self, world: Vec2) -> bool {
        self.signed_distance(world) < 0.0
    }
}

/// Boundary segment a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentTag {
    CapLeft,
    CapRight,
    FacadeBottom,
    FacadeTop,
}

impl SegmentTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentTag::CapLeft => "cap_left",
            SegmentTag::CapRight => "cap_right",
            SegmentTag::FacadeBottom => "facade_bottom",
            SegmentTag::FacadeTop => "facade_top",
        }
    }

    pub fn is_cap(self) -> bool {
        matches!(self, SegmentTag::CapLeft | SegmentTag::CapRight)
    }
}

impl fmt::Display for SegmentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub position: Vec2,
    /// Outward unit normal.
    pub normal: Vec2,
    pub curvature: f64,
    /// Arc-length quadrature weight (panel length).
    pub weight: f64,
    pub tag: SegmentTag,
}

/// Node counts per boundary segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshResolution {
    pub n_cap: usize,
    pub n_facade: usize,
}

pub const MIN_NODES_PER_SEGMENT: usize = 8;

impl MeshResolution {
    pub fn new(n_cap: usize, n_facade: usize) -> Self {
        Self { n_cap, n_facade }
    }

    /// Resolution that keeps the node spacing at about a tenth of the thickness
    /// `δ` on every segment, which resolves the facade-to-facade kernel.
    pub fn auto(spec: &RodSpec) -> Self {
        let n_facade = ((10.0 * spec.length / spec.delta).ceil() as usize).max(32);
        let spacing = if spec.length > 0.0 {
            spec.length / n_facade as f64
        } else {
            spec.delta / 10.0
        };
        let n_cap = ((PI * spec.delta / spacing).ceil() as usize).max(32);
        Self { n_cap, n_facade }
    }

    /// Doubles both counts.
    pub fn refined(self) -> Self {
        Self::new(2 * self.n_cap, 2 * self.n_facade)
    }
}

/// Midpoint quadrature of the rod boundary, counterclockwise.
///
/// Traversal order in the local frame: bottom facade (left to right), right
/// cap, top facade (right to left), left cap. Each segment is split into
/// panels of equal arc length and one node sits at each panel midpoint, so no
/// node falls on the four points where the curvature jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMesh {
    pub nodes: Vec<BoundaryNode>,
    pub spec: RodSpec,
    pub resolution: MeshResolution,
}

pub fn build_mesh(spec: &RodSpec, resolution: MeshResolution) -> Result<BoundaryMesh, GeometryError> {
    spec.validate()?;
    if resolution.n_cap < MIN_NODES_PER_SEGMENT {
        return Err(GeometryError::Resolution {
            field: "n_cap",
            value: resolution.n_cap,
            min: MIN_NODES_PER_SEGMENT,
        });
    }
    let has_facade = spec.length > 0.0;
    if has_facade && resolution.n_facade < MIN_NODES_PER_SEGMENT {
        return Err(GeometryError::Resolution {
            field: "n_facade",
            value: resolution.n_facade,
            min: MIN_NODES_PER_SEGMENT,
        });
    }

    let half = 0.5 * spec.length;
    let delta = spec.delta;
    let n_cap = resolution.n_cap;
    let n_facade = if has_facade { resolution.n_facade } else { 0 };
    let mut local = Vec::with_capacity(2 * (n_cap + n_facade));

    let facade_w = if has_facade { spec.length / n_facade as f64 } else { 0.0 };
    let cap_w = PI * delta / n_cap as f64;

    for k in 0..n_facade {
        let x1 = -half + (k as f64 + 0.5) * facade_w;
        local.push(node(
            Vec2::new(x1, -delta),
            Vec2::new(0.0, -1.0),
            0.0,
            facade_w,
            SegmentTag::FacadeBottom,
        ));
    }
    for k in 0..n_cap {
        let t = -0.5 * PI + (k as f64 + 0.5) * PI / n_cap as f64;
        let nrm = Vec2::new(t.cos(), t.sin());
        local.push(node(
            Vec2::new(half, 0.0) + delta * nrm,
            nrm,
            1.0 / delta,
            cap_w,
            SegmentTag::CapRight,
        ));
    }
    for k in 0..n_facade {
        let x1 = half - (k as f64 + 0.5) * facade_w;
        local.push(node(
            Vec2::new(x1, delta),
            Vec2::new(0.0, 1.0),
            0.0,
            facade_w,
            SegmentTag::FacadeTop,
        ));
    }
    for k in 0..n_cap {
        let t = 0.5 * PI + (k as f64 + 0.5) * PI / n_cap as f64;
        let nrm = Vec2::new(t.cos(), t.sin());
        local.push(node(
            Vec2::new(-half, 0.0) + delta * nrm,
            nrm,
            1.0 / delta,
            cap_w,
            SegmentTag::CapLeft,
        ));
    }

    let nodes = local
        .into_iter()
        .map(|n| BoundaryNode {
            position: spec.to_world(n.position),
            normal: spec.rotate(n.normal),
            ..n
        })
        .collect();

    Ok(BoundaryMesh {
        nodes,
        spec: *spec,
        resolution: MeshResolution::new(n_cap, n_facade),
    })
}

fn node(position: Vec2, normal: Vec2, curvature: f64, weight: f64, tag: SegmentTag) -> BoundaryNode {
    BoundaryNode {
        position,
        normal,
        curvature,
        weight,
        tag,
    }
}

impl BoundaryMesh {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(|n| n.weight)
    }

    pub fn perimeter(&self) -> f64 {
        self.weights().sum()
    }

    /// `Σ wᵢ νᵢ`, zero for a closed curve.
    pub fn normal_sum(&self) -> Vec2 {
        self.nodes.iter().map(|n| n.weight * n.normal).sum()
    }

    /// Enclosed area from the divergence theorem, `½ Σ wᵢ ⟨xᵢ, νᵢ⟩`.
    pub fn enclosed_area(&self) -> f64 {
        0.5 * self
            .nodes
            .iter()
            .map(|n| n.weight * n.position.dot(&n.normal))
            .sum::<f64>()
    }

    /// Largest panel length.
    pub fn max_spacing(&self) -> f64 {
        self.weights().fold(0.0, f64::max)
    }

    pub fn indices_with_tag(&self, tag: SegmentTag) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.tag == tag)
            .map(|(i, _)| i)
    }

    /// True when `x` is closer than twice the local panel length to some node.
    pub fn is_near(&self, x: Vec2) -> bool {
        self.nodes
            .iter()
            .any(|n| (x - n.position).norm_squared() < 4.0 * n.weight * n.weight)
    }

    /// Mesh dump rows: `x1, x2, nu1, nu2, kappa, weight, tag`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x1", "x2", "nu1", "nu2", "kappa", "weight", "tag"])?;
        for n in &self.nodes {
            w.write_record([
                n.position.x.to_string(),
                n.position.y.to_string(),
                n.normal.x.to_string(),
                n.normal.y.to_string(),
                n.curvature.to_string(),
                n.weight.to_string(),
                n.tag.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
