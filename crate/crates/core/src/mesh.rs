//! Forces interpolated from a potential sampled on the square lattice
//! `dx·(ℤ² + offset)`.
//!
//! Plaquette corners follow the usual labelling
//!
//! ```text
//!   c = (i, j+1) ---- d = (i+1, j+1)
//!        |                 |
//!   a = (i, j)   ---- b = (i+1, j)
//! ```
//!
//! and the fractional coordinates inside the plaquette are `(ξ, η)`.
//! Nodal quantities are the discrete gradients of Φ; the acceleration is
//! their negative. The potential is evaluated lazily at the nodes a stencil
//! touches, so no grid is stored.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::AccelerationField;
use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// A potential that can be sampled at lattice nodes.
pub trait LatticePotential {
    fn value(&self, p: Vec2) -> f64;

    /// `Φ(q) - Φ(p)`. Implementations may override this with a form that
    /// avoids cancellation between neighbouring nodes.
    fn difference(&self, p: Vec2, q: Vec2) -> f64 {
        self.value(q) - self.value(p)
    }

    /// Whether `p` is a singular point of the potential.
    fn is_singular(&self, _p: Vec2) -> bool {
        false
    }
}

/// `Φ = -GM / r` with the mass at the coordinate origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerPotential {
    pub gm: f64,
}

impl LatticePotential for KeplerPotential {
    #[inline]
    fn value(&self, p: Vec2) -> f64 {
        -self.gm / p.norm()
    }

    /// `GM (r_q² - r_p²) / ((r_p + r_q) r_p r_q)`, where `r_q² - r_p²` is
    /// formed from coordinate differences that are small lattice multiples.
    #[inline]
    fn difference(&self, p: Vec2, q: Vec2) -> f64 {
        let rp = p.norm();
        let rq = q.norm();
        let d2 = (q.x - p.x) * (q.x + p.x) + (q.y - p.y) * (q.y + p.y);
        self.gm * d2 / ((rp + rq) * rp * rq)
    }

    #[inline]
    fn is_singular(&self, p: Vec2) -> bool {
        p.x == 0.0 && p.y == 0.0
    }
}

impl<P: LatticePotential + ?Sized> LatticePotential for &P {
    fn value(&self, p: Vec2) -> f64 {
        (**self).value(p)
    }
    fn difference(&self, p: Vec2, q: Vec2) -> f64 {
        (**self).difference(p, q)
    }
    fn is_singular(&self, p: Vec2) -> bool {
        (**self).is_singular(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeshScheme {
    /// Forward-difference edge gradients, interpolated transversally;
    /// discontinuous across plaquette edges.
    Linear,
    /// Central-difference nodal gradients, bilinearly interpolated;
    /// continuous.
    Bilinear,
}

impl MeshScheme {
    pub fn name(self) -> &'static str {
        match self {
            MeshScheme::Linear => "linear",
            MeshScheme::Bilinear => "bilinear",
        }
    }
}

impl fmt::Display for MeshScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeshScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(MeshScheme::Linear),
            "bilinear" => Ok(MeshScheme::Bilinear),
            other => Err(Error::InvalidArgument(format!("unknown mesh scheme '{other}'"))),
        }
    }
}

/// Which corners feed the y-component of the linear scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum LinearVariant {
    /// `G^y = g^y_a (1-ξ) + g^y_b ξ`, the mirror image of `G^x`.
    Symmetric,
    /// `G^y = g^y_b (1-ξ) + g^y_d ξ`. Samples the y-gradient half a cell up
    /// and to the right of the query point on average, which is what makes
    /// the perihelion shift depend on the orbit orientation.
    #[default]
    AsPrinted,
}

impl LinearVariant {
    pub fn name(self) -> &'static str {
        match self {
            LinearVariant::Symmetric => "symmetric",
            LinearVariant::AsPrinted => "as-printed",
        }
    }
}

impl fmt::Display for LinearVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinearVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "symmetric" => Ok(LinearVariant::Symmetric),
            "as-printed" | "asprinted" | "printed" => Ok(LinearVariant::AsPrinted),
            other => Err(Error::InvalidArgument(format!("unknown linear variant '{other}'"))),
        }
    }
}

/// Lattice geometry and interpolation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    /// Lattice constant, Gm.
    pub dx: f64,
    /// Node offset in lattice units; nodes sit at `(i + offset.x, j + offset.y)·dx`.
    pub origin_offset: Vec2,
    pub scheme: MeshScheme,
    pub linear_variant: LinearVariant,
}

impl MeshSpec {
    pub fn new(scheme: MeshScheme, dx: f64) -> Self {
        Self {
            dx,
            origin_offset: Vec2::ZERO,
            scheme,
            linear_variant: LinearVariant::default(),
        }
    }

    pub fn with_variant(mut self, variant: LinearVariant) -> Self {
        self.linear_variant = variant;
        self
    }

    pub fn with_offset(mut self, offset: Vec2) -> Self {
        self.origin_offset = offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::InvalidArgument(format!("lattice constant must be positive, got {}", self.dx)));
        }
        let o = self.origin_offset;
        if !((0.0..1.0).contains(&o.x) && (0.0..1.0).contains(&o.y)) {
            return Err(Error::InvalidArgument(format!(
                "origin offset ({}, {}) outside [0, 1)²",
                o.x, o.y
            )));
        }
        Ok(())
    }

    /// Physical position of node `(i, j)`.
    #[inline]
    pub fn node(&self, i: i64, j: i64) -> Vec2 {
        Vec2::new(
            (i as f64 + self.origin_offset.x) * self.dx,
            (j as f64 + self.origin_offset.y) * self.dx,
        )
    }
}

/// Plaquette index and fractional position of a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaquetteCoords {
    pub i: i64,
    pub j: i64,
    pub xi: f64,
    pub eta: f64,
}

#[inline]
fn split(u: f64) -> (i64, f64) {
    let f = u.floor();
    let mut i = f as i64;
    let mut frac = u - f;
    if frac >= 1.0 {
        i += 1;
        frac = 0.0;
    }
    (i, frac)
}

/// Floor-based decomposition of `point` into plaquette `(i, j)` and
/// `(ξ, η) ∈ [0, 1)²`.
#[inline]
pub fn locate(point: Vec2, mesh: &MeshSpec) -> PlaquetteCoords {
    let (i, xi) = split(point.x / mesh.dx - mesh.origin_offset.x);
    let (j, eta) = split(point.y / mesh.dx - mesh.origin_offset.y);
    PlaquetteCoords { i, j, xi, eta }
}

/// Orientation of a plaquette edge starting at node `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeOrientation {
    /// From `(i, j)` to `(i+1, j)`.
    Horizontal,
    /// From `(i, j)` to `(i, j+1)`.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub i: i64,
    pub j: i64,
    pub orientation: EdgeOrientation,
}

/// Difference of the two one-sided limits (far side minus near side) of
/// each force component at an edge midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeJump {
    pub jump_x: f64,
    pub jump_y: f64,
    /// Magnitude of the force on the near side.
    pub force: f64,
}

/// Potential plus lattice: a force model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh<P = KeplerPotential> {
    pub spec: MeshSpec,
    pub potential: P,
}

impl Mesh<KeplerPotential> {
    pub fn kepler(spec: MeshSpec, gm: f64) -> Result<Self> {
        Self::new(spec, KeplerPotential { gm })
    }
}

impl<P: LatticePotential> Mesh<P> {
    pub fn new(spec: MeshSpec, potential: P) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, potential })
    }

    /// `Φ(node(i2, j2)) - Φ(node(i1, j1))` with singular-node detection.
    #[inline]
    fn node_difference(&self, (i1, j1): (i64, i64), (i2, j2): (i64, i64)) -> Result<f64> {
        let p = self.spec.node(i1, j1);
        let q = self.spec.node(i2, j2);
        if self.potential.is_singular(p) {
            return Err(Error::SingularStencil { i: i1, j: j1 });
        }
        if self.potential.is_singular(q) {
            return Err(Error::SingularStencil { i: i2, j: j2 });
        }
        Ok(self.potential.difference(p, q))
    }

    /// Central-difference gradient of Φ at node `(i, j)`.
    pub fn nodal_gradient_central(&self, i: i64, j: i64) -> Result<Vec2> {
        let inv = 0.5 / self.spec.dx;
        let fx = self.node_difference((i - 1, j), (i + 1, j))? * inv;
        let fy = self.node_difference((i, j - 1), (i, j + 1))? * inv;
        Ok(Vec2::new(fx, fy))
    }

    /// Forward-difference gradient `((Φ_{i+1,j} - Φ_{i,j})/dx, (Φ_{i,j+1} - Φ_{i,j})/dx)`.
    pub fn nodal_gradient_forward(&self, i: i64, j: i64) -> Result<Vec2> {
        let inv = 1.0 / self.spec.dx;
        let gx = self.node_difference((i, j), (i + 1, j))? * inv;
        let gy = self.node_difference((i, j), (i, j + 1))? * inv;
        Ok(Vec2::new(gx, gy))
    }

    /// Bilinearly interpolated gradient in plaquette `(i, j)`; `ξ, η` may
    /// equal 1 to take limits from inside the plaquette.
    pub fn gradient_bilinear_in(&self, i: i64, j: i64, xi: f64, eta: f64) -> Result<Vec2> {
        let fa = self.nodal_gradient_central(i, j)?;
        let fb = self.nodal_gradient_central(i + 1, j)?;
        let fc = self.nodal_gradient_central(i, j + 1)?;
        let fd = self.nodal_gradient_central(i + 1, j + 1)?;
        let (wx, wy) = (1.0 - xi, 1.0 - eta);
        let fx = (fa.x * wx + fb.x * xi) * wy + (fc.x * wx + fd.x * xi) * eta;
        let fy = (fa.y * wy + fc.y * eta) * wx + (fb.y * wy + fd.y * eta) * xi;
        Ok(Vec2::new(fx, fy))
    }

    /// Linear-scheme gradient in plaquette `(i, j)`.
    pub fn gradient_linear_in(&self, i: i64, j: i64, xi: f64, eta: f64) -> Result<Vec2> {
        let inv = 1.0 / self.spec.dx;
        let gx_a = self.node_difference((i, j), (i + 1, j))? * inv;
        let gx_c = self.node_difference((i, j + 1), (i + 1, j + 1))? * inv;
        let gx = gx_a * (1.0 - eta) + gx_c * eta;
        let gy = match self.spec.linear_variant {
            LinearVariant::Symmetric => {
                let gy_a = self.node_difference((i, j), (i, j + 1))? * inv;
                let gy_b = self.node_difference((i + 1, j), (i + 1, j + 1))? * inv;
                gy_a * (1.0 - xi) + gy_b * xi
            }
            LinearVariant::AsPrinted => {
                let gy_b = self.node_difference((i + 1, j), (i + 1, j + 1))? * inv;
                let gy_d = self.node_difference((i + 1, j + 1), (i + 1, j + 2))? * inv;
                gy_b * (1.0 - xi) + gy_d * xi
            }
        };
        Ok(Vec2::new(gx, gy))
    }

    fn gradient_in(&self, i: i64, j: i64, xi: f64, eta: f64) -> Result<Vec2> {
        match self.spec.scheme {
            MeshScheme::Linear => self.gradient_linear_in(i, j, xi, eta),
            MeshScheme::Bilinear => self.gradient_bilinear_in(i, j, xi, eta),
        }
    }

    /// Acceleration from the bilinear scheme, whatever `spec.scheme` says.
    pub fn force_bilinear(&self, point: Vec2) -> Result<Vec2> {
        let c = locate(point, &self.spec);
        Ok(-self.gradient_bilinear_in(c.i, c.j, c.xi, c.eta)?)
    }

    /// Acceleration from the linear scheme, whatever `spec.scheme` says.
    pub fn force_linear(&self, point: Vec2) -> Result<Vec2> {
        let c = locate(point, &self.spec);
        Ok(-self.gradient_linear_in(c.i, c.j, c.xi, c.eta)?)
    }

    /// Acceleration from the configured scheme.
    #[inline]
    pub fn force(&self, point: Vec2) -> Result<Vec2> {
        let c = locate(point, &self.spec);
        Ok(-self.gradient_in(c.i, c.j, c.xi, c.eta)?)
    }

    /// One-sided limits of the acceleration at the midpoint of `edge`.
    pub fn continuity_probe(&self, edge: Edge) -> Result<EdgeJump> {
        let Edge { i, j, orientation } = edge;
        let (near, far) = match orientation {
            // plaquette (i, j) above the edge, (i, j-1) below
            EdgeOrientation::Horizontal => (self.gradient_in(i, j, 0.5, 0.0)?, self.gradient_in(i, j - 1, 0.5, 1.0)?),
            // plaquette (i, j) right of the edge, (i-1, j) left
            EdgeOrientation::Vertical => (self.gradient_in(i, j, 0.0, 0.5)?, self.gradient_in(i - 1, j, 1.0, 0.5)?),
        };
        let (near, far) = (-near, -far);
        Ok(EdgeJump {
            jump_x: far.x - near.x,
            jump_y: far.y - near.y,
            force: near.norm(),
        })
    }
}

impl<P: LatticePotential> AccelerationField for Mesh<P> {
    #[inline]
    fn acceleration(&self, _t: f64, pos: Vec2, _vel: Vec2) -> Result<Vec2> {
        self.force(pos)
    }
}
