//! Spheroidal projection between the plane and the Northern hemispheroid, and
//! latitude/azimuth coordinates on the hemispheroid surface.
//!
//! Surface coordinates use one parametrization for both kinds,
//! `(a cos η cos φ, a cos η sin φ, c sin η)` with `η ∈ [0, π/2]`; only the
//! Legendre argument [`xi_hat`] depends on the kind.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};
use crate::mesh::{Vec2, Vec3};
use crate::registration::{Spheroid, SpheroidKind};

/// Default latitude clamp above the rim.
pub const DEFAULT_EPS_ETA: f64 = PI / 160.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpheroidalCoords {
    pub eta: f64,
    pub phi: f64,
}

impl SpheroidalCoords {
    /// ξ₂ = sin η (equivalently cos of the prolate colatitude).
    pub fn xi2(&self) -> f64 {
        self.eta.sin()
    }
}

/// Per-vertex positions in the plane (normally the closed unit disk).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlanarMap {
    pub points: Vec<Vec2>,
}

impl PlanarMap {
    pub fn new(points: Vec<Vec2>) -> Self {
        PlanarMap { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn in_unit_disk(&self) -> bool {
        self.points.iter().all(|p| p.norm_squared() <= 1.0 + 1e-9)
    }

    pub fn to_3d(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| Vec3::new(p.x, p.y, 0.0)).collect()
    }
}

/// Per-vertex positions on a hemispheroid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SurfaceMap {
    pub points: Vec<Vec3>,
}

impl SurfaceMap {
    pub fn new(points: Vec<Vec3>) -> Self {
        SurfaceMap { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn on_hemispheroid(&self, s: &Spheroid) -> bool {
        self.points
            .iter()
            .all(|p| s.residual(p).abs() <= 1e-9 && p.z >= -1e-12)
    }
}

pub fn inverse_spheroidal_projection(p: &Vec2, s: &Spheroid) -> Vec3 {
    let r2 = p.x * p.x + p.y * p.y;
    let d = 1.0 + r2;
    Vec3::new(2.0 * s.a * p.x / d, 2.0 * s.a * p.y / d, -s.c * (r2 - 1.0) / d)
}

pub fn spheroidal_projection(q: &Vec3, s: &Spheroid) -> Result<Vec2> {
    let d = s.a * (1.0 + q.z / s.c);
    if d.abs() <= f64::EPSILON * s.a {
        return Err(Error::ProjectionSingularity);
    }
    Ok(Vec2::new(q.x / d, q.y / d))
}

pub fn lift(map: &PlanarMap, s: &Spheroid) -> SurfaceMap {
    SurfaceMap::new(map.points.iter().map(|p| inverse_spheroidal_projection(p, s)).collect())
}

pub fn flatten(map: &SurfaceMap, s: &Spheroid) -> Result<PlanarMap> {
    map.points
        .iter()
        .map(|q| spheroidal_projection(q, s))
        .collect::<Result<Vec<_>>>()
        .map(PlanarMap::new)
}

/// Latitude and azimuth of a point on the Northern hemispheroid, with the
/// latitude clamped to `[eps_eta, π/2]`.
///
/// The rim `η = 0` sits at an endpoint of the Legendre argument where every
/// `m ≠ 0` basis function vanishes, so unclamped rim points lose their azimuth.
pub fn to_eta_phi(q: &Vec3, s: &Spheroid, eps_eta: f64) -> Result<SpheroidalCoords> {
    let res = s.residual(q);
    if res.abs() > 1e-6 || q.z < -1e-6 * s.c {
        return Err(Error::OffSpheroid(res));
    }
    let rho = (q.x * q.x + q.y * q.y).sqrt() / s.a;
    let eta = (q.z / s.c).atan2(rho).clamp(eps_eta, FRAC_PI_2);
    Ok(SpheroidalCoords {
        eta,
        phi: wrap_phi(q.y.atan2(q.x)),
    })
}

pub fn wrap_phi(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

pub fn eta_phi_to_point(coords: &SpheroidalCoords, s: &Spheroid) -> Vec3 {
    let (se, ce) = coords.eta.sin_cos();
    let (sp, cp) = coords.phi.sin_cos();
    Vec3::new(s.a * ce * cp, s.a * ce * sp, s.c * se)
}

/// Affine Legendre argument: `2 sin η - 1` (oblate) or `1 - 2 cos η` (prolate).
pub fn xi_hat(eta: f64, kind: SpheroidKind) -> f64 {
    match kind {
        SpheroidKind::Oblate => 2.0 * eta.sin() - 1.0,
        SpheroidKind::Prolate => 1.0 - 2.0 * eta.cos(),
    }
}

pub fn surface_coords(map: &SurfaceMap, s: &Spheroid, eps_eta: f64) -> Result<Vec<SpheroidalCoords>> {
    map.points.iter().map(|q| to_eta_phi(q, s, eps_eta)).collect()
}
