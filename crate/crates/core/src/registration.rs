//! Canonical placement of an open surface and sizing of its target hemispheroid.

use log::warn;
use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};

/// Lower bound on the polar semiaxis of a sized hemispheroid.
pub const C_MIN: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpheroidKind {
    Oblate,
    Prolate,
}

/// Spheroid with equatorial semiaxis `a` and polar semiaxis `c`.
///
/// `focal` and `zeta` are the confocal parameters: for an oblate spheroid
/// `a = e cosh ζ, c = e sinh ζ`; for a prolate one `a = e sinh ζ, c = e cosh ζ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spheroid {
    pub a: f64,
    pub c: f64,
    pub kind: SpheroidKind,
    pub focal: f64,
    pub zeta: f64,
}

impl Spheroid {
    /// Oblate when `a / c > 1`, otherwise prolate. An exact sphere is nudged
    /// to `c (1 + 1e-9)` so the prolate focal distance stays nonzero.
    pub fn new(a: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && c.is_finite() && a > 0.0 && c > 0.0) {
            return Err(Error::InvalidSpheroid(format!("semiaxes must be positive, got a={a}, c={c}")));
        }
        let c = if a == c { c * (1.0 + 1e-9) } else { c };
        let (kind, focal, zeta) = if a / c > 1.0 {
            (SpheroidKind::Oblate, (a * a - c * c).sqrt(), (c / a).atanh())
        } else {
            (SpheroidKind::Prolate, (c * c - a * a).sqrt(), (a / c).atanh())
        };
        Ok(Spheroid {
            a,
            c,
            kind,
            focal,
            zeta,
        })
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.a / self.c
    }

    /// ξ₁ = sinh ζ (oblate) or cosh ζ (prolate).
    pub fn xi1(&self) -> f64 {
        match self.kind {
            SpheroidKind::Oblate => self.zeta.sinh(),
            SpheroidKind::Prolate => self.zeta.cosh(),
        }
    }

    /// Residual of the implicit equation `(x² + y²)/a² + z²/c² - 1`.
    pub fn residual(&self, p: &Vec3) -> f64 {
        (p.x * p.x + p.y * p.y) / (self.a * self.a) + p.z * p.z / (self.c * self.c) - 1.0
    }
}

/// Rotation followed by translation: `p ↦ R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_inverse(&self, q: &Vec3) -> Vec3 {
        self.rotation.transpose() * (q - self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &RigidTransform) -> Self {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let r = &self.rotation;
        TransformRepr {
            rotation: [
                r[(0, 0)], r[(0, 1)], r[(0, 2)],
                r[(1, 0)], r[(1, 1)], r[(1, 2)],
                r[(2, 0)], r[(2, 1)], r[(2, 2)],
            ],
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = TransformRepr::deserialize(d)?;
        Ok(RigidTransform {
            rotation: Matrix3::from_row_slice(&r.rotation),
            translation: Vec3::from_row_slice(&r.translation),
        })
    }
}

/// Least-squares plane through `points`.
///
/// The normal is the eigenvector of the smallest eigenvalue of the scatter
/// matrix. When `interior` is given the normal is flipped so that point has a
/// nonnegative offset from the plane.
pub fn fit_boundary_plane(points: &[Vec3], interior: Option<&Vec3>) -> Result<(Vec3, Vec3)> {
    if points.len() < 3 {
        return Err(Error::DegenerateBoundaryPlane);
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let (smallest, middle, largest) = (order[0], order[1], order[2]);
    let top = eig.eigenvalues[largest];
    if top <= 0.0 || eig.eigenvalues[middle] <= 1e-12 * top {
        return Err(Error::DegenerateBoundaryPlane);
    }
    let mut normal: Vec3 = eig.eigenvectors.column(smallest).into_owned().normalize();

    let offset = interior.map(|q| (q - centroid).dot(&normal)).unwrap_or(0.0);
    let scale = top.sqrt() / points.len() as f64;
    let flip = if offset.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        offset < 0.0
    } else {
        // flat: make the dominant component positive so the choice is deterministic
        let k = normal.iamax();
        normal[k] < 0.0
    };
    if flip {
        normal = -normal;
    }
    Ok((normal, centroid))
}

/// Shortest rotation taking unit vector `from` onto unit vector `to`.
pub fn rotation_between(from: &Vec3, to: &Vec3) -> Matrix3<f64> {
    let v = from.cross(to);
    let cos = from.dot(to);
    if cos < -1.0 + 1e-15 {
        // antiparallel: half turn about any axis perpendicular to `from`
        let helper = if from.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let axis = from.cross(&helper).normalize();
        return 2.0 * axis * axis.transpose() - Matrix3::identity();
    }
    let vx = Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0);
    Matrix3::identity() + vx + vx * vx / (1.0 + cos)
}

/// Move the vertex centroid to the origin and rotate the fitted boundary
/// plane parallel to XY with the surface on the `+z` side.
pub fn register(mesh: &TriMesh) -> Result<(TriMesh, RigidTransform)> {
    let centroid = mesh.centroid();
    let lp = mesh.boundary_loop();
    let pts: Vec<Vec3> = lp.indices.iter().map(|&i| mesh.vertices()[i]).collect();
    let (normal, _) = fit_boundary_plane(&pts, Some(&centroid))?;
    let rotation = rotation_between(&normal, &Vec3::z());
    let mut xf = RigidTransform {
        rotation,
        translation: -(rotation * centroid),
    };
    let mut out: Vec<Vec3> = mesh.vertices().iter().map(|p| xf.apply(p)).collect();
    let mean_z = out.iter().map(|p| p.z).sum::<f64>() / out.len() as f64;
    if mean_z < -1e-9 * mesh.diagonal() {
        let flip = RigidTransform {
            rotation: Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0),
            translation: Vec3::zeros(),
        };
        xf = flip.compose(&xf);
        out = mesh.vertices().iter().map(|p| xf.apply(p)).collect();
    }
    Ok((mesh.with_vertices(out)?, xf))
}

/// Hemispheroid with `a = 1` and `c` equal to the bounding-box height in
/// units of half the larger horizontal extent.
pub fn size_hemispheroid(registered: &TriMesh) -> Result<Spheroid> {
    let (lo, hi) = registered.bounding_box();
    let ext = hi - lo;
    let width = ext.x.max(ext.y);
    if width <= 0.0 {
        return Err(Error::InvalidSpheroid("surface has zero horizontal extent".into()));
    }
    let mut c = 2.0 * ext.z / width;
    if c < C_MIN {
        warn!("surface is nearly flat (c = {c:.3e}); flooring c at {C_MIN}");
        c = C_MIN;
    }
    Spheroid::new(1.0, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dome(n: usize) -> TriMesh {
        crate::shapes::spherical_cap(1.0, 1.0, n)
    }

    #[test]
    fn spheroid_classification_and_focal_identities() {
        let o = Spheroid::new(1.0, 0.5343).unwrap();
        assert_eq!(o.kind, SpheroidKind::Oblate);
        assert_relative_eq!(o.focal * o.zeta.cosh(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(o.focal * o.zeta.sinh(), 0.5343, epsilon = 1e-12);
        let p = Spheroid::new(1.0, 1.0925).unwrap();
        assert_eq!(p.kind, SpheroidKind::Prolate);
        assert_relative_eq!(p.focal * p.zeta.sinh(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.focal * p.zeta.cosh(), 1.0925, epsilon = 1e-12);
        let s = Spheroid::new(1.0, 1.0).unwrap();
        assert_eq!(s.kind, SpheroidKind::Prolate);
        assert!(s.focal > 0.0);
        assert!(Spheroid::new(0.0, 1.0).is_err());
    }

    #[test]
    fn exact_planes() {
        let pts: Vec<Vec3> = (0..8)
            .map(|k| {
                let t = k as f64 * 0.8;
                Vec3::new(t.cos(), 2.0 * t.sin(), 5.0)
            })
            .collect();
        let (n, c) = fit_boundary_plane(&pts, Some(&Vec3::new(0.0, 0.0, 6.0))).unwrap();
        assert_relative_eq!(n, Vec3::z(), epsilon = 1e-12);
        assert_relative_eq!(c.z, 5.0, epsilon = 1e-12);

        let pts: Vec<Vec3> = pts.iter().map(|p| Vec3::new(2.0, p.x, p.y)).collect();
        let (n, _) = fit_boundary_plane(&pts, None).unwrap();
        assert_relative_eq!(n.x.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn noisy_plane_matches_direct_least_squares() {
        // deterministic pseudo-noise below 1e-6
        let pts: Vec<Vec3> = (0..40)
            .map(|k| {
                let t = k as f64 * 0.37;
                let (x, y) = (1.5 * t.cos() + 0.1 * k as f64 / 40.0, t.sin());
                let eps = 1e-6 * ((k * 7919 % 13) as f64 / 6.0 - 1.0);
                Vec3::new(x, y, 0.3 * x + eps)
            })
            .collect();
        // ordinary least squares z = p x + q y + r via normal equations
        let mut ata = Matrix3::zeros();
        let mut atb = Vec3::zeros();
        for p in &pts {
            let row = Vec3::new(p.x, p.y, 1.0);
            ata += row * row.transpose();
            atb += row * p.z;
        }
        let coef = ata.lu().solve(&atb).unwrap();
        let expect = Vec3::new(-coef.x, -coef.y, 1.0).normalize();
        let (n, _) = fit_boundary_plane(&pts, Some(&Vec3::new(0.0, 0.0, 10.0))).unwrap();
        assert!((n - expect).norm() < 1e-5, "{n} vs {expect}");
        assert!((n - Vec3::new(-0.3, 0.0, 1.0).normalize()).norm() < 1e-5);
    }

    #[test]
    fn collinear_boundary_rejected() {
        let pts: Vec<Vec3> = (0..5).map(|k| Vec3::new(k as f64, 2.0 * k as f64, 0.0)).collect();
        assert!(matches!(fit_boundary_plane(&pts, None), Err(Error::DegenerateBoundaryPlane)));
    }

    #[test]
    fn registration_of_posed_dome() {
        let base = dome(6);
        let (reg, xf) = register(&base).unwrap();
        // already flat boundary, bulging up: rotation is identity
        assert_relative_eq!(xf.rotation, Matrix3::identity(), epsilon = 1e-12);

        let shifted = base
            .with_vertices(base.vertices().iter().map(|p| p + Vec3::new(1.0, 2.0, 3.0)).collect())
            .unwrap();
        let (reg2, xf2) = register(&shifted).unwrap();
        assert_relative_eq!(xf2.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(xf2.translation, xf.translation - Vec3::new(1.0, 2.0, 3.0), epsilon = 1e-12);
        for (a, b) in reg.vertices().iter().zip(reg2.vertices()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }

        let rx = nalgebra::Rotation3::from_axis_angle(&Vec3::x_axis(), std::f64::consts::FRAC_PI_2);
        let turned = base
            .with_vertices(base.vertices().iter().map(|p| rx * p).collect())
            .unwrap();
        let (reg3, xf3) = register(&turned).unwrap();
        let lp = reg3.boundary_loop();
        let pts: Vec<Vec3> = lp.indices.iter().map(|&i| reg3.vertices()[i]).collect();
        let (n, _) = fit_boundary_plane(&pts, Some(&Vec3::zeros())).unwrap();
        assert!((n - Vec3::z()).norm() < 1e-10);
        assert_relative_eq!(xf3.rotation * rx.matrix(), Matrix3::identity(), epsilon = 1e-12);
        assert!(reg3.centroid().norm() < 1e-10);
        for (p, q) in turned.vertices().iter().zip(reg3.vertices()) {
            assert_relative_eq!(xf3.apply_inverse(q), *p, epsilon = 1e-12);
        }
    }

    #[test]
    fn registration_is_idempotent() {
        let base = dome(5);
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let posed = base
            .with_vertices(base.vertices().iter().map(|p| rot * p + Vec3::new(-2.0, 0.5, 4.0)).collect())
            .unwrap();
        let (reg, _) = register(&posed).unwrap();
        let (_, again) = register(&reg).unwrap();
        assert_relative_eq!(again.rotation, Matrix3::identity(), epsilon = 1e-9);
        assert!(again.translation.norm() < 1e-9);
        let c1 = size_hemispheroid(&reg).unwrap().c;
        let c0 = size_hemispheroid(&register(&base).unwrap().0).unwrap().c;
        // in-plane orientation may differ, but the footprint of a cap is round
        assert!((c1 - c0).abs() < 2e-2);
    }

    #[test]
    fn sizing_of_unit_hemisphere() {
        let (reg, _) = register(&dome(8)).unwrap();
        let s = size_hemispheroid(&reg).unwrap();
        assert_eq!(s.a, 1.0);
        assert!((s.c - 1.0).abs() < 0.02, "c = {}", s.c);
    }

    #[test]
    fn flat_surface_floors_c() {
        let m = crate::shapes::flat_disk(4);
        let (reg, _) = register(&m).unwrap();
        let s = size_hemispheroid(&reg).unwrap();
        assert_eq!(s.c, C_MIN);
        assert_eq!(s.kind, SpheroidKind::Oblate);
    }

    #[test]
    fn transform_json_round_trip() {
        let xf = RigidTransform {
            rotation: *nalgebra::Rotation3::from_euler_angles(0.1, 0.2, 0.3).matrix(),
            translation: Vec3::new(1.0, -2.0, 0.5),
        };
        let s = serde_json::to_string(&xf).unwrap();
        let back: RigidTransform = serde_json::from_str(&s).unwrap();
        assert_eq!(back, xf);
        let p = Vec3::new(0.3, 0.4, 0.5);
        assert_relative_eq!(xf.inverse().apply(&xf.apply(&p)), p, epsilon = 1e-12);
    }
}
