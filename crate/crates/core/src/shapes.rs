//! Procedural disk-topology test surfaces.
//!
//! All meshes share one polar layout: a center vertex and `rings` concentric
//! rings with `6k` vertices on ring `k`, giving `1 + 3 n (n + 1)` vertices.

use std::f64::consts::{FRAC_PI_2, TAU};

use crate::mesh::{TriMesh, Vec2, Vec3};

/// Unit-disk polar layout: positions and counterclockwise faces.
pub fn polar_disk(rings: usize) -> (Vec<Vec2>, Vec<[usize; 3]>) {
    assert!(rings >= 1, "need at least one ring");
    let mut pts = vec![Vec2::zeros()];
    let mut start = vec![0usize];
    for k in 1..=rings {
        start.push(pts.len());
        let m = 6 * k;
        let r = k as f64 / rings as f64;
        for j in 0..m {
            let t = TAU * j as f64 / m as f64;
            pts.push(Vec2::new(r * t.cos(), r * t.sin()));
        }
    }
    let mut faces = Vec::new();
    for j in 0..6 {
        faces.push([0, 1 + j, 1 + (j + 1) % 6]);
    }
    for k in 2..=rings {
        let (m_in, m_out) = (6 * (k - 1), 6 * k);
        let (s_in, s_out) = (start[k - 1], start[k]);
        let (mut i, mut j) = (0usize, 0usize);
        while i < m_in || j < m_out {
            let next_in = (i + 1) as f64 / m_in as f64;
            let next_out = (j + 1) as f64 / m_out as f64;
            let vi = s_in + i % m_in;
            let vj = s_out + j % m_out;
            if j < m_out && (i >= m_in || next_out <= next_in) {
                faces.push([vi, vj, s_out + (j + 1) % m_out]);
                j += 1;
            } else {
                faces.push([vi, vj, s_in + (i + 1) % m_in]);
                i += 1;
            }
        }
    }
    (pts, faces)
}

fn build(rings: usize, f: impl Fn(&Vec2) -> Vec3) -> TriMesh {
    let (pts, faces) = polar_disk(rings);
    TriMesh::new(pts.iter().map(f).collect(), faces).expect("polar layout is a valid disk")
}

/// Planar unit disk in `z = 0`.
pub fn flat_disk(rings: usize) -> TriMesh {
    build(rings, |p| Vec3::new(p.x, p.y, 0.0))
}

/// Graph `z = h(x, y)` over the unit disk.
pub fn height_field(rings: usize, h: impl Fn(f64, f64) -> f64) -> TriMesh {
    build(rings, |p| Vec3::new(p.x, p.y, h(p.x, p.y)))
}

/// Northern half of the spheroid with semiaxes `a` and `c`, rings evenly spaced in latitude.
pub fn spherical_cap(a: f64, c: f64, rings: usize) -> TriMesh {
    build(rings, |p| {
        let r = p.norm();
        let eta = FRAC_PI_2 * (1.0 - r);
        cap_point(a, c, eta, p)
    })
}

/// Half-spheroid whose latitude rings satisfy `sin η_k = 1 - (k/n)²`.
///
/// Together with `6k` vertices per ring this spreads vertices evenly in the
/// `(2 sin η - 1, φ)` measure, the measure under which the oblate harmonic
/// basis is orthonormal.
pub fn harmonic_cap(a: f64, c: f64, rings: usize) -> TriMesh {
    build(rings, |p| {
        let r = p.norm();
        let eta = (1.0 - r * r).clamp(0.0, 1.0).asin();
        cap_point(a, c, eta, p)
    })
}

fn cap_point(a: f64, c: f64, eta: f64, p: &Vec2) -> Vec3 {
    let r = p.norm();
    let (cp, sp) = if r > 0.0 { (p.x / r, p.y / r) } else { (1.0, 0.0) };
    Vec3::new(a * eta.cos() * cp, a * eta.cos() * sp, c * eta.sin())
}

/// Smooth face-like relief: a dome with a nose ridge, brow ridge and eye sockets.
pub fn face_like(rings: usize) -> TriMesh {
    height_field(rings, |x, y| {
        let r2 = x * x + y * y;
        let g = |cx: f64, cy: f64, sx: f64, sy: f64| (-((x - cx).powi(2) / sx + (y - cy).powi(2) / sy)).exp();
        0.45 * (1.0 - 0.85 * r2).max(0.0).sqrt() + 0.22 * g(0.0, -0.05, 0.012, 0.06)
            - 0.07 * g(-0.32, 0.22, 0.015, 0.01)
            - 0.07 * g(0.32, 0.22, 0.015, 0.01)
            + 0.05 * g(0.0, 0.38, 0.2, 0.006)
            - 0.03 * g(0.0, -0.45, 0.05, 0.004)
    })
}

/// Peaked mountain with four ridges.
pub fn mountain(rings: usize) -> TriMesh {
    height_field(rings, |x, y| {
        let r = (x * x + y * y + 0.004).sqrt();
        let t = y.atan2(x);
        0.9 * (-2.6 * r).exp() * (1.0 + 0.18 * (4.0 * t).cos() * r) - 0.9 * (-2.6f64).exp()
    })
}

/// Saddle with a superposed ripple.
pub fn wavy_saddle(rings: usize) -> TriMesh {
    height_field(rings, |x, y| 0.25 * (x * x - y * y) + 0.05 * (5.0 * x).sin() * (4.0 * y).cos() + 0.15 * (1.0 - x * x - y * y))
}

/// Tall lobed blob, prolate like an ear or a bunny's back.
pub fn tall_blob(rings: usize) -> TriMesh {
    build(rings, |p| {
        let r = p.norm();
        let eta = FRAC_PI_2 * (1.0 - r);
        let t = p.y.atan2(p.x);
        let bulge = 1.0 + 0.12 * (3.0 * t).cos() * eta.cos() + 0.08 * (2.0 * eta).sin();
        let q = cap_point(0.8, 1.3, eta, p);
        Vec3::new(q.x * bulge, q.y * bulge * 0.9, q.z)
    })
}

/// Named surfaces used by the benchmark-ordering checks.
pub fn benchmark_suite(rings: usize) -> Vec<(&'static str, TriMesh)> {
    vec![
        ("face", face_like(rings)),
        ("mountain", mountain(rings)),
        ("saddle", wavy_saddle(rings)),
        ("blob", tall_blob(rings)),
        ("cap", spherical_cap(1.0, 0.55, rings)),
    ]
}
