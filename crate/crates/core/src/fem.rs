//! Linear finite elements on triangles: cotangent stiffness and lumped mass.

use crate::mesh::{Vec2, Vec3};
use crate::sparse::SparseMatrix;

fn cot(a: f64, b: f64) -> f64 {
    a / b
}

/// Cotangents of the three corners from the squared edge lengths and twice the area.
fn corner_cots(l2: [f64; 3], area2: f64) -> [f64; 3] {
    // l2[i] is the squared length of the edge opposite corner i
    if area2 <= 0.0 {
        return [0.0; 3];
    }
    [
        cot(l2[1] + l2[2] - l2[0], 2.0 * area2),
        cot(l2[2] + l2[0] - l2[1], 2.0 * area2),
        cot(l2[0] + l2[1] - l2[2], 2.0 * area2),
    ]
}

fn assemble(n: usize, faces: &[[usize; 3]], cots: impl Fn(usize) -> [f64; 3]) -> SparseMatrix {
    let mut trips = Vec::with_capacity(12 * faces.len());
    for (t, f) in faces.iter().enumerate() {
        let c = cots(t);
        for k in 0..3 {
            let (i, j) = (f[(k + 1) % 3], f[(k + 2) % 3]);
            let w = 0.5 * c[k];
            trips.push((i, j, -w));
            trips.push((j, i, -w));
            trips.push((i, i, w));
            trips.push((j, j, w));
        }
    }
    SparseMatrix::from_triplets(n, &trips)
}

/// Stiffness `K` with `uᵀ K u = ∫ |∇u|²` over the surface.
pub fn cotan_stiffness_3d(points: &[Vec3], faces: &[[usize; 3]]) -> SparseMatrix {
    assemble(points.len(), faces, |t| {
        let f = faces[t];
        let p = [points[f[0]], points[f[1]], points[f[2]]];
        let l2 = [(p[2] - p[1]).norm_squared(), (p[0] - p[2]).norm_squared(), (p[1] - p[0]).norm_squared()];
        corner_cots(l2, (p[1] - p[0]).cross(&(p[2] - p[0])).norm())
    })
}

/// Planar stiffness; faces with non-positive orientation contribute nothing.
pub fn cotan_stiffness_2d(points: &[Vec2], faces: &[[usize; 3]]) -> SparseMatrix {
    assemble(points.len(), faces, |t| {
        let f = faces[t];
        let p = [points[f[0]], points[f[1]], points[f[2]]];
        let l2 = [(p[2] - p[1]).norm_squared(), (p[0] - p[2]).norm_squared(), (p[1] - p[0]).norm_squared()];
        let (e1, e2) = (p[1] - p[0], p[2] - p[0]);
        corner_cots(l2, e1.x * e2.y - e1.y * e2.x)
    })
}

/// Lumped mass: one third of the incident face area per vertex.
pub fn lumped_mass(n: usize, faces: &[[usize; 3]], areas: &[f64]) -> Vec<f64> {
    let mut m = vec![0.0; n];
    for (f, a) in faces.iter().zip(areas) {
        for &v in f {
            m[v] += a / 3.0;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::polar_disk;

    #[test]
    fn stiffness_energy_of_linear_function() {
        let (pts, faces) = polar_disk(4);
        let k = cotan_stiffness_2d(&pts, &faces);
        assert!(k.is_symmetric(1e-14));
        let ones = vec![1.0; pts.len()];
        assert!(k.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
        // ∫|∇x|² equals the polygon area
        let x: Vec<f64> = pts.iter().map(|p| p.x).collect();
        let e: f64 = x.iter().zip(k.mul_vec(&x)).map(|(a, b)| a * b).sum();
        let area: f64 = faces
            .iter()
            .map(|f| crate::mesh::signed_area_2d(&pts[f[0]], &pts[f[1]], &pts[f[2]]))
            .sum();
        assert!((e - area).abs() < 1e-12);
        let lifted: Vec<Vec3> = pts.iter().map(|p| Vec3::new(p.x, p.y, 0.0)).collect();
        let k3 = cotan_stiffness_3d(&lifted, &faces);
        for i in 0..pts.len() {
            for (j, v) in k.row(i) {
                assert!((k3.get(i, j) - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lumped_mass_sums_to_area() {
        let (pts, faces) = polar_disk(3);
        let areas: Vec<f64> = faces
            .iter()
            .map(|f| crate::mesh::signed_area_2d(&pts[f[0]], &pts[f[1]], &pts[f[2]]))
            .collect();
        let m = lumped_mass(pts.len(), &faces, &areas);
        assert!((m.iter().sum::<f64>() - areas.iter().sum::<f64>()).abs() < 1e-12);
    }
}
