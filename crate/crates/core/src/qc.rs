//! Quasi-conformal machinery: per-face Beltrami coefficients, the Linear
//! Beltrami Solver, inversion of piecewise-linear maps and fold repair.

use std::collections::BTreeMap;

use log::warn;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mesh::{signed_area_2d, TriMesh, Vec2, Vec3};
use crate::projection::PlanarMap;
use crate::sparse::{SparseMatrix, SparseSystem};

/// Radial cap applied to repaired coefficients.
pub const MU_CAP: f64 = 0.95;

/// Per-face complex dilatation `μ = ρ + iτ`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BeltramiField {
    pub values: Vec<Complex64>,
}

impl BeltramiField {
    pub fn new(values: Vec<Complex64>) -> Self {
        BeltramiField { values }
    }

    pub fn zeros(faces: usize) -> Self {
        BeltramiField::new(vec![Complex64::new(0.0, 0.0); faces])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.values.iter().map(|m| m.norm()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    pub fn mean_abs(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|v| v.norm()).sum::<f64>() / self.values.len() as f64
    }

    /// Faces with `|μ| ≥ 1` (or non-finite μ).
    pub fn folded(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| is_folded(self.values[i])).collect()
    }
}

fn is_folded(mu: Complex64) -> bool {
    !(mu.norm() < 1.0)
}

/// μ of the affine map taking triangle `src` onto `dst`; `None` for a degenerate source.
pub fn affine_beltrami(src: &[Vec2; 3], dst: &[Vec2; 3]) -> Option<Complex64> {
    let (s1, s2) = (src[1] - src[0], src[2] - src[0]);
    let det = s1.x * s2.y - s2.x * s1.y;
    let scale = s1.norm_squared().max(s2.norm_squared());
    if det.abs() <= 1e-14 * scale || scale == 0.0 {
        return None;
    }
    let (t1, t2) = (dst[1] - dst[0], dst[2] - dst[0]);
    // J = T S⁻¹
    let inv = [[s2.y / det, -s2.x / det], [-s1.y / det, s1.x / det]];
    let ux = t1.x * inv[0][0] + t2.x * inv[1][0];
    let uy = t1.x * inv[0][1] + t2.x * inv[1][1];
    let vx = t1.y * inv[0][0] + t2.y * inv[1][0];
    let vy = t1.y * inv[0][1] + t2.y * inv[1][1];
    let fz = Complex64::new(0.5 * (ux + vy), 0.5 * (vx - uy));
    let fzb = Complex64::new(0.5 * (ux - vy), 0.5 * (vx + uy));
    if fz.norm() <= 1e-300 {
        return Some(Complex64::new(f64::INFINITY, 0.0));
    }
    Some(fzb / fz)
}

/// Isometric copy of a 3D triangle in the plane: first vertex at the origin,
/// first edge along +x, third vertex in the upper half-plane.
pub fn flatten_triangle(a: &Vec3, b: &Vec3, c: &Vec3) -> [Vec2; 3] {
    let e1 = b - a;
    let e2 = c - a;
    let l = e1.norm();
    if l == 0.0 {
        return [Vec2::zeros(), Vec2::zeros(), Vec2::new(0.0, e2.norm())];
    }
    let x = e1 / l;
    let px = e2.dot(&x);
    let py = (e2 - x * px).norm();
    [Vec2::zeros(), Vec2::new(l, 0.0), Vec2::new(px, py)]
}

fn tri2(map: &[Vec2], f: &[usize; 3]) -> [Vec2; 3] {
    [map[f[0]], map[f[1]], map[f[2]]]
}

fn tri3(points: &[Vec3], f: &[usize; 3]) -> [Vec2; 3] {
    flatten_triangle(&points[f[0]], &points[f[1]], &points[f[2]])
}

fn collect_mu(faces: &[[usize; 3]], mut per_face: impl FnMut(&[usize; 3]) -> Option<Complex64>) -> Result<BeltramiField> {
    faces
        .iter()
        .enumerate()
        .map(|(i, f)| per_face(f).ok_or(Error::DegenerateGeometry(i, "degenerate source face")))
        .collect::<Result<Vec<_>>>()
        .map(BeltramiField::new)
}

pub fn beltrami_from_planar_map(source: &PlanarMap, target: &PlanarMap, faces: &[[usize; 3]]) -> Result<BeltramiField> {
    check_len(source.len(), target.len())?;
    collect_mu(faces, |f| affine_beltrami(&tri2(&source.points, f), &tri2(&target.points, f)))
}

/// μ of the map from the curved mesh to a planar image, each source face
/// measured in its own isometric frame.
pub fn beltrami_from_surface_map(mesh: &TriMesh, target: &PlanarMap) -> Result<BeltramiField> {
    check_len(mesh.vertex_count(), target.len())?;
    collect_mu(mesh.faces(), |f| affine_beltrami(&tri3(mesh.vertices(), f), &tri2(&target.points, f)))
}

/// μ of a planar map onto a surface, the image faces measured in local frames.
pub fn beltrami_to_surface(source: &PlanarMap, target: &[Vec3], faces: &[[usize; 3]]) -> Result<BeltramiField> {
    check_len(source.len(), target.len())?;
    collect_mu(faces, |f| affine_beltrami(&tri2(&source.points, f), &tri3(target, f)))
}

/// Per-face `|μ|` of a surface-to-surface map; independent of the frames chosen.
pub fn surface_dilatation(source: &[Vec3], target: &[Vec3], faces: &[[usize; 3]]) -> Result<Vec<f64>> {
    check_len(source.len(), target.len())?;
    collect_mu(faces, |f| affine_beltrami(&tri3(source, f), &tri3(target, f))).map(|m| m.moduli())
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::SizeMismatch(format!("maps have {a} and {b} vertices")));
    }
    Ok(())
}

/// Coefficient matrix of the generalized Laplacian for one face's μ.
pub fn lbs_coefficients(mu: Complex64) -> [[f64; 2]; 2] {
    let (rho, tau) = (mu.re, mu.im);
    let d = 1.0 - rho * rho - tau * tau;
    let a11 = ((rho - 1.0).powi(2) + tau * tau) / d;
    let a12 = -2.0 * tau / d;
    let a22 = ((1.0 + rho).powi(2) + tau * tau) / d;
    [[a11, a12], [a12, a22]]
}

/// Stiffness matrix `K_ij = Σ_T |T| ∇φ_iᵀ A_T ∇φ_j` on the source triangulation.
pub fn lbs_matrix(mu: &BeltramiField, faces: &[[usize; 3]], source: &PlanarMap) -> Result<SparseMatrix> {
    if mu.len() != faces.len() {
        return Err(Error::SizeMismatch(format!("{} coefficients for {} faces", mu.len(), faces.len())));
    }
    let mut trips = Vec::with_capacity(9 * faces.len());
    for (t, f) in faces.iter().enumerate() {
        let m = mu.values[t];
        if is_folded(m) {
            return Err(Error::FoldedBeltrami { face: t, modulus: m.norm() });
        }
        let a = lbs_coefficients(m);
        let p = tri2(&source.points, f);
        let area2 = 2.0 * signed_area_2d(&p[0], &p[1], &p[2]);
        if area2.abs() <= 0.0 {
            return Err(Error::DegenerateGeometry(t, "degenerate source face"));
        }
        let grads: [Vec2; 3] = std::array::from_fn(|i| {
            let e = p[(i + 2) % 3] - p[(i + 1) % 3];
            Vec2::new(-e.y, e.x) / area2
        });
        let area = 0.5 * area2.abs();
        for i in 0..3 {
            let ag = Vec2::new(a[0][0] * grads[i].x + a[0][1] * grads[i].y, a[1][0] * grads[i].x + a[1][1] * grads[i].y);
            for j in 0..3 {
                trips.push((f[i], f[j], area * ag.dot(&grads[j])));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(source.len(), &trips))
}

/// Map whose Beltrami coefficient approximates `mu`, with the given vertices pinned.
pub fn lbs_solve(
    mu: &BeltramiField,
    faces: &[[usize; 3]],
    source: &PlanarMap,
    constraints: &BTreeMap<usize, Vec2>,
) -> Result<PlanarMap> {
    if constraints.is_empty() {
        return Err(Error::SingularSystem("LBS needs pinned vertices".into()));
    }
    let k = lbs_matrix(mu, faces, source)?;
    let fixed = constraints.iter().map(|(&i, p)| (i, vec![p.x, p.y])).collect();
    let sol = SparseSystem::homogeneous(&k, 2, fixed).solve()?;
    Ok(PlanarMap::new((0..source.len()).map(|i| Vec2::new(sol[0][i], sol[1][i])).collect()))
}

/// Replace folded coefficients by the mean of their unfolded face neighbors
/// (zero without any), then cap every modulus at `cap`.
pub fn repair_folds(mu: &BeltramiField, neighbors: &[[Option<usize>; 3]], cap: f64) -> BeltramiField {
    let mut out = mu.values.clone();
    for (i, v) in mu.values.iter().enumerate() {
        if !is_folded(*v) {
            continue;
        }
        let good: Vec<Complex64> = neighbors[i]
            .iter()
            .flatten()
            .map(|&j| mu.values[j])
            .filter(|m| !is_folded(*m))
            .collect();
        out[i] = if good.is_empty() {
            Complex64::new(0.0, 0.0)
        } else {
            good.iter().sum::<Complex64>() / good.len() as f64
        };
    }
    for v in &mut out {
        let r = v.norm();
        if r > cap {
            *v *= cap / r;
        }
    }
    BeltramiField::new(out)
}

/// Remove fold-overs from `map` by re-solving, on a fold-free `reference`
/// triangulation, the LBS with the repaired Beltrami coefficient of
/// `reference → map`; the pinned vertices keep their positions in `map`.
pub fn lbs_unfold(
    reference: &PlanarMap,
    map: &PlanarMap,
    faces: &[[usize; 3]],
    neighbors: &[[Option<usize>; 3]],
    pins: &BTreeMap<usize, Vec2>,
) -> Result<PlanarMap> {
    let mut current = map.clone();
    for _ in 0..5 {
        if count_flipped(&current, faces) == 0 {
            break;
        }
        let mu = beltrami_from_planar_map(reference, &current, faces)?;
        let fixed = repair_folds(&mu, neighbors, MU_CAP);
        current = lbs_solve(&fixed, faces, reference, pins)?;
    }
    let left = count_flipped(&current, faces);
    if left > 0 {
        warn!("{left} faces remain folded after LBS repair");
    }
    Ok(current)
}

/// Number of faces with non-positive signed area in the plane.
pub fn count_flipped(map: &PlanarMap, faces: &[[usize; 3]]) -> usize {
    faces
        .iter()
        .filter(|f| signed_area_2d(&map.points[f[0]], &map.points[f[1]], &map.points[f[2]]) <= 0.0)
        .count()
}

/// Uniform bucket grid over the image triangles of a planar map.
pub struct PointLocator<'a> {
    image: &'a [Vec2],
    faces: &'a [[usize; 3]],
    lo: Vec2,
    cell: Vec2,
    res: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(image: &'a [Vec2], faces: &'a [[usize; 3]]) -> Self {
        let res = ((faces.len() as f64).sqrt().ceil() as usize).max(1);
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for p in image {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let pad = 1e-12 * (hi - lo).norm().max(1.0);
        lo -= Vec2::repeat(pad);
        hi += Vec2::repeat(pad);
        let cell = (hi - lo) / res as f64;
        let mut loc = PointLocator {
            image,
            faces,
            lo,
            cell,
            res,
            buckets: vec![Vec::new(); res * res],
        };
        for (t, f) in faces.iter().enumerate() {
            let (mut a, mut b) = (image[f[0]], image[f[0]]);
            for &v in &f[1..] {
                a = a.inf(&image[v]);
                b = b.sup(&image[v]);
            }
            let (i0, j0) = loc.cell_of(&a);
            let (i1, j1) = loc.cell_of(&b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * res + i].push(t);
                }
            }
        }
        loc
    }

    fn cell_of(&self, p: &Vec2) -> (usize, usize) {
        let c = |v: f64, lo: f64, w: f64| (((v - lo) / w).floor().max(0.0) as usize).min(self.res - 1);
        (c(p.x, self.lo.x, self.cell.x), c(p.y, self.lo.y, self.cell.y))
    }

    /// Face containing `q` and its barycentric coordinates.
    pub fn locate(&self, q: &Vec2) -> Option<(usize, [f64; 3])> {
        let (i, j) = self.cell_of(q);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.res + i] {
            let b = barycentric(&tri2(self.image, &self.faces[t]), q);
            let worst = b[0].min(b[1]).min(b[2]);
            if worst >= -1e-12 && best.as_ref().is_none_or(|x| worst > x.2) {
                best = Some((t, b, worst));
            }
        }
        best.map(|(t, b, _)| (t, b))
    }

    /// Face whose closest point to `q` is nearest, with that point's barycentrics.
    pub fn nearest(&self, q: &Vec2) -> (usize, [f64; 3]) {
        let mut best = (0usize, [1.0, 0.0, 0.0], f64::INFINITY);
        for (t, f) in self.faces.iter().enumerate() {
            let tri = tri2(self.image, f);
            let p = closest_point_triangle_2d(q, &tri);
            let d = (p - q).norm_squared();
            if d < best.2 {
                best = (t, barycentric(&tri, &p), d);
            }
        }
        (best.0, best.1)
    }
}

pub fn barycentric(tri: &[Vec2; 3], q: &Vec2) -> [f64; 3] {
    let d = signed_area_2d(&tri[0], &tri[1], &tri[2]);
    let l0 = signed_area_2d(q, &tri[1], &tri[2]) / d;
    let l1 = signed_area_2d(&tri[0], q, &tri[2]) / d;
    [l0, l1, 1.0 - l0 - l1]
}

fn closest_point_segment(q: &Vec2, a: &Vec2, b: &Vec2) -> Vec2 {
    let ab = b - a;
    let l2 = ab.norm_squared();
    if l2 == 0.0 {
        return *a;
    }
    let t = ((q - a).dot(&ab) / l2).clamp(0.0, 1.0);
    a + ab * t
}

fn closest_point_triangle_2d(q: &Vec2, tri: &[Vec2; 3]) -> Vec2 {
    let b = barycentric(tri, q);
    if b.iter().all(|&x| x >= 0.0) {
        return *q;
    }
    (0..3)
        .map(|i| closest_point_segment(q, &tri[i], &tri[(i + 1) % 3]))
        .min_by(|a, b| (a - q).norm_squared().total_cmp(&(b - q).norm_squared()))
        .unwrap()
}

/// Pre-images of `queries` under the piecewise-linear map `source → image`.
///
/// Queries outside the image are snapped to the nearest image triangle.
pub fn invert_pl_map(source: &PlanarMap, image: &PlanarMap, faces: &[[usize; 3]], queries: &[Vec2]) -> Result<Vec<Vec2>> {
    check_len(source.len(), image.len())?;
    let loc = PointLocator::new(&image.points, faces);
    let mut outside = 0usize;
    let out = queries
        .iter()
        .map(|q| {
            let (t, b) = loc.locate(q).unwrap_or_else(|| {
                outside += 1;
                loc.nearest(q)
            });
            let f = &faces[t];
            source.points[f[0]] * b[0] + source.points[f[1]] * b[1] + source.points[f[2]] * b[2]
        })
        .collect();
    if outside > 0 {
        warn!("{outside} query points outside the map image were projected onto its nearest triangle");
    }
    Ok(out)
}

/// Pin every boundary vertex of `mesh` to its position in `map`.
pub fn boundary_constraints(mesh: &TriMesh, map: &PlanarMap) -> BTreeMap<usize, Vec2> {
    mesh.boundary_loop().indices.iter().map(|&i| (i, map.points[i])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{flat_disk, polar_disk};
    use approx::assert_relative_eq;

    fn disk(rings: usize) -> (PlanarMap, Vec<[usize; 3]>) {
        let (p, f) = polar_disk(rings);
        (PlanarMap::new(p), f)
    }

    fn apply(map: &PlanarMap, f: impl Fn(&Vec2) -> Vec2) -> PlanarMap {
        PlanarMap::new(map.points.iter().map(f).collect())
    }

    #[test]
    fn beltrami_examples() {
        let (src, faces) = disk(3);
        let id = beltrami_from_planar_map(&src, &src, &faces).unwrap();
        assert!(id.max_abs() < 1e-14);
        let stretch = beltrami_from_planar_map(&src, &apply(&src, |p| Vec2::new(2.0 * p.x, p.y)), &faces).unwrap();
        for m in &stretch.values {
            assert_relative_eq!(m.re, 1.0 / 3.0, epsilon = 1e-12);
            assert!(m.im.abs() < 1e-12);
        }
        let mirror = beltrami_from_planar_map(&src, &apply(&src, |p| Vec2::new(p.x, -p.y)), &faces).unwrap();
        assert_eq!(mirror.folded().len(), faces.len());
        assert!(mirror.values[0].re.is_infinite());
    }

    #[test]
    fn shear_on_planar_surface() {
        let mesh = flat_disk(3);
        let target = PlanarMap::new(mesh.vertices().iter().map(|p| Vec2::new(p.x + 0.5 * p.y, p.y)).collect());
        let mu = beltrami_from_surface_map(&mesh, &target).unwrap();
        // f_z = 1 - i/4, f_zbar = i/4
        let expected = Complex64::new(0.0, 0.25) / Complex64::new(1.0, -0.25);
        let own = beltrami_from_surface_map(&mesh, &PlanarMap::new(mesh.vertices().iter().map(|p| p.xy()).collect())).unwrap();
        assert!(own.max_abs() < 1e-12);
        for (m, f) in mu.values.iter().zip(mesh.faces()) {
            // frames differ per face; only the modulus is frame independent
            assert_relative_eq!(m.norm(), expected.norm(), epsilon = 1e-12);
            let _ = f;
        }
        let planar = beltrami_from_planar_map(&PlanarMap::new(mesh.vertices().iter().map(|p| p.xy()).collect()), &target, mesh.faces()).unwrap();
        for m in &planar.values {
            assert!((m - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn similarity_invariance() {
        let (src, faces) = disk(3);
        let warped = apply(&src, |p| Vec2::new(p.x + 0.2 * p.x * p.y, p.y + 0.1 * p.x * p.x));
        let base = beltrami_from_planar_map(&src, &warped, &faces).unwrap();
        let (s, c) = 0.7f64.sin_cos();
        let sim = apply(&warped, |p| Vec2::new(2.5 * (c * p.x - s * p.y) + 1.0, 2.5 * (s * p.x + c * p.y) - 3.0));
        let moved = beltrami_from_planar_map(&src, &sim, &faces).unwrap();
        for (a, b) in base.values.iter().zip(&moved.values) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn lbs_reproduces_identity_and_affine() {
        let mesh = flat_disk(6);
        let src = PlanarMap::new(mesh.vertices().iter().map(|p| p.xy()).collect());
        let faces = mesh.faces();
        let id = lbs_solve(&BeltramiField::zeros(faces.len()), faces, &src, &boundary_constraints(&mesh, &src)).unwrap();
        for (a, b) in id.points.iter().zip(&src.points) {
            assert!((a - b).norm() < 1e-10);
        }
        let target = apply(&src, |p| Vec2::new(2.0 * p.x, p.y));
        let mu = beltrami_from_planar_map(&src, &target, faces).unwrap();
        let out = lbs_solve(&mu, faces, &src, &boundary_constraints(&mesh, &target)).unwrap();
        for (a, b) in out.points.iter().zip(&target.points) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn lbs_reproduces_piecewise_linear_map() {
        let mesh = flat_disk(8);
        let src = PlanarMap::new(mesh.vertices().iter().map(|p| p.xy()).collect());
        let faces = mesh.faces();
        let target = apply(&src, |p| {
            let z = Complex64::new(p.x, p.y);
            let w = z + 0.15 * z * z + Complex64::new(0.1, 0.0) * z.conj();
            Vec2::new(w.re, w.im)
        });
        let mu = beltrami_from_planar_map(&src, &target, faces).unwrap();
        let out = lbs_solve(&mu, faces, &src, &boundary_constraints(&mesh, &target)).unwrap();
        let err = out.points.iter().zip(&target.points).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn lbs_rejects_folded() {
        let (src, faces) = disk(2);
        let mut mu = BeltramiField::zeros(faces.len());
        mu.values[3] = Complex64::new(1.2, 0.0);
        let pins: BTreeMap<usize, Vec2> = [(7, src.points[7])].into_iter().collect();
        assert!(matches!(lbs_solve(&mu, &faces, &src, &pins), Err(Error::FoldedBeltrami { face: 3, .. })));
    }

    #[test]
    fn inversion_examples() {
        let (src, faces) = disk(5);
        let q = vec![Vec2::new(0.1, 0.2), Vec2::new(-0.5, 0.3), Vec2::zeros()];
        let same = invert_pl_map(&src, &src, &faces, &q).unwrap();
        for (a, b) in same.iter().zip(&q) {
            assert!((a - b).norm() < 1e-14);
        }
        let img = apply(&src, |p| Vec2::new(2.0 * p.x, p.y));
        let back = invert_pl_map(&src, &img, &faces, &[Vec2::new(1.0, 0.5)]).unwrap();
        assert!((back[0] - Vec2::new(0.5, 0.5)).norm() < 1e-12);
        let snapped = invert_pl_map(&src, &src, &faces, &[Vec2::new(3.0, 0.0)]).unwrap();
        assert!((snapped[0] - Vec2::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn inversion_round_trip_random_map() {
        let (src, faces) = disk(10);
        let img = apply(&src, |p| {
            let r2 = p.norm_squared();
            Vec2::new(p.x * (1.0 - 0.3 * r2) + 0.05 * p.y, p.y * (1.0 - 0.2 * r2))
        });
        assert_eq!(count_flipped(&img, &faces), 0);
        let verts = invert_pl_map(&src, &img, &faces, &img.points).unwrap();
        for (a, b) in verts.iter().zip(&src.points) {
            assert!((a - b).norm() < 1e-10);
        }
        // interior sample points: barycentric combinations inside each face
        let mut queries = Vec::new();
        let mut expect = Vec::new();
        for (t, f) in faces.iter().enumerate().take(1000) {
            let w = [0.2 + 0.001 * (t % 7) as f64, 0.3, 0.5 - 0.001 * (t % 7) as f64];
            queries.push(img.points[f[0]] * w[0] + img.points[f[1]] * w[1] + img.points[f[2]] * w[2]);
            expect.push(src.points[f[0]] * w[0] + src.points[f[1]] * w[1] + src.points[f[2]] * w[2]);
        }
        let got = invert_pl_map(&src, &img, &faces, &queries).unwrap();
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn repair_examples() {
        let mesh = flat_disk(3);
        let nf = mesh.face_count();
        let small = BeltramiField::new((0..nf).map(|i| Complex64::new(0.01 * (i % 5) as f64, -0.02)).collect());
        assert_eq!(repair_folds(&small, mesh.face_neighbors(), MU_CAP), small);
        let mut one = BeltramiField::zeros(nf);
        one.values[10] = Complex64::new(1.5, 0.0);
        let fixed = repair_folds(&one, mesh.face_neighbors(), MU_CAP);
        assert!(fixed.max_abs() <= MU_CAP);
        assert_eq!(fixed.values[10], Complex64::new(0.0, 0.0));
        let big = BeltramiField::new(vec![Complex64::new(0.0, 0.99); nf]);
        assert_relative_eq!(repair_folds(&big, mesh.face_neighbors(), MU_CAP).max_abs(), MU_CAP, epsilon = 1e-15);
    }

    #[test]
    fn repaired_field_solves_without_flips() {
        let mesh = flat_disk(6);
        let src = PlanarMap::new(mesh.vertices().iter().map(|p| p.xy()).collect());
        let nf = mesh.face_count();
        let mut mu = BeltramiField::new((0..nf).map(|i| Complex64::from_polar(0.5, i as f64 * 0.37)).collect());
        for i in (0..nf).step_by(9) {
            mu.values[i] = Complex64::new(-1.3, 0.4);
        }
        let fixed = repair_folds(&mu, mesh.face_neighbors(), MU_CAP);
        let out = lbs_solve(&fixed, mesh.faces(), &src, &boundary_constraints(&mesh, &src)).unwrap();
        assert_eq!(count_flipped(&out, mesh.faces()), 0);
    }

    #[test]
    fn flatten_preserves_lengths() {
        let (a, b, c) = (Vec3::new(0.3, -1.0, 2.0), Vec3::new(1.0, 0.5, 0.0), Vec3::new(-0.4, 0.2, 0.9));
        let t = flatten_triangle(&a, &b, &c);
        assert_relative_eq!((t[1] - t[0]).norm(), (b - a).norm(), epsilon = 1e-14);
        assert_relative_eq!((t[2] - t[0]).norm(), (c - a).norm(), epsilon = 1e-14);
        assert_relative_eq!((t[2] - t[1]).norm(), (c - b).norm(), epsilon = 1e-14);
        assert!(t[2].y > 0.0);
    }
}
