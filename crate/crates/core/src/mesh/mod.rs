//! Indexed triangle meshes with disk topology.
//!
//! A [`TriMesh`] is validated on construction: every accepted mesh is a single
//! connected, orientable, manifold surface with exactly one boundary loop and
//! Euler characteristic one. Face orientation is made consistent by flip
//! propagation if the input disagrees with itself.

mod io;

pub use io::{load_mesh, load_mesh_with, parse_mesh, save_mesh, write_mesh, LoadOptions, MeshFormat, RawMesh};

use std::collections::HashMap;

use log::warn;
use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

/// Cyclically ordered boundary of a disk-topology mesh.
///
/// `edge_lengths[k]` is the length of the edge from `indices[k]` to
/// `indices[(k + 1) % len]`. The loop starts at its lowest vertex index and
/// runs with the surface on its left.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryLoop {
    pub indices: Vec<usize>,
    pub edge_lengths: Vec<f64>,
}

impl BoundaryLoop {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.edge_lengths.iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    /// `neighbors[f][k]` is the face across edge `(faces[f][k], faces[f][(k+1)%3])`.
    neighbors: Vec<[Option<usize>; 3]>,
    boundary: Vec<usize>,
    edge_count: usize,
}

impl TriMesh {
    /// Validate connectivity and build a mesh. Inconsistently oriented faces
    /// are flipped to agree with face 0.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let nv = vertices.len();
        let mut referenced = vec![false; nv];
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= nv {
                    return Err(Error::IndexOutOfRange {
                        face: fi,
                        index: i,
                        count: nv,
                    });
                }
                referenced[i] = true;
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateFace(fi));
            }
        }
        if let Some(v) = referenced.iter().position(|r| !r) {
            return Err(Error::UnreferencedVertex(v));
        }

        let mut faces = faces;
        let edge_faces = edge_incidence(&faces)?;
        let mut neighbors = face_neighbors(&faces, &edge_faces);
        orient_consistently(&mut faces, &mut neighbors)?;

        let edge_count = edge_faces.len();
        let euler = nv as i64 - edge_count as i64 + faces.len() as i64;

        let boundary = trace_boundary(&faces, &neighbors, nv)?;
        check_vertex_manifold(&faces, &neighbors, nv)?;
        if euler != 1 {
            return Err(Error::NonZeroGenus(euler));
        }

        let mesh = TriMesh {
            vertices,
            faces,
            neighbors,
            boundary,
            edge_count,
        };
        let zero = mesh
            .face_areas()
            .iter()
            .filter(|&&a| a <= f64::MIN_POSITIVE)
            .count();
        if zero > 0 {
            warn!("mesh has {zero} zero-area faces");
        }
        Ok(mesh)
    }

    /// Same connectivity with new vertex positions (e.g. a parameterization image).
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::SizeMismatch(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(TriMesh {
            vertices,
            faces: self.faces.clone(),
            neighbors: self.neighbors.clone(),
            boundary: self.boundary.clone(),
            edge_count: self.edge_count,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_neighbors(&self) -> &[[Option<usize>; 3]] {
        &self.neighbors
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edge_count as i64 + self.face_count() as i64
    }

    /// Unique undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| ordered(f[k], f[(k + 1) % 3])))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn is_boundary_vertex(&self) -> Vec<bool> {
        let mut flags = vec![false; self.vertex_count()];
        for &b in &self.boundary {
            flags[b] = true;
        }
        flags
    }

    pub fn boundary_loop(&self) -> BoundaryLoop {
        boundary_loop(self)
    }

    pub fn face_areas(&self) -> Vec<f64> {
        face_areas(self)
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        bounding_box(&self.vertices)
    }

    /// Length of the bounding-box diagonal.
    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn edge_incidence(faces: &[[usize; 3]]) -> Result<HashMap<(usize, usize), Vec<usize>>> {
    let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(faces.len() * 2);
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            let e = ordered(f[k], f[(k + 1) % 3]);
            let entry = map.entry(e).or_default();
            entry.push(fi);
            if entry.len() > 2 {
                return Err(Error::NonManifoldEdge(e.0, e.1));
            }
        }
    }
    Ok(map)
}

fn face_neighbors(
    faces: &[[usize; 3]],
    edge_faces: &HashMap<(usize, usize), Vec<usize>>,
) -> Vec<[Option<usize>; 3]> {
    faces
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let mut n = [None; 3];
            for (k, slot) in n.iter_mut().enumerate() {
                let e = ordered(f[k], f[(k + 1) % 3]);
                *slot = edge_faces[&e].iter().copied().find(|&g| g != fi);
            }
            n
        })
        .collect()
}

fn has_directed_edge(f: &[usize; 3], a: usize, b: usize) -> bool {
    (0..3).any(|k| f[k] == a && f[(k + 1) % 3] == b)
}

/// Breadth-first flip propagation from face 0.
fn orient_consistently(
    faces: &mut [[usize; 3]],
    neighbors: &mut [[Option<usize>; 3]],
) -> Result<()> {
    let nf = faces.len();
    let mut visited = vec![false; nf];
    let mut components = 0;
    let mut queue = std::collections::VecDeque::new();
    for seed in 0..nf {
        if visited[seed] {
            continue;
        }
        components += 1;
        visited[seed] = true;
        queue.push_back(seed);
        while let Some(fi) = queue.pop_front() {
            for k in 0..3 {
                let Some(g) = neighbors[fi][k] else { continue };
                let (a, b) = (faces[fi][k], faces[fi][(k + 1) % 3]);
                // consistent neighbors traverse the shared edge in opposite directions
                let consistent = has_directed_edge(&faces[g], b, a);
                if visited[g] {
                    if !consistent {
                        return Err(Error::NonOrientable);
                    }
                    continue;
                }
                if !consistent {
                    // (v0, v1, v2) -> (v0, v2, v1) reverses the edge order too
                    faces[g].swap(1, 2);
                    neighbors[g].swap(0, 2);
                }
                visited[g] = true;
                queue.push_back(g);
            }
        }
    }
    if components > 1 {
        return Err(Error::MultipleComponents(components));
    }
    Ok(())
}

/// Follow boundary half-edges; returns the single loop starting at its
/// lowest-index vertex.
fn trace_boundary(
    faces: &[[usize; 3]],
    neighbors: &[[Option<usize>; 3]],
    nv: usize,
) -> Result<Vec<usize>> {
    let mut next = vec![usize::MAX; nv];
    let mut half_edges = 0usize;
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            if neighbors[fi][k].is_none() {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if next[a] != usize::MAX {
                    return Err(Error::NonManifoldVertex(a));
                }
                next[a] = b;
                half_edges += 1;
            }
        }
    }
    if half_edges == 0 {
        return Err(Error::ClosedSurface);
    }
    let mut seen = vec![false; nv];
    let mut loops = Vec::new();
    for start in 0..nv {
        if next[start] == usize::MAX || seen[start] {
            continue;
        }
        let mut lp = Vec::new();
        let mut v = start;
        while !seen[v] {
            seen[v] = true;
            lp.push(v);
            v = next[v];
            if v == usize::MAX {
                return Err(Error::NonManifoldVertex(*lp.last().unwrap()));
            }
        }
        if v != start {
            return Err(Error::NonManifoldVertex(v));
        }
        loops.push(lp);
    }
    if loops.len() != 1 {
        return Err(Error::MultipleBoundaries(loops.len()));
    }
    // `start` scanned in increasing order, so the loop already begins at its minimum
    Ok(loops.pop().unwrap())
}

/// Every vertex's incident faces must form a single edge-connected fan.
fn check_vertex_manifold(
    faces: &[[usize; 3]],
    neighbors: &[[Option<usize>; 3]],
    nv: usize,
) -> Result<()> {
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (fi, f) in faces.iter().enumerate() {
        for &v in f {
            incident[v].push(fi);
        }
    }
    let mut stack = Vec::new();
    let mut reached = Vec::new();
    for (v, star) in incident.iter().enumerate() {
        reached.clear();
        reached.push(star[0]);
        stack.clear();
        stack.push(star[0]);
        while let Some(fi) = stack.pop() {
            let f = faces[fi];
            for k in 0..3 {
                // only edges that contain v keep us inside v's star
                if f[k] != v && f[(k + 1) % 3] != v {
                    continue;
                }
                if let Some(g) = neighbors[fi][k] {
                    if !reached.contains(&g) {
                        reached.push(g);
                        stack.push(g);
                    }
                }
            }
        }
        if reached.len() != star.len() {
            return Err(Error::NonManifoldVertex(v));
        }
    }
    Ok(())
}

pub fn boundary_loop(mesh: &TriMesh) -> BoundaryLoop {
    let idx = mesh.boundary.clone();
    let m = idx.len();
    let edge_lengths = (0..m)
        .map(|k| (mesh.vertices[idx[(k + 1) % m]] - mesh.vertices[idx[k]]).norm())
        .collect();
    BoundaryLoop {
        indices: idx,
        edge_lengths,
    }
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Signed area of a planar triangle, positive when counterclockwise.
pub fn signed_area_2d(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x))
}

pub fn face_areas(mesh: &TriMesh) -> Vec<f64> {
    face_areas_of(&mesh.vertices, &mesh.faces)
}

pub fn face_areas_of(points: &[Vec3], faces: &[[usize; 3]]) -> Vec<f64> {
    faces
        .iter()
        .map(|f| triangle_area(&points[f[0]], &points[f[1]], &points[f[2]]))
        .collect()
}

/// Interior angle at `a` of the triangle (a, b, c), in radians.
pub fn angle_at(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let u = b - a;
    let v = c - a;
    u.cross(&v).norm().atan2(u.dot(&v))
}

/// Per-face corner angles in degrees, ordered as the face's vertices.
pub fn corner_angles(mesh: &TriMesh) -> Result<Vec<[f64; 3]>> {
    corner_angles_of(&mesh.vertices, &mesh.faces)
}

pub fn corner_angles_of(points: &[Vec3], faces: &[[usize; 3]]) -> Result<Vec<[f64; 3]>> {
    faces
        .iter()
        .map(|f| {
            for k in 0..3 {
                let (i, j) = (f[k], f[(k + 1) % 3]);
                if (points[j] - points[i]).norm() == 0.0 {
                    return Err(Error::ZeroLengthEdge(i, j));
                }
            }
            let p = [points[f[0]], points[f[1]], points[f[2]]];
            Ok([
                angle_at(&p[0], &p[1], &p[2]).to_degrees(),
                angle_at(&p[1], &p[2], &p[0]).to_degrees(),
                angle_at(&p[2], &p[0], &p[1]).to_degrees(),
            ])
        })
        .collect()
}

pub fn bounding_box(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    pub(crate) fn unit_square() -> TriMesh {
        TriMesh::new(
            vec![v(0., 0., 0.), v(1., 0., 0.), v(1., 1., 0.), v(0., 1., 0.)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    fn hexagon_fan() -> TriMesh {
        let mut verts = vec![v(0., 0., 0.)];
        for k in 0..6 {
            let t = std::f64::consts::PI / 3.0 * k as f64;
            verts.push(v(t.cos(), t.sin(), 0.));
        }
        let faces = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
        TriMesh::new(verts, faces).unwrap()
    }

    #[test]
    fn single_triangle_topology() {
        let m = TriMesh::new(vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)], vec![[0, 1, 2]]).unwrap();
        assert_eq!((m.vertex_count(), m.edge_count(), m.face_count()), (3, 3, 1));
        assert_eq!(m.euler_characteristic(), 1);
        let lp = m.boundary_loop();
        assert_eq!(lp.indices, vec![0, 1, 2]);
        assert_relative_eq!(lp.edge_lengths[0], 1.0);
        assert_relative_eq!(lp.edge_lengths[1], 2f64.sqrt());
        assert_relative_eq!(lp.edge_lengths[2], 1.0);
    }

    #[test]
    fn two_triangles_share_an_edge() {
        let m = unit_square();
        let lp = m.boundary_loop();
        assert_eq!(lp.indices, vec![0, 1, 2, 3]);
        assert!(lp.edge_lengths.iter().all(|&l| (l - 1.0).abs() < 1e-15));
        assert_relative_eq!(face_areas(&m).iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn hexagon_rim_is_the_loop() {
        let m = hexagon_fan();
        let lp = m.boundary_loop();
        assert_eq!(lp.indices, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn loop_follows_face_orientation() {
        // clockwise square: loop must run clockwise too (surface on the left of
        // the directed boundary when viewed along the face normal)
        let m = TriMesh::new(
            vec![v(0., 0., 0.), v(1., 0., 0.), v(1., 1., 0.), v(0., 1., 0.)],
            vec![[0, 2, 1], [0, 3, 2]],
        )
        .unwrap();
        assert_eq!(m.boundary_loop().indices, vec![0, 3, 2, 1]);
    }

    #[test]
    fn closed_tetrahedron_rejected() {
        let verts = vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(0., 0., 1.)];
        let faces = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]];
        let err = TriMesh::new(verts, faces).unwrap_err();
        assert!(matches!(err, Error::ClosedSurface));
        assert_eq!(err.to_string(), "no boundary loop (closed surface)");
    }

    #[test]
    fn inconsistent_orientation_repaired() {
        let m = TriMesh::new(
            vec![v(0., 0., 0.), v(1., 0., 0.), v(1., 1., 0.), v(0., 1., 0.)],
            vec![[0, 1, 2], [0, 3, 2]],
        )
        .unwrap();
        assert_eq!(m.faces()[1], [0, 2, 3]);
    }

    #[test]
    fn distinct_topology_errors() {
        // two disjoint triangles
        let verts: Vec<Vec3> = (0..6).map(|i| v(i as f64, (i % 2) as f64, 0.)).collect();
        assert!(matches!(
            TriMesh::new(verts.clone(), vec![[0, 1, 2], [3, 4, 5]]),
            Err(Error::MultipleComponents(2))
        ));
        // three faces on one edge
        let verts = vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(0., -1., 0.), v(0., 0., 1.)];
        assert!(matches!(
            TriMesh::new(verts, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]]),
            Err(Error::NonManifoldEdge(0, 1))
        ));
        // strip whose two ends are pinched together at vertex 0
        let verts = vec![v(0., 0., 0.), v(1., 0., 0.), v(1., 1., 0.), v(2., 0., 1.), v(2., 1., 1.), v(3., 0., 0.)];
        assert!(matches!(
            TriMesh::new(verts, vec![[0, 1, 2], [1, 3, 2], [2, 3, 4], [3, 5, 4], [4, 5, 0]]),
            Err(Error::NonManifoldVertex(0))
        ));
        assert!(matches!(
            TriMesh::new(vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)], vec![[0, 1, 1]]),
            Err(Error::DegenerateFace(0))
        ));
        assert!(matches!(
            TriMesh::new(vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)], vec![[0, 1, 3]]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn annulus_has_two_boundaries() {
        // square ring: outer 0..4, inner 4..8
        let verts = vec![
            v(0., 0., 0.), v(3., 0., 0.), v(3., 3., 0.), v(0., 3., 0.),
            v(1., 1., 0.), v(2., 1., 0.), v(2., 2., 0.), v(1., 2., 0.),
        ];
        let faces = vec![
            [0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5],
            [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7],
        ];
        assert!(matches!(TriMesh::new(verts, faces), Err(Error::MultipleBoundaries(2))));
    }

    #[test]
    fn corner_angles_known_triangles() {
        let s3 = 3f64.sqrt();
        let eq = corner_angles_of(&[v(0., 0., 0.), v(2., 0., 0.), v(1., s3, 0.)], &[[0, 1, 2]]).unwrap();
        for a in eq[0] {
            assert_relative_eq!(a, 60.0, epsilon = 1e-12);
        }
        let ri = corner_angles_of(&[v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)], &[[0, 1, 2]]).unwrap();
        assert_relative_eq!(ri[0][0], 90.0, epsilon = 1e-12);
        assert_relative_eq!(ri[0][1], 45.0, epsilon = 1e-12);
        assert_relative_eq!(ri[0][2], 45.0, epsilon = 1e-12);
        let t345 = corner_angles_of(&[v(0., 0., 0.), v(4., 0., 0.), v(0., 3., 0.)], &[[0, 1, 2]]).unwrap();
        assert_relative_eq!(t345[0][0], 90.0, epsilon = 1e-12);
        assert_relative_eq!(t345[0][2], 53.13010235415598, epsilon = 1e-10);
        assert_relative_eq!(t345[0][1], 36.86989764584402, epsilon = 1e-10);
    }

    #[test]
    fn zero_length_edge_is_an_error() {
        let r = corner_angles_of(&[v(0., 0., 0.), v(0., 0., 0.), v(0., 1., 0.)], &[[0, 1, 2]]);
        assert!(matches!(r, Err(Error::ZeroLengthEdge(0, 1))));
    }

    #[test]
    fn areas_known_triangles() {
        let s3 = 3f64.sqrt();
        assert_relative_eq!(triangle_area(&v(0., 0., 0.), &v(1., 0., 0.), &v(0., 1., 0.)), 0.5);
        assert_relative_eq!(triangle_area(&v(0., 0., 0.), &v(2., 0., 0.), &v(1., s3, 0.)), s3, epsilon = 1e-15);
    }
}
