//! Tutte embedding of the mesh into the unit disk and its lift to the hemispheroid.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryLoop, TriMesh, Vec2};
use crate::projection::{lift, PlanarMap, SurfaceMap};
use crate::registration::Spheroid;
use crate::sparse::{SparseMatrix, SparseSystem};

#[derive(Clone, Debug)]
pub struct TutteResult {
    pub disk: PlanarMap,
    pub hemi: SurfaceMap,
}

/// Graph Laplacian: `1` per edge, minus the degree on the diagonal.
pub fn graph_laplacian(mesh: &TriMesh) -> SparseMatrix {
    let n = mesh.vertex_count();
    let mut trips = Vec::new();
    for (a, b) in mesh.edges() {
        trips.push((a, b, 1.0));
        trips.push((b, a, 1.0));
        trips.push((a, a, -1.0));
        trips.push((b, b, -1.0));
    }
    SparseMatrix::from_triplets(n, &trips)
}

/// Cumulative boundary angles `2π · (l_0 + … + l_j) / L` for each edge `j`.
pub fn arc_angles(lengths: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = lengths.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("boundary has zero total length".into()));
    }
    let mut acc = 0.0;
    let mut out: Vec<f64> = lengths
        .iter()
        .map(|l| {
            acc += l;
            TAU * acc / total
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = TAU;
    }
    Ok(out)
}

/// Unit-circle images of the loop vertices, in loop order.
///
/// The first loop vertex closes the circuit at angle `2π`, placed exactly at
/// `1 + 0i`; vertex `k > 0` sits at the cumulative length of the preceding edges.
pub fn boundary_arc_positions(lp: &BoundaryLoop) -> Result<Vec<Vec2>> {
    let ang = arc_angles(&lp.edge_lengths)?;
    Ok((0..ang.len())
        .map(|k| {
            if k == 0 {
                return Vec2::new(1.0, 0.0);
            }
            Vec2::new(ang[k - 1].cos(), ang[k - 1].sin())
        })
        .collect())
}

pub fn arc_constraints(mesh: &TriMesh) -> Result<BTreeMap<usize, Vec2>> {
    let lp = mesh.boundary_loop();
    let pos = boundary_arc_positions(&lp)?;
    Ok(lp.indices.iter().copied().zip(pos).collect())
}

/// Harmonic map with edge weights given per undirected edge, boundary pinned.
pub(crate) fn weighted_disk_map(mesh: &TriMesh, laplacian: &SparseMatrix, pins: &BTreeMap<usize, Vec2>) -> Result<PlanarMap> {
    let mut neg = laplacian.clone();
    neg.scale(-1.0);
    let fixed = pins.iter().map(|(&i, p)| (i, vec![p.x, p.y])).collect();
    let sol = SparseSystem::homogeneous(&neg, 2, fixed).solve()?;
    Ok(PlanarMap::new(
        (0..mesh.vertex_count()).map(|i| Vec2::new(sol[0][i], sol[1][i])).collect(),
    ))
}

pub fn solve_tutte_disk(mesh: &TriMesh) -> Result<PlanarMap> {
    weighted_disk_map(mesh, &graph_laplacian(mesh), &arc_constraints(mesh)?)
}

pub fn hemispheroidal_tutte(mesh: &TriMesh, s: &Spheroid) -> Result<TutteResult> {
    let disk = solve_tutte_disk(mesh)?;
    let hemi = lift(&disk, s);
    Ok(TutteResult { disk, hemi })
}
