//! Distortion, reconstruction-error and basis-orthogonality diagnostics.

use std::fmt::Write as _;

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harmonics::basis_matrix;
use crate::mesh::{corner_angles_of, face_areas_of, TriMesh, Vec3};
use crate::projection::SpheroidalCoords;
use crate::registration::SpheroidKind;

pub const HISTOGRAM_BINS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    /// `HISTOGRAM_BINS + 1` bin edges, uniform over `[min, max]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn of(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if values.is_empty() { (0.0, 0.0) } else { (lo, hi) };
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        let edges = (0..=HISTOGRAM_BINS).map(|i| if i == HISTOGRAM_BINS { hi } else { lo + i as f64 * width }).collect();
        let mut counts = vec![0; HISTOGRAM_BINS];
        for v in values {
            let b = if width > 0.0 { ((v - lo) / width) as usize } else { 0 };
            counts[b.min(HISTOGRAM_BINS - 1)] += 1;
        }
        Histogram { edges, counts }
    }
}

/// Signed per-item distortion with statistics of its absolute value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionReport {
    #[serde(skip)]
    pub values: Vec<f64>,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    /// Histogram of the absolute values.
    pub histogram: Histogram,
}

impl DistortionReport {
    pub fn new(values: Vec<f64>) -> Self {
        let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        let n = abs.len().max(1) as f64;
        let mean = abs.iter().sum::<f64>() / n;
        let var = abs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        DistortionReport {
            count: values.len(),
            mean,
            std: var.sqrt(),
            histogram: Histogram::of(&abs),
            values,
        }
    }

    /// `bin_lo,bin_hi,count` rows.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        let h = &self.histogram;
        for (i, c) in h.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", h.edges[i], h.edges[i + 1], c);
        }
        out
    }
}

fn check_image(mesh: &TriMesh, image: &[Vec3]) -> Result<()> {
    if image.len() != mesh.vertex_count() {
        return Err(Error::SizeMismatch(format!(
            "image has {} points for {} vertices",
            image.len(),
            mesh.vertex_count()
        )));
    }
    Ok(())
}

/// Image minus source corner angle in degrees, three per face.
///
/// Planar images are passed with `z = 0` (see [`crate::projection::PlanarMap::to_3d`]).
pub fn angle_distortion(mesh: &TriMesh, image: &[Vec3]) -> Result<DistortionReport> {
    check_image(mesh, image)?;
    let src = corner_angles_of(mesh.vertices(), mesh.faces())?;
    let dst = corner_angles_of(image, mesh.faces())?;
    let mut values = Vec::with_capacity(3 * src.len());
    for (i, (s, d)) in src.iter().zip(&dst).enumerate() {
        for k in 0..3 {
            if !d[k].is_finite() || d[k] == 0.0 {
                return Err(Error::DegenerateGeometry(i, "image corner"));
            }
            values.push(d[k] - s[k]);
        }
    }
    Ok(DistortionReport::new(values))
}

/// Per face, the log of the image area share over the source area share.
pub fn area_distortion(mesh: &TriMesh, image: &[Vec3]) -> Result<DistortionReport> {
    check_image(mesh, image)?;
    let src = face_areas_of(mesh.vertices(), mesh.faces());
    let dst = face_areas_of(image, mesh.faces());
    if let Some(i) = src.iter().position(|a| !(*a > 0.0)) {
        return Err(Error::DegenerateGeometry(i, "source mesh"));
    }
    if let Some(i) = dst.iter().position(|a| !(*a > 0.0)) {
        return Err(Error::DegenerateGeometry(i, "image"));
    }
    let (ts, td): (f64, f64) = (src.iter().sum(), dst.iter().sum());
    Ok(DistortionReport::new(
        src.iter().zip(&dst).map(|(s, d)| ((d / td) / (s / ts)).ln()).collect(),
    ))
}

/// Closest point to `p` on triangle `abc`.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            lo: self.lo.inf(&o.lo),
            hi: self.hi.sup(&o.hi),
        }
    }

    fn dist2(&self, p: &Vec3) -> f64 {
        let d = (self.lo - p).sup(&(p - self.hi)).sup(&Vec3::zeros());
        d.norm_squared()
    }
}

enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Axis-aligned bounding-volume hierarchy over the faces of a mesh.
pub struct TriangleBvh<'a> {
    points: &'a [Vec3],
    faces: &'a [[usize; 3]],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

const LEAF_SIZE: usize = 8;

impl<'a> TriangleBvh<'a> {
    pub fn new(points: &'a [Vec3], faces: &'a [[usize; 3]]) -> Self {
        let mut bvh = TriangleBvh {
            points,
            faces,
            order: (0..faces.len()).collect(),
            nodes: Vec::with_capacity(2 * faces.len() / LEAF_SIZE + 1),
        };
        let centroids: Vec<Vec3> = faces
            .iter()
            .map(|f| (points[f[0]] + points[f[1]] + points[f[2]]) / 3.0)
            .collect();
        if !faces.is_empty() {
            bvh.build(0, faces.len(), &centroids);
        }
        bvh
    }

    fn face_box(&self, t: usize) -> Aabb {
        let mut b = Aabb::empty();
        for &v in &self.faces[t] {
            b.grow(&self.points[v]);
        }
        b
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Vec3]) -> usize {
        let bounds = self.order[start..end]
            .iter()
            .fold(Aabb::empty(), |b, &t| b.merge(&self.face_box(t)));
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bounds, start, end });
            return id;
        }
        let mut cb = Aabb::empty();
        for &t in &self.order[start..end] {
            cb.grow(&centroids[t]);
        }
        let ext = cb.hi - cb.lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z { 0 } else if ext.y >= ext.z { 1 } else { 2 };
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
        });
        self.nodes.push(Node::Leaf { bounds, start, end });
        let left = self.build(start, mid, centroids);
        let right = self.build(mid, end, centroids);
        self.nodes[id] = Node::Inner { bounds, left, right };
        id
    }

    /// Squared distance from `p` to the nearest face.
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        if self.nodes.is_empty() {
            return best;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.bounds().dist2(p) >= best {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[start..end] {
                        let f = self.faces[t];
                        let q = closest_point_on_triangle(p, &self.points[f[0]], &self.points[f[1]], &self.points[f[2]]);
                        best = best.min((q - p).norm_squared());
                    }
                }
                Node::Inner { left, right, .. } => {
                    let (dl, dr) = (self.nodes[left].bounds().dist2(p), self.nodes[right].bounds().dist2(p));
                    // visit the nearer child first
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }
}

fn rms_to_surface(from: &[Vec3], to: &TriMesh) -> f64 {
    let bvh = TriangleBvh::new(to.vertices(), to.faces());
    let sum: f64 = from.iter().map(|p| bvh.distance_squared(p)).sum();
    (sum / from.len() as f64).sqrt()
}

/// Mean of the two directed root-mean-square vertex-to-surface distances.
pub fn symmetric_rms_distance(input: &TriMesh, output: &TriMesh) -> f64 {
    0.5 * (rms_to_surface(input.vertices(), output) + rms_to_surface(output.vertices(), input))
}

/// Reconstruction error: [`symmetric_rms_distance`] divided by the input
/// bounding-box diagonal.
pub fn a_rmse(input: &TriMesh, output: &TriMesh) -> f64 {
    symmetric_rms_distance(input, output) / input.diagonal()
}

/// Distance from each point to its nearest other point.
pub fn nearest_neighbor_distances(points: &[Vec3]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x));
    let mut out = vec![f64::INFINITY; points.len()];
    for (k, &i) in idx.iter().enumerate() {
        let p = points[i];
        let mut best = f64::INFINITY;
        for &j in &idx[k + 1..] {
            if points[j].x - p.x >= best {
                break;
            }
            best = best.min((points[j] - p).norm());
        }
        for &j in idx[..k].iter().rev() {
            if p.x - points[j].x >= best {
                break;
            }
            best = best.min((points[j] - p).norm());
        }
        out[i] = best;
    }
    out
}

/// Gram matrix of the basis sampled at `points`, each column scaled to unit norm.
pub fn normalized_gram(points: &[SpheroidalCoords], weights: Option<&[f64]>, n_max: usize, kind: SpheroidKind) -> Result<Mat<f64>> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no sample points".into()));
    }
    let mut b = basis_matrix(points, n_max, kind).values;
    if let Some(w) = weights {
        if w.len() != points.len() || w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("one nonnegative weight per point is required".into()));
        }
        for j in 0..b.ncols() {
            for i in 0..b.nrows() {
                b[(i, j)] *= w[i].sqrt();
            }
        }
    }
    for j in 0..b.ncols() {
        let norm = (0..b.nrows()).map(|i| b[(i, j)] * b[(i, j)]).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument(format!("basis column {j} vanishes on the sample points")));
        }
        for i in 0..b.nrows() {
            b[(i, j)] /= norm;
        }
    }
    Ok(b.transpose() * &b)
}

/// Entrywise `|G_map − G_ref|` of the normalized Gram matrices and its mean.
pub fn orthogonality_error(
    map_points: &[SpheroidalCoords],
    reference_points: &[SpheroidalCoords],
    n_max: usize,
    kind: SpheroidKind,
) -> Result<(Mat<f64>, f64)> {
    let g = normalized_gram(map_points, None, n_max, kind)?;
    let r = normalized_gram(reference_points, None, n_max, kind)?;
    let diff = Mat::from_fn(g.nrows(), g.ncols(), |i, j| (g[(i, j)] - r[(i, j)]).abs());
    let total: f64 = (0..diff.nrows()).flat_map(|i| (0..diff.ncols()).map(move |j| (i, j))).map(|(i, j)| diff[(i, j)]).sum();
    let mean = total / (diff.nrows() * diff.ncols()) as f64;
    Ok((diff, mean))
}

/// Mean absolute off-diagonal entry of the normalized Gram matrix.
pub fn mean_orthogonality(map_points: &[SpheroidalCoords], n_max: usize, kind: SpheroidKind) -> Result<f64> {
    mean_orthogonality_weighted(map_points, None, n_max, kind)
}

pub fn mean_orthogonality_weighted(
    map_points: &[SpheroidalCoords],
    weights: Option<&[f64]>,
    n_max: usize,
    kind: SpheroidKind,
) -> Result<f64> {
    let g = normalized_gram(map_points, weights, n_max, kind)?;
    let k = g.nrows();
    if k == 1 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for j in 0..k {
        for i in 0..k {
            if i != j {
                sum += g[(i, j)].abs();
            }
        }
    }
    Ok(sum / (k * k - k) as f64)
}
