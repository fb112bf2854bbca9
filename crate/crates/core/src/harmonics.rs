//! Hemispheroidal harmonics: a real orthonormal basis built from fully
//! normalized associated Legendre functions of the shifted argument `ξ̂`,
//! least-squares decomposition of a parameterized surface, and truncated
//! reconstruction.
//!
//! Columns are indexed by `n² + n + m` for degree `n` and order `m ∈ [−n, n]`.
//! Order `m > 0` carries `√2 cos(mφ)`, `m < 0` carries `√2 sin(|m|φ)`. The
//! Condon–Shortley phase is not included.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fs;
use std::path::Path;

use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::{Mat, Side};
use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::projection::{eta_phi_to_point, spheroidal_projection, surface_coords, xi_hat, SpheroidalCoords, SurfaceMap};
use crate::registration::{RigidTransform, Spheroid, SpheroidKind};

/// Largest basis size solved through normal equations; larger systems use QR.
pub const NORMAL_EQUATIONS_MAX_COLS: usize = 1600;

/// Number of basis functions up to degree `n_max`.
pub fn basis_len(n_max: usize) -> usize {
    (n_max + 1) * (n_max + 1)
}

/// Column of `(n, m)`.
pub fn column_index(n: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= n);
    ((n * n + n) as i64 + m) as usize
}

/// `(n, m)` of a column.
pub fn degree_order(col: usize) -> (usize, i64) {
    let n = (col as f64).sqrt() as usize;
    let n = if (n + 1) * (n + 1) <= col { n + 1 } else if n * n > col { n - 1 } else { n };
    (n, col as i64 - (n * n + n) as i64)
}

fn tri(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m
}

/// All `N_m^n P_m^n(x)` for `0 ≤ m ≤ n ≤ n_max`, stored at `n(n+1)/2 + m`.
///
/// Sectoral seeds are built multiplicatively in normalized form and the
/// degree recurrence carries the normalization, so no factorials appear.
pub fn alp_table(n_max: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize(tri(n_max, n_max) + 1, 0.0);
    let s = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let mut pmm = 0.5 / PI.sqrt();
    for m in 0..=n_max {
        if m > 0 {
            let mf = m as f64;
            pmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
        }
        out[tri(m, m)] = pmm;
        if m == n_max {
            break;
        }
        let mut p2 = pmm;
        let mut p1 = (2.0 * m as f64 + 3.0).sqrt() * x * pmm;
        out[tri(m + 1, m)] = p1;
        let mf2 = (m * m) as f64;
        for n in m + 2..=n_max {
            let nf = n as f64;
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf2)).sqrt();
            let b = (((nf - 1.0) * (nf - 1.0) - mf2) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0)).sqrt();
            let p = a * (x * p1 - b * p2);
            out[tri(n, m)] = p;
            p2 = p1;
            p1 = p;
        }
    }
}

/// Fully normalized associated Legendre value `N_m^n P_m^n(xhat)`.
pub fn alp_normalized(n: usize, m: usize, xhat: f64) -> Result<f64> {
    if m > n {
        return Err(Error::InvalidArgument(format!("order {m} exceeds degree {n}")));
    }
    if !(xhat.abs() <= 1.0) {
        return Err(Error::InvalidArgument(format!("Legendre argument {xhat} outside [-1, 1]")));
    }
    let mut table = Vec::new();
    alp_table(n, xhat, &mut table);
    Ok(table[tri(n, m)])
}

/// Azimuthal factors indexed by `m + n_max`: `√2 sin(|m|φ)`, `1`, `√2 cos(mφ)`.
fn trig_table(n_max: usize, phi: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize(2 * n_max + 1, 0.0);
    out[n_max] = 1.0;
    for m in 1..=n_max {
        let (s, c) = (m as f64 * phi).sin_cos();
        out[n_max + m] = 2f64.sqrt() * c;
        out[n_max - m] = 2f64.sqrt() * s;
    }
}

fn fill_row(n_max: usize, alp: &[f64], trig: &[f64], mut put: impl FnMut(usize, f64)) {
    for n in 0..=n_max {
        for m in -(n as i64)..=(n as i64) {
            let p = alp[tri(n, m.unsigned_abs() as usize)];
            put(column_index(n, m), p * trig[(n_max as i64 + m) as usize]);
        }
    }
}

/// Basis values at sample points: one row per point, one column per `(n, m)`.
#[derive(Clone, Debug)]
pub struct BasisMatrix {
    pub n_max: usize,
    pub kind: SpheroidKind,
    pub coords: Vec<SpheroidalCoords>,
    pub values: Mat<f64>,
}

impl BasisMatrix {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }
}

/// Basis values at one point, written into `out` (length `(n_max+1)²`).
pub fn basis_row(coord: &SpheroidalCoords, n_max: usize, kind: SpheroidKind, out: &mut [f64]) {
    let (mut alp, mut trig) = (Vec::new(), Vec::new());
    alp_table(n_max, xi_hat(coord.eta, kind), &mut alp);
    trig_table(n_max, coord.phi, &mut trig);
    fill_row(n_max, &alp, &trig, |c, v| out[c] = v);
}

pub fn basis_matrix(points: &[SpheroidalCoords], n_max: usize, kind: SpheroidKind) -> BasisMatrix {
    let mut values = Mat::zeros(points.len(), basis_len(n_max));
    let (mut alp, mut trig) = (Vec::new(), Vec::new());
    for (r, c) in points.iter().enumerate() {
        alp_table(n_max, xi_hat(c.eta, kind), &mut alp);
        trig_table(n_max, c.phi, &mut trig);
        fill_row(n_max, &alp, &trig, |col, v| values[(r, col)] = v);
    }
    BasisMatrix {
        n_max,
        kind,
        coords: points.to_vec(),
        values,
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; count];
    let mut weights = vec![0.0; count];
    let nf = count as f64;
    for i in 0..count.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=count {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_count(x), p0 = P_{count-1}(x)
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[count - 1 - i] = x;
        weights[i] = w;
        weights[count - 1 - i] = w;
    }
    (nodes, weights)
}

fn eta_of_xi_hat(xh: f64, kind: SpheroidKind) -> f64 {
    match kind {
        SpheroidKind::Oblate => ((xh + 1.0) / 2.0).clamp(-1.0, 1.0).asin(),
        SpheroidKind::Prolate => ((1.0 - xh) / 2.0).clamp(-1.0, 1.0).acos(),
    }
}

/// Tensor quadrature (Gauss–Legendre in `ξ̂`, uniform in `φ`) that integrates
/// products of basis functions up to degree `n_max` exactly under `dξ̂ dφ`.
pub fn quadrature_points(n_max: usize, kind: SpheroidKind) -> (Vec<SpheroidalCoords>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n_max + 2);
    let m = 2 * n_max + 2;
    let dphi = TAU / m as f64;
    let mut pts = Vec::with_capacity(xs.len() * m);
    let mut wts = Vec::with_capacity(xs.len() * m);
    for (x, w) in xs.iter().zip(&ws) {
        let eta = eta_of_xi_hat(*x, kind);
        for k in 0..m {
            pts.push(SpheroidalCoords { eta, phi: k as f64 * dphi });
            wts.push(w * dphi);
        }
    }
    (pts, wts)
}

/// Largest entry of `G − I` for the quadrature Gram matrix up to `n_max`.
///
/// The quadrature grid is a tensor product, so the Gram matrix factors into
/// a Legendre part and an azimuthal part; both are accumulated from the same
/// tables that fill [`basis_matrix`] rows, without storing the full matrix.
pub fn quadrature_gram_deviation(n_max: usize) -> f64 {
    let (xs, ws) = gauss_legendre(n_max + 2);
    let nphi = 2 * n_max + 2;
    let dphi = TAU / nphi as f64;
    let t = tri(n_max, n_max) + 1;
    let mut legendre = Mat::<f64>::zeros(xs.len(), t);
    let mut alp = Vec::new();
    for (j, (x, w)) in xs.iter().zip(&ws).enumerate() {
        alp_table(n_max, *x, &mut alp);
        for (k, v) in alp.iter().enumerate() {
            legendre[(j, k)] = w.sqrt() * v;
        }
    }
    let lgram: Mat<f64> = legendre.transpose() * &legendre;
    let width = 2 * n_max + 1;
    let mut trig = Vec::new();
    let mut tgram = vec![0.0; width * width];
    for k in 0..nphi {
        trig_table(n_max, k as f64 * dphi, &mut trig);
        for a in 0..width {
            for b in 0..width {
                tgram[a * width + b] += dphi * trig[a] * trig[b];
            }
        }
    }
    let mut worst = 0.0f64;
    for n in 0..=n_max {
        for m in -(n as i64)..=(n as i64) {
            let (ra, ia) = (tri(n, m.unsigned_abs() as usize), (n_max as i64 + m) as usize);
            let ca = column_index(n, m);
            for n2 in 0..=n_max {
                for m2 in -(n2 as i64)..=(n2 as i64) {
                    let (rb, ib) = (tri(n2, m2.unsigned_abs() as usize), (n_max as i64 + m2) as usize);
                    let g = tgram[ia * width + ib] * lgram[(ra, rb)];
                    let target = if ca == column_index(n2, m2) { 1.0 } else { 0.0 };
                    let d = (g - target).abs();
                    if !(d <= worst) {
                        worst = if d.is_nan() { f64::INFINITY } else { d };
                    }
                }
            }
        }
    }
    worst
}

/// Expansion coefficients `A_m^n` for the x, y and z channels.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicCoeffs {
    pub n_max: usize,
    /// One `[x, y, z]` triple per column, in column order.
    pub coeffs: Vec<[f64; 3]>,
    pub spheroid: Spheroid,
    pub eps_eta: f64,
    /// Maps the input pose to the registered pose the expansion lives in.
    pub registration: RigidTransform,
}

pub const COEFF_FORMAT: &str = "hemiparam-coefficients";
pub const COEFF_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpheroidRepr {
    a: f64,
    c: f64,
    kind: SpheroidKind,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoeffFile {
    format: String,
    version: u32,
    n_max: usize,
    spheroid: SpheroidRepr,
    eps_eta: f64,
    registration: RigidTransform,
    coefficients: Vec<[f64; 3]>,
}

impl HarmonicCoeffs {
    pub fn get(&self, n: usize, m: i64) -> [f64; 3] {
        self.coeffs[column_index(n, m)]
    }

    pub fn with_registration(mut self, registration: RigidTransform) -> Self {
        self.registration = registration;
        self
    }

    pub fn to_json(&self) -> String {
        let file = CoeffFile {
            format: COEFF_FORMAT.into(),
            version: COEFF_VERSION,
            n_max: self.n_max,
            spheroid: SpheroidRepr {
                a: self.spheroid.a,
                c: self.spheroid.c,
                kind: self.spheroid.kind,
            },
            eps_eta: self.eps_eta,
            registration: self.registration,
            coefficients: self.coeffs.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("coefficients serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Parse { line: 0, message: m };
        let f: CoeffFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if f.format != COEFF_FORMAT || f.version != COEFF_VERSION {
            return Err(bad(format!("unsupported coefficient file {} v{}", f.format, f.version)));
        }
        if f.coefficients.len() != basis_len(f.n_max) {
            return Err(bad(format!(
                "expected {} coefficient triples for n_max = {}, found {}",
                basis_len(f.n_max),
                f.n_max,
                f.coefficients.len()
            )));
        }
        if f.coefficients.iter().flatten().any(|v| !v.is_finite()) {
            return Err(bad("non-finite coefficient".into()));
        }
        let spheroid = Spheroid::new(f.spheroid.a, f.spheroid.c)?;
        if spheroid.kind != f.spheroid.kind || spheroid.c != f.spheroid.c {
            return Err(bad("spheroid kind does not match its semiaxes".into()));
        }
        Ok(HarmonicCoeffs {
            n_max: f.n_max,
            coeffs: f.coefficients,
            spheroid,
            eps_eta: f.eps_eta,
            registration: f.registration,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Least-squares solution of `basis · X ≈ rhs`, optionally row-weighted.
pub fn least_squares(basis: &Mat<f64>, rhs: &Mat<f64>, weights: Option<&[f64]>) -> Result<Mat<f64>> {
    let (rows, cols) = (basis.nrows(), basis.ncols());
    let deficient = Error::RankDeficient { rows, cols };
    if rows < cols {
        return Err(deficient);
    }
    let (a, b) = match weights {
        None => (basis.clone(), rhs.clone()),
        Some(w) => {
            if w.len() != rows || w.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidArgument("least-squares weights must be positive, one per row".into()));
            }
            let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
            (
                Mat::from_fn(rows, cols, |i, j| sw[i] * basis[(i, j)]),
                Mat::from_fn(rows, rhs.ncols(), |i, j| sw[i] * rhs[(i, j)]),
            )
        }
    };
    let x = if cols <= NORMAL_EQUATIONS_MAX_COLS {
        let gram: Mat<f64> = a.transpose() * &a;
        let atb: Mat<f64> = a.transpose() * &b;
        let llt = gram.llt(Side::Lower).map_err(|_| Error::RankDeficient { rows, cols })?;
        let l = llt.L();
        // relative pivot test; tiny pivots mean nearly dependent columns
        if (0..cols).any(|i| l[(i, i)] * l[(i, i)] < 1e-11 * gram[(i, i)]) {
            return Err(deficient);
        }
        llt.solve(&atb)
    } else {
        let qr = a.qr();
        let r = qr.thin_R();
        let big = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        if (0..cols).any(|i| r[(i, i)].abs() < 1e-10 * big) {
            return Err(deficient);
        }
        qr.solve_lstsq(&b)
    };
    if (0..x.nrows()).any(|i| (0..x.ncols()).any(|j| !x[(i, j)].is_finite())) {
        return Err(Error::NonFinite("harmonic least squares"));
    }
    Ok(x)
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub coeffs: HarmonicCoeffs,
    /// Surface coordinates of the mapped vertices.
    pub coords: Vec<SpheroidalCoords>,
    /// Root-mean-square vertex residual of the fit.
    pub residual_rms: f64,
}

/// Expand the vertex positions of `mesh` over the basis at the parameter
/// positions `hemi`; the expansion is in the coordinates of `mesh`.
pub fn decompose(hemi: &SurfaceMap, mesh: &TriMesh, s: &Spheroid, n_max: usize, eps_eta: f64) -> Result<Decomposition> {
    decompose_with(hemi, mesh, s, n_max, eps_eta, false)
}

/// As [`decompose`]; `area_weighted` weights each vertex by a third of its
/// incident face area.
pub fn decompose_with(
    hemi: &SurfaceMap,
    mesh: &TriMesh,
    s: &Spheroid,
    n_max: usize,
    eps_eta: f64,
    area_weighted: bool,
) -> Result<Decomposition> {
    if hemi.len() != mesh.vertex_count() {
        return Err(Error::SizeMismatch(format!(
            "{} parameter positions for {} vertices",
            hemi.len(),
            mesh.vertex_count()
        )));
    }
    let coords = surface_coords(hemi, s, eps_eta)?;
    let weights = area_weighted.then(|| crate::fem::lumped_mass(mesh.vertex_count(), mesh.faces(), &mesh.face_areas()));
    let coeffs = fit_points(&coords, mesh.vertices(), s, n_max, eps_eta, weights.as_deref())?;
    let fitted = reconstruct(&coeffs, &coords, n_max)?;
    let sq: f64 = fitted.iter().zip(mesh.vertices()).map(|(a, b)| (a - b).norm_squared()).sum();
    let residual_rms = (sq / coords.len() as f64).sqrt();
    debug!("decomposed {} vertices at n_max = {n_max}, residual {residual_rms:.3e}", coords.len());
    Ok(Decomposition {
        coeffs,
        coords,
        residual_rms,
    })
}

/// Fit coefficients to `values` sampled at `coords`; latitudes below
/// `eps_eta` are raised to it as in [`reconstruct`].
pub fn fit_points(
    coords: &[SpheroidalCoords],
    values: &[Vec3],
    s: &Spheroid,
    n_max: usize,
    eps_eta: f64,
    weights: Option<&[f64]>,
) -> Result<HarmonicCoeffs> {
    let clamped: Vec<SpheroidalCoords> = coords
        .iter()
        .map(|c| SpheroidalCoords {
            eta: c.eta.max(eps_eta),
            phi: c.phi,
        })
        .collect();
    let basis = basis_matrix(&clamped, n_max, s.kind);
    let rhs = Mat::from_fn(values.len(), 3, |i, j| values[i][j]);
    let x = least_squares(&basis.values, &rhs, weights)?;
    Ok(HarmonicCoeffs {
        n_max,
        coeffs: (0..x.nrows()).map(|i| [x[(i, 0)], x[(i, 1)], x[(i, 2)]]).collect(),
        spheroid: *s,
        eps_eta,
        registration: RigidTransform::identity(),
    })
}

/// Evaluate the expansion truncated at degree `n_upto`, in the registered pose.
/// Latitudes below the file's `eps_eta` are raised to it.
pub fn reconstruct(coeffs: &HarmonicCoeffs, points: &[SpheroidalCoords], n_upto: usize) -> Result<Vec<Vec3>> {
    if n_upto > coeffs.n_max {
        return Err(Error::InvalidArgument(format!(
            "truncation degree {n_upto} exceeds n_max = {}",
            coeffs.n_max
        )));
    }
    let len = basis_len(n_upto);
    let mut row = vec![0.0; len];
    Ok(points
        .iter()
        .map(|c| {
            let c = SpheroidalCoords {
                eta: c.eta.max(coeffs.eps_eta),
                phi: c.phi,
            };
            basis_row(&c, n_upto, coeffs.spheroid.kind, &mut row);
            let mut p = Vec3::zeros();
            for (v, a) in row.iter().zip(&coeffs.coeffs[..len]) {
                p += Vec3::new(a[0], a[1], a[2]) * *v;
            }
            p
        })
        .collect())
}

/// As [`reconstruct`], mapped back to the input pose.
pub fn reconstruct_original_pose(coeffs: &HarmonicCoeffs, points: &[SpheroidalCoords], n_upto: usize) -> Result<Vec<Vec3>> {
    Ok(reconstruct(coeffs, points, n_upto)?
        .iter()
        .map(|p| coeffs.registration.apply_inverse(p))
        .collect())
}

/// Cumulative surface area measured from the apex, tabulated in latitude.
struct AreaTable {
    eta: Vec<f64>,
    area: Vec<f64>,
}

impl AreaTable {
    fn new(s: &Spheroid) -> Self {
        let steps = 4096;
        let density = |eta: f64| {
            let (se, ce) = eta.sin_cos();
            TAU * s.a * ce * (s.a * s.a * se * se + s.c * s.c * ce * ce).sqrt()
        };
        let h = FRAC_PI_2 / steps as f64;
        let eta: Vec<f64> = (0..=steps).map(|i| FRAC_PI_2 - i as f64 * h).collect();
        let mut area = vec![0.0; steps + 1];
        for i in 1..=steps {
            // Simpson on each sub-interval
            let (e0, e1) = (eta[i - 1], eta[i]);
            area[i] = area[i - 1] + h / 6.0 * (density(e0) + 4.0 * density(0.5 * (e0 + e1)) + density(e1));
        }
        AreaTable { eta, area }
    }

    fn total(&self) -> f64 {
        *self.area.last().unwrap()
    }

    fn latitude_at(&self, a: f64) -> f64 {
        let i = self.area.partition_point(|v| *v < a).clamp(1, self.area.len() - 1);
        let (a0, a1) = (self.area[i - 1], self.area[i]);
        let t = if a1 > a0 { ((a - a0) / (a1 - a0)).clamp(0.0, 1.0) } else { 0.0 };
        self.eta[i - 1] + t * (self.eta[i] - self.eta[i - 1])
    }
}

/// Quasi-uniform points on the hemispheroid and their triangulation.
///
/// A ring of equally spaced points lies on the rim; the rest follow a
/// golden-angle spiral equally spaced in surface area. Faces come from the
/// planar Delaunay triangulation of the spheroidal-projection images.
pub fn sample_uniform_hemispheroid(s: &Spheroid, count: usize) -> Result<(Vec<SpheroidalCoords>, TriMesh)> {
    if count < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 sample points, got {count}")));
    }
    let table = AreaTable::new(s);
    let total = table.total();
    let perimeter = TAU * s.a;
    // rim spacing matching the mean spacing of a triangular lattice
    let spacing = (2.0 * total / (3f64.sqrt() * count as f64)).sqrt();
    let rim = ((perimeter / spacing).round() as usize).clamp(3, count - 1);
    let inner = count - rim;
    // keep the spiral half a spacing away from the rim
    let band = (0.5 * spacing * perimeter).min(0.5 * total);
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut coords = Vec::with_capacity(count);
    for i in 0..inner {
        let a = (i as f64 + 0.5) / inner as f64 * (total - band);
        coords.push(SpheroidalCoords {
            eta: table.latitude_at(a),
            phi: crate::projection::wrap_phi(i as f64 * golden),
        });
    }
    for k in 0..rim {
        coords.push(SpheroidalCoords {
            eta: 0.0,
            phi: k as f64 * TAU / rim as f64,
        });
    }
    let points: Vec<Vec3> = coords.iter().map(|c| eta_phi_to_point(c, s)).collect();
    let planar: Vec<delaunator::Point> = points
        .iter()
        .map(|p| {
            let q = spheroidal_projection(p, s).expect("northern points project");
            delaunator::Point { x: q.x, y: q.y }
        })
        .collect();
    let tri = delaunator::triangulate(&planar);
    let faces: Vec<[usize; 3]> = tri
        .triangles
        .chunks_exact(3)
        .filter_map(|t| {
            let (a, b, c) = (&planar[t[0]], &planar[t[1]], &planar[t[2]]);
            let area2 = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
            // drop slivers on the rim; orient counterclockwise
            if area2.abs() <= 1e-14 {
                None
            } else if area2 > 0.0 {
                Some([t[0], t[1], t[2]])
            } else {
                Some([t[0], t[2], t[1]])
            }
        })
        .collect();
    Ok((coords, TriMesh::new(points, faces)?))
}
