//! Hemispheroidal conformal parameterization `f_C = P⁻¹ ∘ ψ⁻¹ ∘ φ ∘ g_C`.
//!
//! `g_C` is a discrete conformal map onto the unit disk: the cotangent
//! harmonic extension of boundary angles chosen to minimize the conformal
//! energy `E_D − Area`, followed by Beltrami self-correction. `φ` is the disk
//! automorphism that best equalizes areas after the inverse spheroidal
//! projection, and `ψ` undoes the quasi-conformal distortion of `P⁻¹`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use log::{debug, warn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::fem::cotan_stiffness_3d;
use crate::mesh::{face_areas_of, TriMesh, Vec2};
use crate::optimize::{minimize_bounded, SearchSpec};
use crate::projection::{inverse_spheroidal_projection, lift, PlanarMap, SurfaceMap};
use crate::qc::{
    beltrami_from_surface_map, beltrami_to_surface, boundary_constraints, count_flipped, invert_pl_map, lbs_solve,
    lbs_unfold, repair_folds, surface_dilatation, MU_CAP,
};
use crate::registration::Spheroid;
use crate::sparse::{Backend, DirichletSolver, SparseMatrix};
use crate::tutte::{arc_angles, solve_tutte_disk};

/// Disk automorphism `z ↦ (z − r e^{iθ}) / (1 − r e^{−iθ} z)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MobiusParams {
    pub r: f64,
    pub theta: f64,
}

impl MobiusParams {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&r) || !theta.is_finite() {
            return Err(Error::InvalidArgument(format!("Möbius parameters need 0 <= r < 1, got r={r}")));
        }
        let mut theta = (theta + PI).rem_euclid(2.0 * PI) - PI;
        if theta >= PI {
            theta -= 2.0 * PI;
        }
        Ok(MobiusParams { r, theta })
    }

    pub fn identity() -> Self {
        MobiusParams { r: 0.0, theta: 0.0 }
    }

    fn center(&self) -> Complex64 {
        Complex64::from_polar(self.r, self.theta)
    }
}

fn c(p: &Vec2) -> Complex64 {
    Complex64::new(p.x, p.y)
}

fn v(z: Complex64) -> Vec2 {
    Vec2::new(z.re, z.im)
}

pub fn mobius(z: &Vec2, p: &MobiusParams) -> Vec2 {
    if p.r == 0.0 {
        return *z;
    }
    let a = p.center();
    let z = c(z);
    v((z - a) / (1.0 - a.conj() * z))
}

pub fn mobius_inverse(w: &Vec2, p: &MobiusParams) -> Vec2 {
    if p.r == 0.0 {
        return *w;
    }
    let a = p.center();
    let w = c(w);
    v((w + a) / (1.0 + a.conj() * w))
}

/// Apply `φ` to every vertex, keeping boundary vertices exactly on the circle.
pub fn apply_mobius(map: &PlanarMap, p: &MobiusParams, boundary: &[usize]) -> PlanarMap {
    let mut out = PlanarMap::new(map.points.iter().map(|z| mobius(z, p)).collect());
    for &b in boundary {
        let n = out.points[b].norm();
        out.points[b] /= n;
    }
    out
}

/// Mean squared difference of normalized log areas between `P⁻¹(φ(disk))` and the mesh,
/// with the number of zero-area image faces that were skipped.
pub fn area_energy_detail(disk: &PlanarMap, mesh: &TriMesh, p: &MobiusParams, s: &Spheroid) -> (f64, usize) {
    let img: Vec<_> = disk.points.iter().map(|z| inverse_spheroidal_projection(&mobius(z, p), s)).collect();
    let a_img = face_areas_of(&img, mesh.faces());
    let a_src = mesh.face_areas();
    normalized_log_energy(&a_src, &a_img)
}

pub(crate) fn normalized_log_energy(a_src: &[f64], a_img: &[f64]) -> (f64, usize) {
    let ts: f64 = a_src.iter().sum();
    let ti: f64 = a_img.iter().sum();
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (s, i) in a_src.iter().zip(a_img) {
        if !(*i > 0.0) || !(*s > 0.0) {
            skipped += 1;
            continue;
        }
        let d = (i / ti).ln() - (s / ts).ln();
        sum += d * d;
        used += 1;
    }
    let e = if used == 0 { f64::INFINITY } else { sum / used as f64 };
    (e, skipped)
}

pub fn area_energy(disk: &PlanarMap, mesh: &TriMesh, p: &MobiusParams, s: &Spheroid) -> f64 {
    let (e, skipped) = area_energy_detail(disk, mesh, p, s);
    if skipped > 0 {
        warn!("area energy skipped {skipped} zero-area faces");
    }
    e
}

/// Möbius parameters minimizing [`area_energy`] over `r ∈ [0, 0.99]`, `θ ∈ [−π, π)`.
pub fn optimize_mobius(disk: &PlanarMap, mesh: &TriMesh, s: &Spheroid) -> MobiusParams {
    let mut seeds = Vec::new();
    for r in [0.0, 0.25, 0.5] {
        for t in [0.0, PI / 2.0, -PI / 2.0, PI] {
            seeds.push(vec![r, t]);
        }
    }
    let spec = SearchSpec::new(vec![0.0, -PI], vec![0.99, PI]).with_seeds(seeds).with_budget(200).with_tol(1e-4);
    let energy = |x: &[f64]| {
        let (e, skipped) = area_energy_detail(disk, mesh, &MobiusParams { r: x[0], theta: x[1] }, s);
        if skipped > 0 {
            debug!("Möbius candidate ({:.4}, {:.4}) skipped {skipped} faces", x[0], x[1]);
        }
        e
    };
    let base = energy(&[0.0, 0.0]);
    match minimize_bounded(energy, &spec) {
        Ok(m) if m.value < base => MobiusParams::new(m.x[0], m.x[1]).unwrap_or_else(|_| MobiusParams::identity()),
        _ => MobiusParams::identity(),
    }
}

/// Boundary angles along the loop, starting at 0 for the first loop vertex.
fn initial_angles(lengths: &[f64]) -> Result<Vec<f64>> {
    let ang = arc_angles(lengths)?;
    let mut out = vec![0.0];
    out.extend_from_slice(&ang[..ang.len() - 1]);
    Ok(out)
}

fn cyclic_order_ok(theta: &[f64]) -> bool {
    let m = theta.len();
    theta.windows(2).all(|w| w[1] > w[0]) && theta[0] + 2.0 * PI > theta[m - 1]
}

/// Conformal energy `½ Σ xᵀ K x − Area` of the harmonic extension of the
/// boundary angles, and its gradient with respect to the angles.
struct BoundaryEnergy<'a> {
    k: &'a SparseMatrix,
    solver: DirichletSolver,
    loop_idx: Vec<usize>,
}

impl BoundaryEnergy<'_> {
    fn extend(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        let values = vec![theta.iter().map(|t| t.cos()).collect(), theta.iter().map(|t| t.sin()).collect()];
        self.solver.solve(&[], &values)
    }

    fn eval(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let x = self.extend(theta)?;
        let kx: Vec<Vec<f64>> = x.iter().map(|c| self.k.mul_vec(c)).collect();
        let ed = 0.5 * (0..2).map(|d| x[d].iter().zip(&kx[d]).map(|(a, b)| a * b).sum::<f64>()).sum::<f64>();
        let m = theta.len();
        let area = 0.5 * (0..m).map(|k| (theta[(k + 1) % m] - theta[k]).sin()).sum::<f64>();
        let grad = (0..m)
            .map(|k| {
                let b = self.loop_idx[k];
                let (s, co) = theta[k].sin_cos();
                let prev = theta[(k + m - 1) % m];
                let next = theta[(k + 1) % m];
                let da = 0.5 * ((theta[k] - prev).cos() - (next - theta[k]).cos());
                -kx[0][b] * s + kx[1][b] * co - da
            })
            .collect();
        Ok((ed - area, grad))
    }
}

/// Limited-memory BFGS on the boundary angles with Armijo backtracking; steps
/// that break the cyclic order are rejected.
fn minimize_angles(energy: &BoundaryEnergy, theta0: Vec<f64>, max_iter: usize) -> Result<Vec<f64>> {
    const MEM: usize = 8;
    let mut x = theta0;
    let (mut f, mut g) = energy.eval(&x)?;
    let scale = f.abs().max(1e-12);
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    for _ in 0..max_iter {
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(&mut q, -a, y);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let gn = dot(&g, &g).sqrt().max(1e-300);
            let step = 1e-2 / gn;
            q.iter_mut().for_each(|v| *v *= step);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            axpy(&mut q, a - b, s);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            if cyclic_order_ok(&xn) {
                let (fnew, gnew) = energy.eval(&xn)?;
                if fnew <= f + 1e-4 * t * slope {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            hist.push((s, y, 1.0 / sy));
            if hist.len() > MEM {
                hist.remove(0);
            }
        }
        let decrease = f - fnew;
        x = xn;
        f = fnew;
        g = gnew;
        if decrease <= 1e-12 * scale {
            break;
        }
    }
    Ok(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Harmonic extension with optimized boundary angles (before Beltrami correction).
pub fn free_boundary_harmonic(mesh: &TriMesh) -> Result<PlanarMap> {
    let k = cotan_stiffness_3d(mesh.vertices(), mesh.faces());
    let lp = mesh.boundary_loop();
    let solver = DirichletSolver::new(&k, &lp.indices, Backend::Auto)?;
    let energy = BoundaryEnergy {
        k: &k,
        solver,
        loop_idx: lp.indices.clone(),
    };
    let theta = if lp.len() > 3 {
        minimize_angles(&energy, initial_angles(&lp.edge_lengths)?, 500)?
    } else {
        initial_angles(&lp.edge_lengths)?
    };
    let x = energy.extend(&theta)?;
    Ok(PlanarMap::new((0..mesh.vertex_count()).map(|i| Vec2::new(x[0][i], x[1][i])).collect()))
}

/// Discrete conformal map of the mesh onto the unit disk.
pub fn disk_conformal(mesh: &TriMesh) -> Result<PlanarMap> {
    let faces = mesh.faces();
    let mut g = free_boundary_harmonic(mesh)?;
    if count_flipped(&g, faces) > 0 {
        let tutte = solve_tutte_disk(mesh)?;
        g = lbs_unfold(&tutte, &g, faces, mesh.face_neighbors(), &boundary_constraints(mesh, &g))?;
    }
    let mut best = g.clone();
    let mut best_mu = beltrami_from_surface_map(mesh, &g)?.mean_abs();
    let mut prev = best_mu;
    for _ in 0..10 {
        if count_flipped(&g, faces) > 0 {
            break;
        }
        // μ of the inverse map h: disk → surface; LBS(μ_h) composed with g is conformal
        let mu_h = beltrami_to_surface(&g, mesh.vertices(), faces)?;
        let mu_h = repair_folds(&mu_h, mesh.face_neighbors(), MU_CAP);
        let next = lbs_solve(&mu_h, faces, &g, &boundary_constraints(mesh, &g))?;
        if count_flipped(&next, faces) > 0 {
            break;
        }
        let mu = beltrami_from_surface_map(mesh, &next)?.mean_abs();
        g = next;
        if mu < best_mu {
            best_mu = mu;
            best = g.clone();
        }
        if (prev - mu).abs() < 1e-4 {
            break;
        }
        prev = mu;
    }
    if count_flipped(&best, faces) > 0 {
        warn!("disk conformal map has folded faces");
    }
    Ok(best)
}

fn boundary_identity(mesh: &TriMesh, disk: &PlanarMap) -> BTreeMap<usize, Vec2> {
    mesh.boundary_loop()
        .indices
        .iter()
        .map(|&i| (i, disk.points[i] / disk.points[i].norm()))
        .collect()
}

/// `ψ⁻¹ ∘ disk` where `ψ = LBS(μ_{P⁻¹})` with the unit circle fixed pointwise.
pub fn qc_correction(disk: &PlanarMap, mesh: &TriMesh, s: &Spheroid) -> Result<PlanarMap> {
    let faces = mesh.faces();
    let pins = boundary_identity(mesh, disk);
    let hemi = lift(disk, s);
    let mu = beltrami_to_surface(disk, &hemi.points, faces)?;
    let mu = if mu.folded().is_empty() {
        mu
    } else {
        warn!("{} faces of the inverse projection have |μ| >= 1; repairing", mu.folded().len());
        repair_folds(&mu, mesh.face_neighbors(), MU_CAP)
    };
    let mut psi = lbs_solve(&mu, faces, disk, &pins)?;
    if count_flipped(&psi, faces) > 0 {
        psi = lbs_unfold(disk, &psi, faces, mesh.face_neighbors(), &pins)?;
    }
    let mut out = PlanarMap::new(invert_pl_map(disk, &psi, faces, &disk.points)?);
    for (&i, p) in &pins {
        out.points[i] = *p;
    }
    if count_flipped(&out, faces) > 0 {
        out = lbs_unfold(disk, &out, faces, mesh.face_neighbors(), &pins)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MuSummary {
    pub mean: f64,
    pub max: f64,
}

impl MuSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        MuSummary {
            mean: values.iter().sum::<f64>() / n,
            max: values.iter().fold(0.0f64, |m, v| m.max(*v)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConformalResult {
    pub disk_initial: PlanarMap,
    pub mobius: MobiusParams,
    pub disk_corrected: PlanarMap,
    pub hemi: SurfaceMap,
    pub residual_mu: MuSummary,
}

pub fn hemispheroidal_conformal(mesh: &TriMesh, s: &Spheroid) -> Result<ConformalResult> {
    let disk_initial = disk_conformal(mesh).stage("disk conformal map")?;
    let mobius = optimize_mobius(&disk_initial, mesh, s);
    let moved = apply_mobius(&disk_initial, &mobius, &mesh.boundary_loop().indices);
    let disk_corrected = qc_correction(&moved, mesh, s).stage("quasi-conformal correction")?;
    let hemi = lift(&disk_corrected, s);
    let residual = surface_dilatation(mesh.vertices(), &hemi.points, mesh.faces()).stage("residual dilatation")?;
    Ok(ConformalResult {
        disk_initial,
        mobius,
        disk_corrected,
        hemi,
        residual_mu: MuSummary::of(&residual),
    })
}
