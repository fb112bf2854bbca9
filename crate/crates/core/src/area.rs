//! Hemispheroidal area-preserving parameterization `f_A = P⁻¹ ∘ τ_H ∘ φ ∘ g`
//! by density equalization on the disk.
//!
//! The density of a face is its surface area over the area of its image on
//! the hemispheroid; it is re-coupled to the current vertex positions after
//! every step so that errors do not accumulate.

use log::{info, warn};

use crate::conformal::{apply_mobius, optimize_mobius};
use crate::error::{Error, Result, ResultExt};
use crate::fem::{cotan_stiffness_2d, lumped_mass};
use crate::mesh::{face_areas_of, signed_area_2d, TriMesh, Vec2};
use crate::projection::{lift, PlanarMap, SurfaceMap};
use crate::qc::{count_flipped, lbs_unfold};
use crate::registration::Spheroid;
use crate::sparse::{SparseMatrix, SparseSystem};
use crate::tutte::solve_tutte_disk;

#[derive(Clone, Debug, PartialEq)]
pub struct DemState {
    pub disk: PlanarMap,
    pub density: Vec<f64>,
    pub iteration: usize,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemOptions {
    pub max_iter: usize,
    /// Stop once the coefficient of variation of the density falls below this.
    pub cv_tol: f64,
    /// Stop when the coefficient of variation improved by less than this fraction over 5 steps.
    pub stall_tol: f64,
    /// Initial step size, halved whenever a step folds the disk.
    pub step: f64,
    pub max_halvings: usize,
}

impl Default for DemOptions {
    fn default() -> Self {
        DemOptions {
            max_iter: 200,
            cv_tol: 0.05,
            stall_tol: 1e-4,
            step: DEFAULT_STEP,
            max_halvings: 5,
        }
    }
}

/// One record per iteration: coefficient of variation and folded-face count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemLogEntry {
    pub iteration: usize,
    pub cv: f64,
    pub flipped: usize,
    pub step: f64,
}

pub fn density_rho_h(mesh: &TriMesh, disk: &PlanarMap, s: &Spheroid) -> Result<Vec<f64>> {
    let img = lift(disk, s);
    let a_img = face_areas_of(&img.points, mesh.faces());
    mesh.face_areas()
        .iter()
        .zip(&a_img)
        .enumerate()
        .map(|(t, (a, b))| {
            if *b > 0.0 {
                Ok(a / b)
            } else {
                Err(Error::DegenerateGeometry(t, "zero-area hemispheroid image"))
            }
        })
        .collect()
}

pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Initial step size on the unit disk.
pub const DEFAULT_STEP: f64 = 0.1;

fn disk_areas(disk: &PlanarMap, faces: &[[usize; 3]]) -> Vec<f64> {
    faces
        .iter()
        .map(|f| signed_area_2d(&disk.points[f[0]], &disk.points[f[1]], &disk.points[f[2]]))
        .collect()
}

/// Proposed positions after one explicit step of size `dt`.
fn advect(mesh: &TriMesh, disk: &PlanarMap, density: &[f64], dt: f64, boundary: &[bool]) -> Result<PlanarMap> {
    let faces = mesh.faces();
    let n = disk.len();
    let areas: Vec<f64> = disk_areas(disk, faces).iter().map(|a| a.abs()).collect();

    // vertex density: area-weighted mean of incident faces
    let mut rho = vec![0.0; n];
    let mut w = vec![0.0; n];
    for ((f, a), d) in faces.iter().zip(&areas).zip(density) {
        for &v in f {
            rho[v] += a * d;
            w[v] += a;
        }
    }
    for v in 0..n {
        rho[v] /= w[v].max(f64::MIN_POSITIVE);
    }

    // implicit diffusion (M + dt K) ρ' = M ρ
    let k = cotan_stiffness_2d(&disk.points, faces);
    let m = lumped_mass(n, faces, &areas);
    let mut trips: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| k.row(i).map(move |(j, v)| (i, j, dt * v)).collect::<Vec<_>>())
        .collect();
    trips.extend((0..n).map(|i| (i, i, m[i])));
    let a = SparseMatrix::from_triplets(n, &trips);
    let rhs = vec![(0..n).map(|i| m[i] * rho[i]).collect()];
    let sys = SparseSystem {
        matrix: &a,
        rhs,
        fixed: Default::default(),
    };
    let rho_new = sys.solve()?.remove(0);

    // face gradients, averaged to vertices with area weights
    let mut grad = vec![Vec2::zeros(); n];
    for (f, area) in faces.iter().zip(&areas) {
        let p = [disk.points[f[0]], disk.points[f[1]], disk.points[f[2]]];
        let area2 = 2.0 * signed_area_2d(&p[0], &p[1], &p[2]);
        if area2 == 0.0 {
            continue;
        }
        let mut g = Vec2::zeros();
        for i in 0..3 {
            let e = p[(i + 2) % 3] - p[(i + 1) % 3];
            g += Vec2::new(-e.y, e.x) / area2 * rho_new[f[i]];
        }
        for &v in f {
            grad[v] += g * *area;
        }
    }
    let mut out = disk.clone();
    for v in 0..n {
        let r = rho_new[v].max(1e-12 * rho[v].abs().max(f64::MIN_POSITIVE));
        let mut vel = -grad[v] / (w[v].max(f64::MIN_POSITIVE) * r);
        if boundary[v] {
            let p = disk.points[v];
            let t = Vec2::new(-p.y, p.x) / p.norm();
            vel = t * vel.dot(&t);
        }
        out.points[v] += vel * dt;
        if boundary[v] {
            let l = out.points[v].norm();
            out.points[v] /= l;
        }
    }
    if out.points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::NonFinite("density-equalizing step"));
    }
    Ok(out)
}

/// One iteration; the step is halved and retried while it folds the disk or fails.
pub fn dem_step(state: &DemState, mesh: &TriMesh, s: &Spheroid, max_halvings: usize) -> Result<DemState> {
    let boundary = mesh.is_boundary_vertex();
    let mut dt = state.step;
    let mut last_err = None;
    for attempt in 0..=max_halvings {
        match advect(mesh, &state.disk, &state.density, dt, &boundary) {
            Ok(next) if count_flipped(&next, mesh.faces()) == 0 => {
                if let Ok(density) = density_rho_h(mesh, &next, s) {
                    return Ok(DemState {
                        disk: next,
                        density,
                        iteration: state.iteration + 1,
                        step: dt,
                    });
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
        if attempt < max_halvings {
            dt *= 0.5;
        }
    }
    // accept the smallest step even if folded; folds are repaired at the end
    let next = match advect(mesh, &state.disk, &state.density, dt, &boundary) {
        Ok(n) => n,
        Err(e) => return Err(last_err.unwrap_or(e)),
    };
    let img = lift(&next, s);
    let a_img = face_areas_of(&img.points, mesh.faces());
    let density = mesh
        .face_areas()
        .iter()
        .zip(&a_img)
        .map(|(a, b)| a / b.max(f64::MIN_POSITIVE))
        .collect();
    Ok(DemState {
        disk: next,
        density,
        iteration: state.iteration + 1,
        step: dt,
    })
}

#[derive(Clone, Debug)]
pub struct AreaResult {
    pub disk: PlanarMap,
    pub hemi: SurfaceMap,
    pub log: Vec<DemLogEntry>,
    pub converged: bool,
}

pub fn hemispheroidal_area_preserving(mesh: &TriMesh, s: &Spheroid) -> Result<SurfaceMap> {
    area_preserving_with(mesh, s, &DemOptions::default()).map(|r| r.hemi)
}

pub fn area_preserving_with(mesh: &TriMesh, s: &Spheroid, opts: &DemOptions) -> Result<AreaResult> {
    let faces = mesh.faces();
    let g = solve_tutte_disk(mesh).stage("Tutte disk map")?;
    let mobius = optimize_mobius(&g, mesh, s);
    let start = apply_mobius(&g, &mobius, &mesh.boundary_loop().indices);
    let density = density_rho_h(mesh, &start, s).stage("initial density")?;
    let mut state = DemState {
        step: opts.step,
        disk: start.clone(),
        density,
        iteration: 0,
    };
    let mut log = vec![DemLogEntry {
        iteration: 0,
        cv: coefficient_of_variation(&state.density),
        flipped: 0,
        step: state.step,
    }];
    let mut best = (log[0].cv, state.disk.clone());
    let mut converged = log[0].cv < opts.cv_tol;
    while !converged && state.iteration < opts.max_iter {
        state = dem_step(&state, mesh, s, opts.max_halvings).stage("density-equalizing step")?;
        let cv = coefficient_of_variation(&state.density);
        let flipped = count_flipped(&state.disk, faces);
        log.push(DemLogEntry {
            iteration: state.iteration,
            cv,
            flipped,
            step: state.step,
        });
        if flipped == 0 && cv < best.0 {
            best = (cv, state.disk.clone());
        }
        if cv < opts.cv_tol {
            converged = true;
        } else if log.len() > 5 {
            let old = log[log.len() - 6].cv;
            if (old - cv) / old < opts.stall_tol {
                break;
            }
        }
    }
    let final_cv = log.last().map(|e| e.cv).unwrap_or(f64::NAN);
    if !converged {
        warn!(
            "density equalization stopped after {} iterations with CV {final_cv:.4} (target {})",
            state.iteration, opts.cv_tol
        );
    } else {
        info!("density equalization converged in {} iterations (CV {final_cv:.4})", state.iteration);
    }
    let mut disk = if count_flipped(&state.disk, faces) == 0 { state.disk } else { best.1 };
    if count_flipped(&disk, faces) > 0 {
        let pins = crate::qc::boundary_constraints(mesh, &disk);
        disk = lbs_unfold(&start, &disk, faces, mesh.face_neighbors(), &pins).stage("fold repair")?;
    }
    let hemi = lift(&disk, s);
    Ok(AreaResult {
        disk,
        hemi,
        log,
        converged,
    })
}
