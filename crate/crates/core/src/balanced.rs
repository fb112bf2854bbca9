//! Balanced map: a convex mixture of the Beltrami coefficients of the Tutte,
//! conformal and area-preserving maps, realized by a single linear Beltrami solve
//! on the Tutte disk.
//!
//! The Tutte component is zero by construction, since its disk image is the
//! solve's own source triangulation.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::area::{area_preserving_with, DemOptions};
use crate::conformal::hemispheroidal_conformal;
use crate::error::{Error, Result, ResultExt};
use crate::mesh::{TriMesh, Vec2};
use crate::projection::{flatten, lift, PlanarMap, SurfaceMap};
use crate::qc::{beltrami_from_planar_map, count_flipped, lbs_solve, lbs_unfold, repair_folds, BeltramiField, MU_CAP};
use crate::registration::Spheroid;
use crate::tutte::solve_tutte_disk;

/// Mixing weights for the Tutte, conformal and area-preserving components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl BalanceWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = BalanceWeights { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    /// Weights on the simplex with `γ = 1 − α − β`.
    pub fn from_alpha_beta(alpha: f64, beta: f64) -> Result<Self> {
        let gamma = 1.0 - alpha - beta;
        // absorb round-off on the simplex edge
        let gamma = if gamma < 0.0 && gamma > -1e-12 { 0.0 } else { gamma };
        Self::new(alpha, beta, gamma)
    }

    pub fn tutte() -> Self {
        BalanceWeights { alpha: 1.0, beta: 0.0, gamma: 0.0 }
    }

    pub fn conformal() -> Self {
        BalanceWeights { alpha: 0.0, beta: 1.0, gamma: 0.0 }
    }

    pub fn area() -> Self {
        BalanceWeights { alpha: 0.0, beta: 0.0, gamma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.alpha, self.beta, self.gamma];
        if parts.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!("balance weights must be nonnegative, got {self:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("balance weights must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// μ of `g(ℳ) → P(f_X(ℳ))`, face by face.
pub fn component_beltrami(mesh: &TriMesh, g: &PlanarMap, f_x: &SurfaceMap, s: &Spheroid) -> Result<BeltramiField> {
    let flat = flatten(f_x, s)?;
    beltrami_from_planar_map(g, &flat, mesh.faces())
}

/// `α μ_T + β μ_C + γ μ_A`, repaired if any coefficient reaches modulus 1.
pub fn mix_beltrami(
    mu_t: &BeltramiField,
    mu_c: &BeltramiField,
    mu_a: &BeltramiField,
    w: &BalanceWeights,
    neighbors: &[[Option<usize>; 3]],
) -> Result<BeltramiField> {
    w.validate()?;
    if mu_c.len() != mu_t.len() || mu_a.len() != mu_t.len() || neighbors.len() != mu_t.len() {
        return Err(Error::SizeMismatch(format!(
            "Beltrami fields have {}, {} and {} faces",
            mu_t.len(),
            mu_c.len(),
            mu_a.len()
        )));
    }
    let mix = |t: Complex64, c: Complex64, a: Complex64| {
        // skip zero weights so folded (infinite) components cannot leak in
        let mut m = Complex64::new(0.0, 0.0);
        for (wt, v) in [(w.alpha, t), (w.beta, c), (w.gamma, a)] {
            if wt != 0.0 {
                m += v * wt;
            }
        }
        m
    };
    let mixed = BeltramiField::new(
        (0..mu_t.len())
            .map(|i| mix(mu_t.values[i], mu_c.values[i], mu_a.values[i]))
            .collect(),
    );
    if mixed.folded().is_empty() {
        Ok(mixed)
    } else {
        Ok(repair_folds(&mixed, neighbors, MU_CAP))
    }
}

fn wrap_pi(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Angle offsets of `other` from `base` along the boundary loop, unwrapped
/// so consecutive offsets differ by less than π.
fn angle_offsets(base: &[f64], other: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(base.len());
    for (b, o) in base.iter().zip(other) {
        let raw = o - b;
        let d = match out.last() {
            None => wrap_pi(raw),
            Some(&prev) => prev + wrap_pi(raw - prev),
        };
        out.push(d);
    }
    out
}

/// The three component maps of a mesh, computed once and mixed per weight.
#[derive(Clone, Debug)]
pub struct BalancedComponents {
    /// Tutte disk map; the source triangulation of every mix.
    pub g: PlanarMap,
    pub conformal_disk: PlanarMap,
    pub area_disk: PlanarMap,
    pub mu_t: BeltramiField,
    pub mu_c: BeltramiField,
    pub mu_a: BeltramiField,
    boundary: Vec<usize>,
    theta_t: Vec<f64>,
    offset_c: Vec<f64>,
    offset_a: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BalancedResult {
    pub disk: PlanarMap,
    pub hemi: SurfaceMap,
    pub mu: BeltramiField,
}

impl BalancedComponents {
    pub fn compute(mesh: &TriMesh, s: &Spheroid) -> Result<Self> {
        let g = solve_tutte_disk(mesh).stage("Tutte disk map")?;
        let conformal = hemispheroidal_conformal(mesh, s).stage("conformal component")?;
        let area = area_preserving_with(mesh, s, &DemOptions::default()).stage("area-preserving component")?;
        Self::from_disks(mesh, g, conformal.disk_corrected, area.disk)
    }

    /// Components from the disk images `P ∘ f_C` and `P ∘ f_A`.
    pub fn from_disks(mesh: &TriMesh, g: PlanarMap, conformal_disk: PlanarMap, area_disk: PlanarMap) -> Result<Self> {
        let faces = mesh.faces();
        let mu_t = beltrami_from_planar_map(&g, &g, faces)?;
        let mu_c = beltrami_from_planar_map(&g, &conformal_disk, faces)?;
        let mu_a = beltrami_from_planar_map(&g, &area_disk, faces)?;
        let boundary = mesh.boundary_loop().indices;
        let angles = |m: &PlanarMap| -> Vec<f64> {
            boundary.iter().map(|&i| m.points[i].y.atan2(m.points[i].x)).collect()
        };
        let theta_t = angles(&g);
        let offset_c = angle_offsets(&theta_t, &angles(&conformal_disk));
        let offset_a = angle_offsets(&theta_t, &angles(&area_disk));
        Ok(BalancedComponents {
            g,
            conformal_disk,
            area_disk,
            mu_t,
            mu_c,
            mu_a,
            boundary,
            theta_t,
            offset_c,
            offset_a,
        })
    }

    /// Boundary positions of the mix: the Tutte angles moved by the weighted
    /// angular offsets of the other two components.
    pub fn boundary_for(&self, w: &BalanceWeights) -> BTreeMap<usize, Vec2> {
        self.boundary
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let p = if w.beta == 0.0 && w.gamma == 0.0 {
                    self.g.points[i]
                } else {
                    let t = self.theta_t[k] + w.beta * self.offset_c[k] + w.gamma * self.offset_a[k];
                    Vec2::new(t.cos(), t.sin())
                };
                (i, p)
            })
            .collect()
    }

    pub fn solve(&self, mesh: &TriMesh, s: &Spheroid, w: &BalanceWeights) -> Result<BalancedResult> {
        let faces = mesh.faces();
        let mu = mix_beltrami(&self.mu_t, &self.mu_c, &self.mu_a, w, mesh.face_neighbors())?;
        let pins = self.boundary_for(w);
        let mut disk = lbs_solve(&mu, faces, &self.g, &pins).stage("balanced Beltrami solve")?;
        if count_flipped(&disk, faces) > 0 {
            disk = lbs_unfold(&self.g, &disk, faces, mesh.face_neighbors(), &pins)?;
        }
        let hemi = lift(&disk, s);
        Ok(BalancedResult { disk, hemi, mu })
    }
}

pub fn hemispheroidal_balanced(mesh: &TriMesh, s: &Spheroid, w: &BalanceWeights) -> Result<SurfaceMap> {
    w.validate()?;
    BalancedComponents::compute(mesh, s)?.solve(mesh, s, w).map(|r| r.hemi)
}
