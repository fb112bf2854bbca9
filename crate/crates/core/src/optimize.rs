//! Bounded derivative-free minimization: seeds, a three-level grid scan and a
//! Nelder–Mead polish, all inside a fixed evaluation budget; plus the radius
//! and balance-weight searches built on it.

use log::{debug, warn};
use serde::Serialize;

use crate::area::{area_preserving_with, DemOptions};
use crate::balanced::{BalanceWeights, BalancedComponents};
use crate::error::{Error, Result};
use crate::harmonics::{decompose, reconstruct};
use crate::mesh::TriMesh;
use crate::metrics::{a_rmse, mean_orthogonality};
use crate::projection::{surface_coords, DEFAULT_EPS_ETA};
use crate::registration::Spheroid;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub max_evals: usize,
    /// Stop polishing once the simplex spans less than this in every coordinate.
    pub tol: f64,
    pub seeds: Vec<Vec<f64>>,
    /// Points per axis of each grid scan level.
    pub grid: usize,
}

impl SearchSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let dim = lower.len();
        SearchSpec {
            lower,
            upper,
            max_evals: 200,
            tol: 1e-4,
            seeds: Vec::new(),
            grid: if dim <= 2 { 5 } else { 3 },
        }
    }

    pub fn with_seeds(mut self, seeds: Vec<Vec<f64>>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn with_budget(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidArgument("bounds must be nonempty and of equal length".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
            return Err(Error::InvalidArgument("bounds must be finite with lower < upper".into()));
        }
        if !(self.tol > 0.0) || self.max_evals == 0 {
            return Err(Error::InvalidArgument("tolerance and budget must be positive".into()));
        }
        if self.seeds.iter().any(|s| s.len() != self.dim()) {
            return Err(Error::InvalidArgument("seed dimension mismatch".into()));
        }
        Ok(())
    }

    fn inside(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| v >= l && v <= u)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    /// Best value seen after each evaluation.
    pub trace: Vec<f64>,
}

struct Tracker<'a, F> {
    f: F,
    spec: &'a SearchSpec,
    best: Option<(Vec<f64>, f64)>,
    trace: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Tracker<'_, F> {
    fn exhausted(&self) -> bool {
        self.trace.len() >= self.spec.max_evals
    }

    /// Objective value, `+∞` outside the box, non-finite values, or past the budget.
    fn eval(&mut self, x: &[f64]) -> f64 {
        if !self.spec.inside(x) || self.exhausted() {
            return f64::INFINITY;
        }
        let mut v = (self.f)(x);
        if !v.is_finite() {
            v = f64::INFINITY;
        }
        if self.best.as_ref().is_none_or(|b| v < b.1) {
            self.best = Some((x.to_vec(), v));
        }
        self.trace.push(self.best.as_ref().unwrap().1);
        v
    }

    fn best_x(&self) -> Vec<f64> {
        self.best.as_ref().map(|b| b.0.clone()).unwrap_or_else(|| {
            self.spec.lower.iter().zip(&self.spec.upper).map(|(l, u)| 0.5 * (l + u)).collect()
        })
    }
}

pub fn minimize_bounded(objective: impl FnMut(&[f64]) -> f64, spec: &SearchSpec) -> Result<Minimum> {
    spec.validate()?;
    let dim = spec.dim();
    let mut t = Tracker {
        f: objective,
        spec,
        best: None,
        trace: Vec::new(),
    };
    for s in &spec.seeds {
        t.eval(s);
    }

    // grid scans, each level centred on the incumbent with a shrinking box
    let mut half: Vec<f64> = spec.lower.iter().zip(&spec.upper).map(|(l, u)| 0.5 * (u - l)).collect();
    let mut centre: Vec<f64> = spec.lower.iter().zip(&spec.upper).map(|(l, u)| 0.5 * (l + u)).collect();
    let g = spec.grid.max(2);
    for _level in 0..3 {
        let total = g.pow(dim as u32);
        for idx in 0..total {
            let mut rem = idx;
            let x: Vec<f64> = (0..dim)
                .map(|d| {
                    let k = rem % g;
                    rem /= g;
                    let v = centre[d] - half[d] + 2.0 * half[d] * k as f64 / (g - 1) as f64;
                    v.clamp(spec.lower[d], spec.upper[d])
                })
                .collect();
            t.eval(&x);
        }
        centre = t.best_x();
        for h in &mut half {
            *h *= 2.0 / (g - 1) as f64;
        }
    }

    nelder_mead(&mut t, &half);
    let (x, value) = t.best.clone().unwrap_or_else(|| (t.best_x(), f64::INFINITY));
    Ok(Minimum {
        x,
        value,
        evals: t.trace.len(),
        trace: t.trace,
    })
}

fn nelder_mead<F: FnMut(&[f64]) -> f64>(t: &mut Tracker<'_, F>, step: &[f64]) {
    let dim = step.len();
    let x0 = t.best_x();
    let f0 = t.best.as_ref().map(|b| b.1).unwrap_or(f64::INFINITY);
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.clone(), f0)];
    for d in 0..dim {
        let mut x = x0.clone();
        // step toward the interior when at a bound
        x[d] += if x[d] + step[d] <= t.spec.upper[d] { step[d] } else { -step[d] };
        let v = t.eval(&x);
        simplex.push((x, v));
    }
    while !t.exhausted() {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = (0..dim).all(|d| {
            let (lo, hi) = simplex.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.0[d]), h.max(p.0[d])));
            hi - lo < t.spec.tol
        });
        if spread {
            break;
        }
        let centroid: Vec<f64> = (0..dim).map(|d| simplex[..dim].iter().map(|p| p.0[d]).sum::<f64>() / dim as f64).collect();
        let worst = simplex[dim].clone();
        let along = |c: f64| -> Vec<f64> { (0..dim).map(|d| centroid[d] + c * (worst.0[d] - centroid[d])).collect() };
        let xr = along(-1.0);
        let fr = t.eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = t.eval(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = along(-0.5);
                let v = t.eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = t.eval(&x);
                (x, v)
            };
            if fc < worst.1.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..dim).map(|d| best[d] + 0.5 * (p.0[d] - best[d])).collect();
                    let v = t.eval(&x);
                    *p = (x, v);
                }
            }
        }
    }
}

/// Options for [`optimize_radius_c`].
#[derive(Clone, Debug, PartialEq)]
pub struct RadiusSearch {
    pub c_lower: f64,
    pub c_upper: f64,
    /// Log-uniform samples before refinement.
    pub samples: usize,
    /// Extra evaluations spent refining around the best sample.
    pub refine_evals: usize,
    pub n_max_probe: usize,
    pub eps_eta: f64,
    pub dem: DemOptions,
}

impl Default for RadiusSearch {
    fn default() -> Self {
        RadiusSearch {
            c_lower: 0.2,
            c_upper: 2.0,
            samples: 15,
            refine_evals: 12,
            n_max_probe: 10,
            eps_eta: DEFAULT_EPS_ETA,
            dem: DemOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusSample {
    pub c: f64,
    pub mean_orthogonality: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadiusCurve {
    pub c_star: f64,
    /// Valid samples sorted by `c`; the minimum sits at `c_star`.
    pub curve: Vec<RadiusSample>,
    /// Candidates whose parameterization failed.
    pub skipped: Vec<f64>,
}

/// Hemispheroid radius `c` (with `a = 1`) minimizing the mean off-diagonal
/// Gram entry of the basis sampled at the area-preserving map's vertices.
pub fn optimize_radius_c(mesh: &TriMesh, opts: &RadiusSearch) -> Result<RadiusCurve> {
    if !(opts.c_lower > 0.0 && opts.c_lower < opts.c_upper && opts.c_upper.is_finite()) || opts.samples < 2 {
        return Err(Error::InvalidArgument("radius bounds must satisfy 0 < lower < upper and samples >= 2".into()));
    }
    let mut curve: Vec<RadiusSample> = Vec::new();
    let mut skipped = Vec::new();
    let probe = |c: f64, curve: &mut Vec<RadiusSample>, skipped: &mut Vec<f64>| -> f64 {
        let value = Spheroid::new(1.0, c).and_then(|s| {
            let r = area_preserving_with(mesh, &s, &opts.dem)?;
            let coords = surface_coords(&r.hemi, &s, opts.eps_eta)?;
            mean_orthogonality(&coords, opts.n_max_probe, s.kind)
        });
        match value {
            Ok(v) if v.is_finite() => {
                debug!("c = {c:.4}: mean orthogonality {v:.6}");
                curve.push(RadiusSample { c, mean_orthogonality: v });
                v
            }
            other => {
                if let Err(e) = other {
                    warn!("radius sample c = {c:.4} skipped: {e}");
                }
                skipped.push(c);
                f64::INFINITY
            }
        }
    };
    let (l0, l1) = (opts.c_lower.ln(), opts.c_upper.ln());
    let grid: Vec<f64> = (0..opts.samples)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (opts.samples - 1) as f64).exp())
        .collect();
    for &c in &grid {
        probe(c, &mut curve, &mut skipped);
    }
    let best = curve
        .iter()
        .min_by(|a, b| a.mean_orthogonality.total_cmp(&b.mean_orthogonality))
        .map(|s| s.c)
        .ok_or_else(|| Error::InvalidArgument("no radius sample produced a valid parameterization".into()))?;
    if opts.refine_evals > 0 {
        // golden-section search in log c between the neighbours of the best sample
        let k = grid.iter().position(|&c| c == best).unwrap_or(0);
        let mut lo = grid[k.saturating_sub(1)].ln();
        let mut hi = grid[(k + 1).min(grid.len() - 1)].ln();
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - r * (hi - lo);
        let mut x2 = lo + r * (hi - lo);
        let mut f1 = probe(x1.exp(), &mut curve, &mut skipped);
        let mut f2 = if opts.refine_evals > 1 { probe(x2.exp(), &mut curve, &mut skipped) } else { f64::INFINITY };
        for _ in 2..opts.refine_evals {
            if f1 <= f2 {
                (hi, x2, f2) = (x2, x1, f1);
                x1 = hi - r * (hi - lo);
                f1 = probe(x1.exp(), &mut curve, &mut skipped);
            } else {
                (lo, x1, f1) = (x1, x2, f2);
                x2 = lo + r * (hi - lo);
                f2 = probe(x2.exp(), &mut curve, &mut skipped);
            }
        }
    }
    curve.sort_by(|a, b| a.c.total_cmp(&b.c));
    curve.dedup_by(|a, b| a.c == b.c);
    let c_star = curve
        .iter()
        .min_by(|a, b| a.mean_orthogonality.total_cmp(&b.mean_orthogonality))
        .map(|s| s.c)
        .expect("curve is nonempty");
    Ok(RadiusCurve { c_star, curve, skipped })
}

impl RadiusCurve {
    /// `c,mean_orthogonality` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("c,mean_orthogonality\n");
        for s in &self.curve {
            out.push_str(&format!("{},{}\n", s.c, s.mean_orthogonality));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSearch {
    pub weights: BalanceWeights,
    /// A-RMSE of the probe reconstruction at the returned weights.
    pub a_rmse: f64,
    pub evals: usize,
}

/// Probe reconstruction error of the balanced map with weights `w`.
pub fn balanced_probe_error(
    components: &BalancedComponents,
    mesh: &TriMesh,
    s: &Spheroid,
    w: &BalanceWeights,
    n_max_probe: usize,
    eps_eta: f64,
) -> Result<f64> {
    let r = components.solve(mesh, s, w)?;
    let dec = decompose(&r.hemi, mesh, s, n_max_probe, eps_eta)?;
    let recon = reconstruct(&dec.coeffs, &dec.coords, n_max_probe)?;
    Ok(a_rmse(mesh, &mesh.with_vertices(recon)?))
}

/// Balance weights on the simplex minimizing the probe reconstruction error.
/// The search runs over `(α, β)` with `γ = 1 − α − β`.
pub fn optimize_weights(
    components: &BalancedComponents,
    mesh: &TriMesh,
    s: &Spheroid,
    n_max_probe: usize,
    eps_eta: f64,
    budget: usize,
) -> Result<WeightSearch> {
    let spec = SearchSpec::new(vec![0.0, 0.0], vec![1.0, 1.0])
        .with_budget(budget)
        .with_tol(1e-3)
        .with_seeds(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0], vec![1.0 / 3.0, 1.0 / 3.0]]);
    let min = minimize_bounded(
        |x| match BalanceWeights::from_alpha_beta(x[0], x[1]) {
            Err(_) => f64::INFINITY,
            Ok(w) => match balanced_probe_error(components, mesh, s, &w, n_max_probe, eps_eta) {
                Ok(v) => v,
                Err(e) => {
                    debug!("weights {w:?} rejected: {e}");
                    f64::INFINITY
                }
            },
        },
        &spec,
    )?;
    if !min.value.is_finite() {
        return Err(Error::InvalidArgument("no feasible balance weights found".into()));
    }
    Ok(WeightSearch {
        weights: BalanceWeights::from_alpha_beta(min.x[0], min.x[1])?,
        a_rmse: min.value,
        evals: min.evals,
    })
}
