//! Symmetric sparse systems with Dirichlet constraints.
//!
//! Constrained unknowns are eliminated symmetrically and the reduced SPD
//! system is factored once with a sparse Cholesky (`faer`, AMD ordering);
//! all right-hand sides share the factorization. A Jacobi-preconditioned
//! conjugate gradient solver is available for systems too large to factor.

use std::collections::BTreeMap;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use log::warn;

use crate::error::{Error, Result};

/// Compressed-row square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Assemble from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut t = triplets.to_vec();
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &t {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map(|(_, v)| v).unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (self.get(j, i) - v).abs() <= tol))
    }

    pub fn scale(&mut self, s: f64) {
        self.vals.iter_mut().for_each(|v| *v *= s);
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Backend {
    /// Cholesky up to `CG_THRESHOLD` free unknowns, conjugate gradients above.
    #[default]
    Auto,
    Cholesky,
    ConjugateGradient,
}

pub const CG_THRESHOLD: usize = 400_000;

/// SPD system `A x = b` with some unknowns prescribed.
pub struct SparseSystem<'a> {
    pub matrix: &'a SparseMatrix,
    /// One column per right-hand side, each of length `n`.
    pub rhs: Vec<Vec<f64>>,
    /// Prescribed values, one per right-hand side.
    pub fixed: BTreeMap<usize, Vec<f64>>,
}

impl<'a> SparseSystem<'a> {
    pub fn homogeneous(matrix: &'a SparseMatrix, columns: usize, fixed: BTreeMap<usize, Vec<f64>>) -> Self {
        SparseSystem {
            matrix,
            rhs: vec![vec![0.0; matrix.dim()]; columns],
            fixed,
        }
    }

    pub fn solve(&self) -> Result<Vec<Vec<f64>>> {
        self.solve_with(Backend::Auto)
    }

    pub fn solve_with(&self, backend: Backend) -> Result<Vec<Vec<f64>>> {
        let k = self.rhs.len();
        let idx: Vec<usize> = self.fixed.keys().copied().collect();
        let mut values = vec![Vec::with_capacity(idx.len()); k];
        for (&i, vals) in &self.fixed {
            if vals.len() != k {
                return Err(Error::SizeMismatch(format!("constraint on {i} has {} values for {k} columns", vals.len())));
            }
            for c in 0..k {
                values[c].push(vals[c]);
            }
        }
        DirichletSolver::new(self.matrix, &idx, backend)?.solve(&self.rhs, &values)
    }
}

enum Factor {
    Cholesky(Llt<usize, f64>),
    Cg,
    Empty,
}

/// Factorization of `A` restricted to the unknowns that are not prescribed,
/// reusable for any right-hand side and any prescribed values.
pub struct DirichletSolver {
    n: usize,
    free: Vec<usize>,
    fixed: Vec<usize>,
    reduced: SparseMatrix,
    /// `(free row, fixed slot, value)` couplings moved to the right-hand side.
    coupling: Vec<(usize, usize, f64)>,
    factor: Factor,
}

impl DirichletSolver {
    pub fn new(a: &SparseMatrix, fixed: &[usize], backend: Backend) -> Result<Self> {
        let n = a.dim();
        let mut slot = vec![usize::MAX; n];
        for (s, &i) in fixed.iter().enumerate() {
            if i >= n {
                return Err(Error::SizeMismatch(format!("constraint index {i} outside {n} unknowns")));
            }
            slot[i] = s;
        }
        let mut local = vec![usize::MAX; n];
        let mut free = Vec::with_capacity(n);
        for i in 0..n {
            if slot[i] == usize::MAX {
                local[i] = free.len();
                free.push(i);
            }
        }
        let mut trips = Vec::with_capacity(a.nnz());
        let mut coupling = Vec::new();
        for (li, &i) in free.iter().enumerate() {
            for (j, v) in a.row(i) {
                if local[j] != usize::MAX {
                    trips.push((li, local[j], v));
                } else {
                    coupling.push((li, slot[j], v));
                }
            }
        }
        let nf = free.len();
        let reduced = SparseMatrix::from_triplets(nf, &trips);
        let use_cg = match backend {
            Backend::Auto => nf > CG_THRESHOLD,
            Backend::Cholesky => false,
            Backend::ConjugateGradient => true,
        };
        let factor = if nf == 0 {
            Factor::Empty
        } else if use_cg {
            Factor::Cg
        } else {
            Factor::Cholesky(cholesky(&reduced)?)
        };
        Ok(DirichletSolver {
            n,
            free,
            fixed: fixed.to_vec(),
            reduced,
            coupling,
            factor,
        })
    }

    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    /// Solve for every column; `rhs` may be empty (homogeneous), `values`
    /// holds the prescribed values per column in the order of `fixed()`.
    pub fn solve(&self, rhs: &[Vec<f64>], values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let k = values.len();
        if values.iter().any(|v| v.len() != self.fixed.len()) || (!rhs.is_empty() && rhs.len() != k) {
            return Err(Error::SizeMismatch("right-hand sides and constraint values disagree".into()));
        }
        let nf = self.free.len();
        let mut b = vec![vec![0.0; nf]; k];
        for c in 0..k {
            if let Some(r) = rhs.get(c) {
                for (li, &i) in self.free.iter().enumerate() {
                    b[c][li] = r[i];
                }
            }
            for &(li, s, v) in &self.coupling {
                b[c][li] -= v * values[c][s];
            }
        }
        let x = match &self.factor {
            Factor::Empty => vec![Vec::new(); k],
            Factor::Cg => b
                .iter()
                .map(|bc| conjugate_gradient(&self.reduced, bc, 1e-12, 10 * nf.max(10)))
                .collect::<Result<Vec<_>>>()?,
            Factor::Cholesky(llt) => cholesky_solve(llt, &self.reduced, &b)?,
        };
        let mut out = vec![vec![0.0; self.n]; k];
        for c in 0..k {
            for (s, &i) in self.fixed.iter().enumerate() {
                out[c][i] = values[c][s];
            }
            for (li, &i) in self.free.iter().enumerate() {
                out[c][i] = x[c][li];
            }
        }
        Ok(out)
    }
}

fn residual_inf(a: &SparseMatrix, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let m = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (r, m)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn cholesky(a: &SparseMatrix) -> Result<Llt<usize, f64>> {
    let n = a.dim();
    let trips: Vec<Triplet<usize, usize, f64>> = (0..n)
        .flat_map(|i| a.row(i).filter(move |&(j, _)| j <= i).map(move |(j, v)| Triplet::new(i, j, v)))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| Error::SingularSystem(format!("{e:?}")))?;
    mat.sp_cholesky(Side::Lower)
        .map_err(|e| Error::SingularSystem(format!("{e:?}")))
}

fn cholesky_solve(llt: &Llt<usize, f64>, a: &SparseMatrix, b: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.dim();
    let k = b.len();
    let solve = |rhs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut m = Mat::<f64>::zeros(n, k);
        for (c, col) in rhs.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                m[(i, c)] = *v;
            }
        }
        llt.solve_in_place(m.as_mut());
        (0..k).map(|c| (0..n).map(|i| m[(i, c)]).collect()).collect()
    };
    let mut x = solve(b);
    // iterative refinement against the assembled matrix
    for _ in 0..3 {
        let mut worst = 0.0f64;
        let mut res = Vec::with_capacity(k);
        for c in 0..k {
            let (r, m) = residual_inf(a, &x[c], &b[c]);
            let scale = inf_norm(&b[c]).max(f64::MIN_POSITIVE);
            worst = worst.max(m / scale);
            res.push(r);
        }
        if worst < 1e-13 || !worst.is_finite() {
            break;
        }
        let dx = solve(&res);
        for c in 0..k {
            for i in 0..n {
                x[c][i] += dx[c][i];
            }
        }
    }
    for c in 0..k {
        if x[c].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparse Cholesky solve"));
        }
        let (_, m) = residual_inf(a, &x[c], &b[c]);
        let scale = inf_norm(&b[c]);
        if scale > 0.0 && m > 1e-10 * scale {
            warn!("sparse solve residual {m:.3e} exceeds 1e-10 relative (rhs norm {scale:.3e})");
        }
    }
    Ok(x)
}

/// Jacobi-preconditioned conjugate gradients; `tol` is relative to `‖b‖∞`.
pub fn conjugate_gradient(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.dim();
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::SingularSystem("non-positive diagonal in CG".into()));
    }
    let bnorm = inf_norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        let ap = a.mul_vec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::SingularSystem("matrix is not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if inf_norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SingularSystem(format!("CG did not converge in {max_iter} iterations")))
}
