//! Sparse linear algebra for the Newton steps.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

/// Square matrix in CSR layout with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Duplicate entries are summed in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for row in &mut rows {
            // stable sort keeps the summation order of duplicates
            row.sort_by_key(|e| e.0);
            for &(j, v) in row.iter() {
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == j {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix { n, row_ptr, cols, vals }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        r.binary_search(&j).map_or(0.0, |k| self.vals[self.row_ptr[i] + k])
    }

    pub fn scale_rows(&mut self, w: &[f64]) {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                self.vals[k] *= w[i];
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, a)| a * x[j]).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinearSolveError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve produced non-finite values")]
    NonFinite,
    #[error("iterative solver stalled after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("zero pivot in incomplete factorization at row {0}")]
    ZeroPivot(usize),
}

/// Sparse LU with partial pivoting.
pub fn solve_direct(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, LinearSolveError> {
    let n = a.len();
    let triplets: Vec<Triplet<usize, usize, f64>> =
        (0..n).flat_map(|i| a.row(i).map(move |(j, v)| Triplet::new(i, j, v))).collect();
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| LinearSolveError::Factorization(format!("{e:?}")))?;
    let lu = m.sp_lu().map_err(|e| LinearSolveError::Factorization(format!("{e:?}")))?;
    let mut rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    lu.solve_in_place(rhs.as_mut());
    let x: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(LinearSolveError::NonFinite)
    }
}

/// Incomplete LU factorization with the sparsity pattern of `a`.
struct Ilu0 {
    lu: SparseMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &SparseMatrix) -> Result<Self, LinearSolveError> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(LinearSolveError::ZeroPivot(i));
            }
        }
        for i in 0..n {
            for kk in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                let k = lu.cols[kk];
                if k >= i {
                    break;
                }
                let pivot = lu.vals[diag[k]];
                if pivot == 0.0 {
                    return Err(LinearSolveError::ZeroPivot(k));
                }
                let factor = lu.vals[kk] / pivot;
                lu.vals[kk] = factor;
                for jj in kk + 1..lu.row_ptr[i + 1] {
                    let j = lu.cols[jj];
                    let ukj = lu.get(k, j);
                    if ukj != 0.0 {
                        lu.vals[jj] -= factor * ukj;
                    }
                }
            }
            if lu.vals[diag[i]] == 0.0 {
                return Err(LinearSolveError::ZeroPivot(i));
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        let mut y = r.to_vec();
        for i in 0..n {
            for k in self.lu.row_ptr[i]..self.diag[i] {
                y[i] -= self.lu.vals[k] * y[self.lu.cols[k]];
            }
        }
        for i in (0..n).rev() {
            for k in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                y[i] -= self.lu.vals[k] * y[self.lu.cols[k]];
            }
            y[i] /= self.lu.vals[self.diag[i]];
        }
        y
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB with ILU(0); stops at relative residual
/// `tol`.
pub fn solve_iterative(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>, LinearSolveError> {
    let n = a.len();
    let pre = Ilu0::new(a)?;
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for it in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            return Err(LinearSolveError::NotConverged { iterations: it, residual: norm(&r) / b_norm });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = pre.apply(&p);
        v = a.mul(&p_hat);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = (0..n).map(|i| r[i] - alpha * v[i]).collect();
        if norm(&s) <= tol * b_norm {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(x);
        }
        let s_hat = pre.apply(&s);
        let t = a.mul(&s_hat);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        let res = norm(&r) / b_norm;
        if !res.is_finite() {
            return Err(LinearSolveError::NonFinite);
        }
        if res <= tol {
            return Ok(x);
        }
    }
    let res = norm(&(0..n).map(|i| b[i] - a.mul(&x)[i]).collect::<Vec<_>>()) / b_norm;
    Err(LinearSolveError::NotConverged { iterations: max_iter, residual: res })
}
