use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::mesh::Point;

/// Symmetric `d x d` tensor stored in a 3x3 array (unused rows/columns zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor {
    dim: usize,
    m: [[f64; 3]; 3],
}

impl Tensor {
    pub fn new(dim: usize, entries: &[f64]) -> Self {
        assert!(entries.len() == dim * dim, "expected {} entries", dim * dim);
        let mut m = [[0.0; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                m[i][j] = entries[i * dim + j];
            }
        }
        Tensor { dim, m }
    }

    pub fn isotropic(dim: usize, c: f64) -> Self {
        Self::diagonal(dim, &[c, c, c][..dim])
    }

    pub fn diagonal(dim: usize, diag: &[f64]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for i in 0..dim {
            m[i][i] = diag[i];
        }
        Tensor { dim, m }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = *self;
        for row in &mut out.m {
            for x in row {
                *x *= c;
            }
        }
        out
    }

    pub fn apply(&self, v: &Point) -> Point {
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = self.m[i][0] * v[0] + self.m[i][1] * v[1] + self.m[i][2] * v[2];
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.m[i][j] == self.m[j][i]))
    }

    /// Sorted eigenvalues (ascending).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let a = DMatrix::from_fn(self.dim, self.dim, |i, j| 0.5 * (self.m[i][j] + self.m[j][i]));
        let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

pub type PointFn<T> = Arc<dyn Fn(&Point) -> T + Send + Sync>;

/// Scalar coefficient field such as the porosity.
#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Function(PointFn<f64>),
}

impl ScalarField {
    pub fn function(f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Function(Arc::new(f))
    }

    pub fn at(&self, x: &Point) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Function(_) => f.write_str("Function"),
        }
    }
}

/// Permeability field; evaluated once per element at its barycentre.
#[derive(Clone)]
pub enum TensorField {
    Constant(Tensor),
    Function(PointFn<Tensor>),
}

impl TensorField {
    pub fn function(f: impl Fn(&Point) -> Tensor + Send + Sync + 'static) -> Self {
        TensorField::Function(Arc::new(f))
    }

    pub fn at(&self, x: &Point) -> Tensor {
        match self {
            TensorField::Constant(t) => *t,
            TensorField::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for TensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorField::Constant(t) => write!(f, "Constant({t:?})"),
            TensorField::Function(_) => f.write_str("Function"),
        }
    }
}
