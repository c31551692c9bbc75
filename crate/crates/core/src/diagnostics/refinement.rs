use std::f64::consts::PI;
use std::str::FromStr;

use thiserror::Error;

use crate::assembly::{assemble, AssemblyError};
use crate::mesh::{BoundaryTag, DualMesh, MeshError, Point, PrimalMesh};
use crate::physics::{Tensor, TensorField};
use crate::solver::linear::{solve_direct, LinearSolveError, SparseMatrix};

#[derive(Debug, Error)]
pub enum RefinementError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Linear(#[from] LinearSolveError),
    #[error("unknown manufactured problem `{0}` (expected linear, sin-sin or anisotropic)")]
    UnknownProblem(String),
    #[error("at least one level and a base resolution of at least 1 are required")]
    NoLevels,
}

/// Pure diffusion `-div(Λ ∇u) = f` on the unit square with Dirichlet data
/// taken from the exact solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManufacturedProblem {
    /// `u = 1 + 2x - y/2`, `Λ = I`
    Linear,
    /// `u = sin(πx) sin(πy)`, `Λ = I`
    SinSin,
    /// `u = sin(πx) sin(πy)`, `Λ = diag(10, 1)`
    Anisotropic,
}

impl FromStr for ManufacturedProblem {
    type Err = RefinementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "linear" => Ok(Self::Linear),
            "sin-sin" | "sinsin" | "smooth" => Ok(Self::SinSin),
            "anisotropic" => Ok(Self::Anisotropic),
            other => Err(RefinementError::UnknownProblem(other.to_string())),
        }
    }
}

impl ManufacturedProblem {
    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::SinSin => "sin-sin",
            Self::Anisotropic => "anisotropic",
        }
    }

    pub fn tensor(self) -> Tensor {
        match self {
            Self::Anisotropic => Tensor::diagonal(2, &[10.0, 1.0]),
            _ => Tensor::isotropic(2, 1.0),
        }
    }

    pub fn exact(self, x: &Point) -> f64 {
        match self {
            Self::Linear => 1.0 + 2.0 * x[0] - 0.5 * x[1],
            _ => (PI * x[0]).sin() * (PI * x[1]).sin(),
        }
    }

    pub fn forcing(self, x: &Point) -> f64 {
        let t = self.tensor();
        match self {
            Self::Linear => 0.0,
            _ => (t.get(0, 0) + t.get(1, 1)) * PI * PI * self.exact(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRow {
    pub level: usize,
    pub h: f64,
    pub sides: usize,
    pub l2_error: f64,
    /// `log2(e_{k-1} / e_k) / log2(h_{k-1} / h_k)`; `None` on the first level.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementTable {
    pub problem: ManufacturedProblem,
    pub rows: Vec<RefinementRow>,
}

impl RefinementTable {
    /// CSV with header `level,h,L2_error,order`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,h,L2_error,order\n");
        for r in &self.rows {
            let order = r.order.map(|o| format!("{o:.16e}")).unwrap_or_default();
            out.push_str(&format!("{},{:.16e},{:.16e},{}\n", r.level, r.h, r.l2_error, order));
        }
        out
    }

    pub fn min_order(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.order).reduce(f64::min)
    }

    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.l2_error).fold(0.0, f64::max)
    }
}

/// Solves the problem on `levels` uniform meshes of the unit square with
/// `base_n · 2^k` subdivisions per side. The load is lumped as `|D| f(Q_D)`
/// and the error is `sqrt(Σ_D |D| (u_D - u(Q_D))²)`.
pub fn refinement_study(problem: ManufacturedProblem, base_n: usize, levels: usize) -> Result<RefinementTable, RefinementError> {
    if levels == 0 || base_n == 0 {
        return Err(RefinementError::NoLevels);
    }
    let mut rows: Vec<RefinementRow> = Vec::with_capacity(levels);
    for level in 0..levels {
        let mesh = PrimalMesh::unit_square(base_n << level, |_| BoundaryTag::Dirichlet)?;
        let dual = DualMesh::build(&mesh);
        let a = assemble(&mesh, &dual, &TensorField::Constant(problem.tensor()))?;
        let n = dual.len();
        let exact: Vec<f64> = (0..n).map(|d| problem.exact(&dual.volume(d).barycentre)).collect();
        let mut index = vec![None; n];
        let mut free = Vec::new();
        for d in 0..n {
            if !dual.volume(d).is_exterior() {
                index[d] = Some(free.len());
                free.push(d);
            }
        }
        let mut triplets = Vec::new();
        let mut rhs = vec![0.0; free.len()];
        for (i, &d) in free.iter().enumerate() {
            let v = dual.volume(d);
            rhs[i] = v.measure * problem.forcing(&v.barycentre);
            for (e, val) in a.row(d) {
                match index[e] {
                    Some(j) => triplets.push((i, j, val)),
                    None => rhs[i] -= val * exact[e],
                }
            }
        }
        let u = solve_direct(&SparseMatrix::from_triplets(free.len(), &triplets), &rhs)?;
        let err2: f64 = free.iter().zip(&u).map(|(&d, ud)| dual.volume(d).measure * (ud - exact[d]).powi(2)).sum();
        let h = mesh.regularity().h;
        let l2_error = err2.sqrt();
        let order = rows.last().map(|prev| (prev.l2_error / l2_error).ln() / (prev.h / h).ln());
        rows.push(RefinementRow { level, h, sides: n, l2_error, order });
    }
    Ok(RefinementTable { problem, rows })
}
