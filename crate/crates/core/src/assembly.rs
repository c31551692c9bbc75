//! Nonconforming (Crouzeix-Raviart) stiffness couplings between dual
//! volumes.
//!
//! The matrix is stored in inner-product form, `A[D][E] = Σ_K (Λ ∇φ_E, ∇φ_D)_K`.
//! The transmissibility used by the finite volume fluxes is the negated
//! off-diagonal entry, see [`StiffnessMatrix::coupling`].

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mesh::geometry::dot;
use crate::mesh::{DualMesh, PrimalMesh};
use crate::physics::{Tensor, TensorField};

/// Couplings below this value count as negative transmissibilities.
pub const NEGATIVE_COUPLING_THRESHOLD: f64 = -1e-14;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("permeability on element {element} is not symmetric positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotSpd { element: usize, min_eigenvalue: f64 },
    #[error("permeability on element {element} has dimension {found}, mesh has {expected}")]
    DimensionMismatch { element: usize, expected: usize, found: usize },
    #[error("coercivity violated: ratio {ratio:e} < c_lambda {c_lambda:e}")]
    Coercivity { ratio: f64, c_lambda: f64, vector: Vec<f64> },
}

/// Sparse symmetric stiffness matrix indexed by dual volumes, rows in CSR
/// layout with sorted column indices.
#[derive(Debug, Clone)]
pub struct StiffnessMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    provenance: Vec<Option<usize>>,
    c_lambda: f64,
}

impl StiffnessMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Lower bound on the permeability eigenvalues over all elements.
    pub fn c_lambda(&self) -> f64 {
        self.c_lambda
    }

    fn position(&self, d: usize, e: usize) -> Option<usize> {
        let row = &self.cols[self.row_ptr[d]..self.row_ptr[d + 1]];
        row.binary_search(&e).ok().map(|i| self.row_ptr[d] + i)
    }

    /// Inner-product entry `A[D][E]`, zero outside the sparsity pattern.
    pub fn get(&self, d: usize, e: usize) -> f64 {
        self.position(d, e).map_or(0.0, |i| self.values[i])
    }

    /// Transmissibility `𝕄_{D,E} = -A[D][E]` for `D != E`.
    pub fn coupling(&self, d: usize, e: usize) -> f64 {
        -self.get(d, e)
    }

    /// Element that produced an off-diagonal entry.
    pub fn provenance(&self, d: usize, e: usize) -> Option<usize> {
        self.position(d, e).and_then(|i| self.provenance[i])
    }

    pub fn row(&self, d: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[d]..self.row_ptr[d + 1]).map(move |i| (self.cols[i], self.values[i]))
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.n).map(|d| self.row(d).map(|(e, a)| a * u[e]).sum()).collect()
    }

    /// `u^T A u`
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        self.apply(u).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    /// Writes the nonzero entries as `D E value` lines.
    pub fn write_coordinate(&self, mut out: impl Write) -> std::io::Result<()> {
        for d in 0..self.n {
            for (e, a) in self.row(d) {
                writeln!(out, "{d} {e} {a:.16e}")?;
            }
        }
        Ok(())
    }
}

/// Assembles the stiffness matrix for the permeability field, evaluated at
/// each element barycentre.
pub fn assemble(mesh: &PrimalMesh, dual: &DualMesh, permeability: &TensorField) -> Result<StiffnessMatrix, AssemblyError> {
    let dim = mesh.dim();
    let tensors = (0..mesh.num_elements())
        .map(|k| {
            let t = permeability.at(&mesh.element_barycentre(k));
            if t.dim() != dim {
                return Err(AssemblyError::DimensionMismatch { element: k, expected: dim, found: t.dim() });
            }
            let min_eigenvalue = t.min_eigenvalue();
            if !t.is_symmetric() || !(min_eigenvalue > 0.0) {
                return Err(AssemblyError::NotSpd { element: k, min_eigenvalue });
            }
            Ok((t, min_eigenvalue))
        })
        .collect::<Result<Vec<(Tensor, f64)>, _>>()?;

    let n = dual.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    row_ptr.push(0);
    for d in 0..n {
        let mut row: Vec<usize> = dual.neighbors(d).iter().map(|&(e, _)| e).collect();
        row.push(d);
        row.sort_unstable();
        cols.extend(row);
        row_ptr.push(cols.len());
    }
    let mut m = StiffnessMatrix {
        n,
        row_ptr,
        values: vec![0.0; cols.len()],
        provenance: vec![None; cols.len()],
        cols,
        c_lambda: tensors.iter().map(|t| t.1).fold(f64::INFINITY, f64::min),
    };

    for k in 0..mesh.num_elements() {
        let (tensor, _) = &tensors[k];
        let vol = mesh.element_volume(k);
        let sides = mesh.element_sides(k);
        let grads: Vec<_> = (0..=dim).map(|i| mesh.cr_gradient(k, i)).collect();
        for i in 0..=dim {
            let flux = tensor.apply(&grads[i]);
            for j in 0..=dim {
                let pos = m.position(sides[j], sides[i]).expect("pattern covers element couplings");
                m.values[pos] += vol * dot(&flux, &grads[j]);
                if i != j {
                    m.provenance[pos] = Some(k);
                }
            }
        }
    }
    Ok(m)
}

/// Companion matrix with `Λ = I`, whose quadratic form is the broken seminorm.
pub fn assemble_identity(mesh: &PrimalMesh, dual: &DualMesh) -> StiffnessMatrix {
    assemble(mesh, dual, &TensorField::Constant(Tensor::isotropic(mesh.dim(), 1.0)))
        .expect("identity tensor is SPD")
}

/// `‖u_h‖²_{X_h} = Σ_K ∫_K |∇u_h|²` for the nonconforming interpolant with
/// side values `u`; `identity` must be assembled with `Λ = I`.
pub fn broken_norm_squared(values: &[f64], identity: &StiffnessMatrix) -> f64 {
    identity.quadratic_form(values)
}

#[derive(Debug, Clone)]
pub struct CoercivityReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub c_lambda: f64,
    pub samples: usize,
    pub worst_vector: Vec<f64>,
}

impl CoercivityReport {
    pub fn passed(&self) -> bool {
        self.min_ratio >= self.c_lambda * (1.0 - 1e-10)
    }
}

/// Samples Rayleigh ratios `u^T A u / ‖u‖²_{X_h}` over random nonconstant
/// vectors drawn from a seeded generator.
pub fn coercivity_check(matrix: &StiffnessMatrix, identity: &StiffnessMatrix, samples: usize, seed: u64) -> Result<CoercivityReport, AssemblyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CoercivityReport {
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        c_lambda: matrix.c_lambda(),
        samples: 0,
        worst_vector: Vec::new(),
    };
    while report.samples < samples {
        let u: Vec<f64> = (0..matrix.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let seminorm = identity.quadratic_form(&u);
        if !(seminorm > 0.0) {
            continue;
        }
        let ratio = matrix.quadratic_form(&u) / seminorm;
        report.max_ratio = report.max_ratio.max(ratio);
        if ratio < report.min_ratio {
            report.min_ratio = ratio;
            report.worst_vector = u;
        }
        report.samples += 1;
    }
    if !report.passed() {
        return Err(AssemblyError::Coercivity {
            ratio: report.min_ratio,
            c_lambda: report.c_lambda,
            vector: report.worst_vector,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TransmissibilityReport {
    /// `(D, E, 𝕄_{D,E})` with `D < E` and `𝕄_{D,E} < -1e-14`.
    pub negative: Vec<(usize, usize, f64)>,
    pub pairs: usize,
    pub nonnegative_fraction: f64,
}

/// Lists the negative transmissibilities among all neighbour pairs.
pub fn transmissibility_signs(matrix: &StiffnessMatrix) -> TransmissibilityReport {
    let mut negative = Vec::new();
    let mut pairs = 0;
    for d in 0..matrix.len() {
        for (e, a) in matrix.row(d) {
            if e <= d {
                continue;
            }
            pairs += 1;
            if -a < NEGATIVE_COUPLING_THRESHOLD {
                negative.push((d, e, -a));
            }
        }
    }
    let nonnegative_fraction = if pairs == 0 { 1.0 } else { (pairs - negative.len()) as f64 / pairs as f64 };
    TransmissibilityReport { negative, pairs, nonnegative_fraction }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryTag;

    fn single(points: [[f64; 2]; 3]) -> (PrimalMesh, DualMesh) {
        let mesh = PrimalMesh::from_parts(
            2,
            points.iter().map(|p| [p[0], p[1], 0.0]).collect(),
            vec![vec![0, 1, 2]],
            &[],
        )
        .unwrap();
        let dual = DualMesh::build(&mesh);
        (mesh, dual)
    }

    #[test]
    fn scaling_the_tensor_scales_every_entry() {
        let mesh = PrimalMesh::unit_square(3, |_| BoundaryTag::Impervious).unwrap();
        let dual = DualMesh::build(&mesh);
        let a = assemble_identity(&mesh, &dual);
        let b = assemble(&mesh, &dual, &TensorField::Constant(Tensor::isotropic(2, 10.0))).unwrap();
        for d in 0..a.len() {
            for (e, v) in a.row(d) {
                assert!((b.get(d, e) - 10.0 * v).abs() <= 1e-14 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constants_are_in_the_kernel_and_matrix_is_symmetric() {
        let mesh = PrimalMesh::unit_square(4, |_| BoundaryTag::Impervious).unwrap();
        let dual = DualMesh::build(&mesh);
        let m = assemble(&mesh, &dual, &TensorField::Constant(Tensor::new(2, &[3.0, 0.7, 0.7, 1.2]))).unwrap();
        let scale = (0..m.len()).map(|d| m.get(d, d)).fold(0.0, f64::max);
        for (d, r) in m.apply(&vec![1.0; m.len()]).iter().enumerate() {
            assert!(r.abs() <= 1e-12 * scale, "row {d}: {r}");
        }
        for d in 0..m.len() {
            for (e, v) in m.row(d) {
                assert_eq!(v, m.get(e, d));
                if e != d {
                    assert!(dual.neighbors(d).iter().any(|&(x, _)| x == e));
                    assert!(m.provenance(d, e).is_some());
                }
            }
        }
    }

    #[test]
    fn non_spd_tensor_is_rejected() {
        let (mesh, dual) = single([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let err = assemble(&mesh, &dual, &TensorField::Constant(Tensor::new(2, &[1.0, 2.0, 2.0, 1.0]))).unwrap_err();
        assert!(matches!(err, AssemblyError::NotSpd { element: 0, .. }));
        let err = assemble(&mesh, &dual, &TensorField::Constant(Tensor::new(2, &[1.0, 0.1, 0.0, 1.0]))).unwrap_err();
        assert!(matches!(err, AssemblyError::NotSpd { .. }));
    }

    #[test]
    fn obtuse_triangle_has_a_negative_coupling() {
        let (mesh, dual) = single([[0.0, 0.0], [4.0, 0.0], [2.0, 0.5]]);
        let m = assemble_identity(&mesh, &dual);
        let report = transmissibility_signs(&m);
        assert_eq!(report.pairs, 3);
        assert_eq!(report.negative.len(), 1);
        // the two sides meeting at the obtuse vertex have midpoints at y = 0.25
        let (d, e, v) = report.negative[0];
        assert_eq!(mesh.side_barycentre(d)[1], 0.25);
        assert_eq!(mesh.side_barycentre(e)[1], 0.25);
        assert!(v < 0.0);
        assert!((report.nonnegative_fraction - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coercivity_of_isotropic_tensor_is_exact() {
        let mesh = PrimalMesh::unit_square(3, |_| BoundaryTag::Impervious).unwrap();
        let dual = DualMesh::build(&mesh);
        let id = assemble_identity(&mesh, &dual);
        let m = assemble(&mesh, &dual, &TensorField::Constant(Tensor::isotropic(2, 3.5))).unwrap();
        let r = coercivity_check(&m, &id, 200, 7).unwrap();
        assert!((r.min_ratio - 3.5).abs() < 1e-12 && (r.max_ratio - 3.5).abs() < 1e-12);
    }
}
