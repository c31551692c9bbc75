use super::geometry::{centroid, distance, simplex_measure, Point};
use super::{BoundaryTag, PrimalMesh};

/// One dual volume `D`, built around side `sigma_D` by joining the
/// barycentres of the incident elements through the side's vertices.
#[derive(Debug, Clone)]
pub struct DualVolume {
    pub side: usize,
    /// `|D|`
    pub measure: f64,
    /// `Q_D`, the barycentre of the owning side; the unknowns live here.
    pub barycentre: Point,
    /// Centre of mass of the dual volume itself.
    pub centroid: Point,
    pub boundary: Option<BoundaryTag>,
}

impl DualVolume {
    pub fn is_exterior(&self) -> bool {
        self.boundary.is_some()
    }

    pub fn is_dirichlet(&self) -> bool {
        self.boundary == Some(BoundaryTag::Dirichlet)
    }
}

/// The intersection `K ∩ D`: the simplex spanned by the barycentre of `K`
/// and the vertices of `sigma_D`. Its measure is `|K| / (d + 1)`.
#[derive(Debug, Clone)]
pub struct DualPiece {
    pub element: usize,
    pub measure: f64,
    pub centroid: Point,
}

/// Dual face `sigma_{D,E}` between two neighbouring dual volumes. The pair
/// is stored once with `d < e`.
#[derive(Debug, Clone)]
pub struct DualFace {
    pub d: usize,
    pub e: usize,
    /// `K_{D,E}`, the element containing the face.
    pub element: usize,
    /// `|sigma_{D,E}|`
    pub measure: f64,
    /// `d_{D,E} = |Q_E - Q_D|`
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct DualMesh {
    dim: usize,
    volumes: Vec<DualVolume>,
    pieces: Vec<Vec<DualPiece>>,
    faces: Vec<DualFace>,
    neighbors: Vec<Vec<(usize, usize)>>,
}

impl DualMesh {
    pub fn build(mesh: &PrimalMesh) -> Self {
        let dim = mesh.dim();
        let ns = mesh.num_sides();
        let mut pieces: Vec<Vec<DualPiece>> = vec![Vec::new(); ns];
        let mut faces = Vec::new();

        for k in 0..mesh.num_elements() {
            let xk = mesh.element_barycentre(k);
            let vol = mesh.element_volume(k);
            let sides = mesh.element_sides(k);
            for &s in sides {
                let mut pts = vec![xk];
                pts.extend(mesh.sides()[s].iter().map(|&v| mesh.vertices()[v]));
                pieces[s].push(DualPiece {
                    element: k,
                    measure: vol / (dim as f64 + 1.0),
                    centroid: centroid(&pts),
                });
            }
            for a in 0..sides.len() {
                for b in a + 1..sides.len() {
                    let (d, e) = if sides[a] < sides[b] { (sides[a], sides[b]) } else { (sides[b], sides[a]) };
                    // shared vertices of the two sides plus the element barycentre
                    let mut pts = vec![xk];
                    pts.extend(
                        mesh.sides()[d]
                            .iter()
                            .filter(|v| mesh.sides()[e].contains(v))
                            .map(|&v| mesh.vertices()[v]),
                    );
                    faces.push(DualFace {
                        d,
                        e,
                        element: k,
                        measure: simplex_measure(&pts),
                        distance: distance(&mesh.side_barycentre(d), &mesh.side_barycentre(e)),
                    });
                }
            }
        }
        faces.sort_by_key(|f| (f.d, f.e));

        let mut neighbors = vec![Vec::new(); ns];
        for (i, f) in faces.iter().enumerate() {
            neighbors[f.d].push((f.e, i));
            neighbors[f.e].push((f.d, i));
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        let volumes = (0..ns)
            .map(|s| {
                let measure = pieces[s].iter().map(|p| p.measure).sum();
                let mut c = [0.0; 3];
                for p in &pieces[s] {
                    for (ci, pi) in c.iter_mut().zip(p.centroid) {
                        *ci += pi * p.measure / measure;
                    }
                }
                DualVolume {
                    side: s,
                    measure,
                    barycentre: mesh.side_barycentre(s),
                    centroid: c,
                    boundary: mesh.boundary_tag(s),
                }
            })
            .collect();

        DualMesh { dim, volumes, pieces, faces, neighbors }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn volumes(&self) -> &[DualVolume] {
        &self.volumes
    }

    pub fn volume(&self, d: usize) -> &DualVolume {
        &self.volumes[d]
    }

    /// The pieces `K ∩ D` making up dual volume `d`.
    pub fn pieces(&self, d: usize) -> &[DualPiece] {
        &self.pieces[d]
    }

    /// All dual faces, sorted by `(d, e)`.
    pub fn faces(&self) -> &[DualFace] {
        &self.faces
    }

    /// `N(D)` as `(E, face index)` pairs sorted by `E`.
    pub fn neighbors(&self, d: usize) -> &[(usize, usize)] {
        &self.neighbors[d]
    }

    pub fn total_measure(&self) -> f64 {
        self.volumes.iter().map(|v| v.measure).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> PrimalMesh {
        PrimalMesh::from_parts(
            2,
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![vec![0, 1, 2]],
            &[],
        )
        .unwrap()
    }

    #[test]
    fn unit_triangle_duals() {
        let dual = DualMesh::build(&tri());
        assert_eq!(dual.len(), 3);
        for v in dual.volumes() {
            assert!((v.measure - 0.5 / 3.0).abs() < 1e-15);
            assert!(v.is_exterior());
        }
        assert_eq!(dual.faces().len(), 3);
        // faces join the barycentre (1/3, 1/3) to a vertex
        let f = &dual.faces()[0];
        assert!(f.measure > 0.0);
    }

    #[test]
    fn two_triangle_interior_dual() {
        let mesh = PrimalMesh::unit_square(1, |_| BoundaryTag::Impervious).unwrap();
        let dual = DualMesh::build(&mesh);
        let interior: Vec<_> = dual.volumes().iter().filter(|v| !v.is_exterior()).collect();
        assert_eq!(interior.len(), 1);
        assert!((interior[0].measure - 1.0 / 3.0).abs() < 1e-15);
        assert!((dual.total_measure() - 1.0).abs() < 1e-15);
        // the diagonal neighbours all four outer sides
        assert_eq!(dual.neighbors(interior[0].side).len(), 4);
    }

    #[test]
    fn partition_and_symmetry_on_refined_mesh() {
        let mesh = PrimalMesh::unit_square(5, |_| BoundaryTag::Impervious).unwrap();
        let dual = DualMesh::build(&mesh);
        let total = mesh.total_volume();
        assert!((dual.total_measure() - total).abs() <= 1e-12 * total);
        for d in 0..dual.len() {
            for &(e, _) in dual.neighbors(d) {
                assert!(dual.neighbors(e).iter().any(|&(x, _)| x == d));
                // neighbours iff the two sides share an element
                let shared = mesh.side_elements(d).iter().any(|k| mesh.side_elements(e).contains(k));
                assert!(shared);
            }
            for p in dual.pieces(d) {
                assert!((p.measure - mesh.element_volume(p.element) / 3.0).abs() < 1e-15);
            }
        }
    }
}
