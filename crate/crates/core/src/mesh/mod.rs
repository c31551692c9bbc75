//! Primal simplicial meshes, their side-centred dual meshes and the
//! geometric quantities consumed by the scheme.

mod dual;
pub mod geometry;
mod io;

use std::collections::BTreeMap;

use thiserror::Error;

pub use dual::{DualFace, DualMesh, DualPiece, DualVolume};
pub use geometry::Point;
pub use io::{load_primal, parse_primal, write_primal, MeshFormat};

use geometry::{barycentric_gradients, centroid, diameter, dot, norm, scale, simplex_measure};

/// Relative tolerance used by the partition and coverage checks.
const COVERAGE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported spatial dimension {0} (expected 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("element {element}: {message}")]
    InvalidElement { element: usize, message: String },
    #[error("degenerate element {element} (measure {measure:e})")]
    DegenerateElement { element: usize, measure: f64 },
    #[error("topology error: side {side:?} is shared by {count} elements")]
    NonManifoldSide { side: Vec<usize>, count: usize },
    #[error("tagged side {side:?}: {message}")]
    InvalidTag { side: Vec<usize>, message: String },
    #[error("elements overlap or leave gaps: element volume sum {elements:e}, enclosed volume {enclosed:e}")]
    Coverage { elements: f64, enclosed: f64 },
    #[error("{0}")]
    Unsupported(String),
}

/// Boundary condition carried by an exterior side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    /// Impervious boundary: zero normal flux for both phases.
    Impervious,
    /// Dirichlet boundary with both phase pressures pinned to zero.
    Dirichlet,
}

impl BoundaryTag {
    pub fn code(self) -> u8 {
        match self {
            BoundaryTag::Impervious => 0,
            BoundaryTag::Dirichlet => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(BoundaryTag::Impervious),
            1 => Some(BoundaryTag::Dirichlet),
            _ => None,
        }
    }
}

/// Shape regularity summary: `kappa = min |K| / diam(K)^d` and `h = max diam(K)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    pub kappa: f64,
    pub h: f64,
    pub worst_element: usize,
}

/// A conforming simplicial triangulation with enumerated sides.
///
/// Sides are stored as sorted vertex tuples and enumerated in lexicographic
/// order. The local side `i` of an element is the side opposite its local
/// vertex `i`.
#[derive(Debug, Clone)]
pub struct PrimalMesh {
    dim: usize,
    vertices: Vec<Point>,
    elements: Vec<Vec<usize>>,
    sides: Vec<Vec<usize>>,
    side_elements: Vec<Vec<usize>>,
    element_sides: Vec<Vec<usize>>,
    boundary_tags: Vec<Option<BoundaryTag>>,
    element_volumes: Vec<f64>,
    side_measures: Vec<f64>,
    lambda_gradients: Vec<Vec<Point>>,
}

impl PrimalMesh {
    /// Builds and validates a mesh. Boundary sides not listed in `tagged`
    /// default to [`BoundaryTag::Impervious`].
    pub fn from_parts(
        dim: usize,
        vertices: Vec<Point>,
        elements: Vec<Vec<usize>>,
        tagged: &[(Vec<usize>, BoundaryTag)],
    ) -> Result<Self, MeshError> {
        if dim != 2 && dim != 3 {
            return Err(MeshError::UnsupportedDimension(dim));
        }
        let nv = vertices.len();
        let mut element_volumes = Vec::with_capacity(elements.len());
        let mut lambda_gradients = Vec::with_capacity(elements.len());
        for (k, el) in elements.iter().enumerate() {
            if el.len() != dim + 1 {
                return Err(MeshError::InvalidElement {
                    element: k,
                    message: format!("expected {} vertices, found {}", dim + 1, el.len()),
                });
            }
            if let Some(&v) = el.iter().find(|&&v| v >= nv) {
                return Err(MeshError::InvalidElement {
                    element: k,
                    message: format!("vertex index {v} out of range (nv = {nv})"),
                });
            }
            let pts: Vec<Point> = el.iter().map(|&v| vertices[v]).collect();
            let measure = simplex_measure(&pts);
            let diam = diameter(&pts);
            if !(measure > 1e-12 * diam.powi(dim as i32)) {
                return Err(MeshError::DegenerateElement { element: k, measure });
            }
            let grads = barycentric_gradients(&pts, dim)
                .ok_or(MeshError::DegenerateElement { element: k, measure })?;
            element_volumes.push(measure);
            lambda_gradients.push(grads);
        }

        let mut side_map: BTreeMap<Vec<usize>, Vec<(usize, usize)>> = BTreeMap::new();
        for (k, el) in elements.iter().enumerate() {
            for i in 0..=dim {
                let mut key: Vec<usize> = el
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &v)| v)
                    .collect();
                key.sort_unstable();
                side_map.entry(key).or_default().push((k, i));
            }
        }

        let mut sides = Vec::with_capacity(side_map.len());
        let mut side_elements = Vec::with_capacity(side_map.len());
        let mut element_sides = vec![vec![usize::MAX; dim + 1]; elements.len()];
        let mut index_of = BTreeMap::new();
        for (s, (key, owners)) in side_map.into_iter().enumerate() {
            if owners.len() > 2 {
                return Err(MeshError::NonManifoldSide { side: key, count: owners.len() });
            }
            for &(k, i) in &owners {
                element_sides[k][i] = s;
            }
            side_elements.push(owners.iter().map(|&(k, _)| k).collect::<Vec<_>>());
            index_of.insert(key.clone(), s);
            sides.push(key);
        }

        let mut boundary_tags: Vec<Option<BoundaryTag>> = side_elements
            .iter()
            .map(|owners| (owners.len() == 1).then_some(BoundaryTag::Impervious))
            .collect();
        let mut seen = vec![false; sides.len()];
        for (verts, tag) in tagged {
            let mut key = verts.clone();
            key.sort_unstable();
            let Some(&s) = index_of.get(&key) else {
                return Err(MeshError::InvalidTag {
                    side: key,
                    message: "not a side of any element".into(),
                });
            };
            if side_elements[s].len() != 1 {
                return Err(MeshError::InvalidTag {
                    side: key,
                    message: "interior sides cannot carry a boundary tag".into(),
                });
            }
            if seen[s] && boundary_tags[s] != Some(*tag) {
                return Err(MeshError::InvalidTag {
                    side: key,
                    message: "conflicting tags".into(),
                });
            }
            seen[s] = true;
            boundary_tags[s] = Some(*tag);
        }

        let side_measures = sides
            .iter()
            .map(|sv| {
                let pts: Vec<Point> = sv.iter().map(|&v| vertices[v]).collect();
                simplex_measure(&pts)
            })
            .collect();

        let mesh = PrimalMesh {
            dim,
            vertices,
            elements,
            sides,
            side_elements,
            element_sides,
            boundary_tags,
            element_volumes,
            side_measures,
            lambda_gradients,
        };
        mesh.check_coverage()?;
        Ok(mesh)
    }

    /// Compares the summed element measure with the measure enclosed by the
    /// boundary (divergence theorem on `x`), which detects overlapping or
    /// folded elements.
    fn check_coverage(&self) -> Result<(), MeshError> {
        let total = self.total_volume();
        let mut enclosed = 0.0;
        for s in 0..self.num_sides() {
            if !self.is_boundary_side(s) {
                continue;
            }
            let k = self.side_elements[s][0];
            let local = self.element_sides[k].iter().position(|&x| x == s).unwrap();
            let n = self.outward_normal(k, local);
            let q = self.side_barycentre(s);
            enclosed += dot(&q, &n) * self.side_measures[s];
        }
        enclosed /= self.dim as f64;
        if (enclosed - total).abs() > COVERAGE_TOLERANCE * total {
            return Err(MeshError::Coverage { elements: total, enclosed });
        }
        Ok(())
    }

    /// Structured triangulation of the unit square with `n x n` cells, each
    /// split along its `(0,0)-(1,1)` diagonal. All angles are at most pi/2.
    pub fn unit_square(n: usize, tag: impl Fn(&Point) -> BoundaryTag) -> Result<Self, MeshError> {
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * h, j as f64 * h, 0.0]);
            }
        }
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                elements.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                elements.push(vec![idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        let mesh = PrimalMesh::from_parts(2, vertices, elements, &[])?;
        Ok(mesh.with_boundary_tags(tag))
    }

    /// Copy of the mesh with every boundary side retagged by `tag`, evaluated
    /// at the side barycentre.
    pub fn with_boundary_tags(&self, tag: impl Fn(&Point) -> BoundaryTag) -> Self {
        let mut out = self.clone();
        for s in 0..out.num_sides() {
            if out.boundary_tags[s].is_some() {
                out.boundary_tags[s] = Some(tag(&self.side_barycentre(s)));
            }
        }
        out
    }

    /// Uniform red refinement of a triangulation: every triangle is split
    /// into four congruent children through its edge midpoints. Boundary
    /// tags are inherited by the child sides.
    pub fn refine_uniform(&self) -> Result<Self, MeshError> {
        if self.dim != 2 {
            return Err(MeshError::Unsupported(
                "uniform refinement is implemented for triangles only".into(),
            ));
        }
        let mut vertices = self.vertices.clone();
        let mut midpoint = Vec::with_capacity(self.num_sides());
        for side in &self.sides {
            midpoint.push(vertices.len());
            vertices.push(centroid(&[self.vertices[side[0]], self.vertices[side[1]]]));
        }
        let mut elements = Vec::with_capacity(4 * self.num_elements());
        for (k, el) in self.elements.iter().enumerate() {
            // m[i] is the midpoint of the side opposite local vertex i
            let m: Vec<usize> = self.element_sides[k].iter().map(|&s| midpoint[s]).collect();
            elements.push(vec![el[0], m[2], m[1]]);
            elements.push(vec![m[2], el[1], m[0]]);
            elements.push(vec![m[1], m[0], el[2]]);
            elements.push(vec![m[0], m[1], m[2]]);
        }
        let mut tagged = Vec::new();
        for (s, side) in self.sides.iter().enumerate() {
            if let Some(tag) = self.boundary_tags[s] {
                tagged.push((vec![side[0], midpoint[s]], tag));
                tagged.push((vec![midpoint[s], side[1]], tag));
            }
        }
        PrimalMesh::from_parts(2, vertices, elements, &tagged)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn sides(&self) -> &[Vec<usize>] {
        &self.sides
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_sides(&self) -> usize {
        self.sides.len()
    }

    /// Elements incident to side `s` (one for boundary sides, two otherwise).
    pub fn side_elements(&self, s: usize) -> &[usize] {
        &self.side_elements[s]
    }

    /// Side indices of element `k`, ordered so that entry `i` is opposite local vertex `i`.
    pub fn element_sides(&self, k: usize) -> &[usize] {
        &self.element_sides[k]
    }

    pub fn is_boundary_side(&self, s: usize) -> bool {
        self.side_elements[s].len() == 1
    }

    /// `None` for interior sides.
    pub fn boundary_tag(&self, s: usize) -> Option<BoundaryTag> {
        self.boundary_tags[s]
    }

    pub fn element_volume(&self, k: usize) -> f64 {
        self.element_volumes[k]
    }

    pub fn side_measure(&self, s: usize) -> f64 {
        self.side_measures[s]
    }

    pub fn total_volume(&self) -> f64 {
        self.element_volumes.iter().sum()
    }

    pub fn element_points(&self, k: usize) -> Vec<Point> {
        self.elements[k].iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn element_barycentre(&self, k: usize) -> Point {
        centroid(&self.element_points(k))
    }

    pub fn element_diameter(&self, k: usize) -> f64 {
        diameter(&self.element_points(k))
    }

    pub fn side_barycentre(&self, s: usize) -> Point {
        let pts: Vec<Point> = self.sides[s].iter().map(|&v| self.vertices[v]).collect();
        centroid(&pts)
    }

    /// Gradients of the barycentric coordinates of element `k`.
    pub fn lambda_gradients(&self, k: usize) -> &[Point] {
        &self.lambda_gradients[k]
    }

    /// Unit normal of local side `i` of element `k`, pointing out of `k`.
    pub fn outward_normal(&self, k: usize, i: usize) -> Point {
        let g = &self.lambda_gradients[k][i];
        scale(g, -1.0 / norm(g))
    }

    /// Gradient of the Crouzeix-Raviart basis function of local side `i` on
    /// element `k`; equals `|sigma| / |K|` times the outward unit normal.
    pub fn cr_gradient(&self, k: usize, i: usize) -> Point {
        scale(&self.lambda_gradients[k][i], -(self.dim as f64))
    }

    pub fn regularity(&self) -> RegularityReport {
        let mut report = RegularityReport { kappa: f64::INFINITY, h: 0.0, worst_element: 0 };
        for k in 0..self.num_elements() {
            let diam = self.element_diameter(k);
            let ratio = self.element_volumes[k] / diam.powi(self.dim as i32);
            if ratio < report.kappa {
                report.kappa = ratio;
                report.worst_element = k;
            }
            report.h = report.h.max(diam);
        }
        report
    }
}
