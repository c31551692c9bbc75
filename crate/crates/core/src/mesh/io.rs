//! Plain-text mesh format.
//!
//! ```text
//! dim nv ne ns
//! x y [z]              (nv lines)
//! v0 v1 v2 [v3]        (ne lines, 0-based)
//! v0 .. v_{d-1} tag    (ns lines, tag 0 = impervious, 1 = dirichlet)
//! ```
//!
//! Blank lines and `#` comments are ignored. Boundary sides that are not
//! listed are tagged impervious.

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryTag, MeshError, PrimalMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeshFormat {
    #[default]
    Text,
}

impl std::str::FromStr for MeshFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" | "txt" | "msh" => Ok(MeshFormat::Text),
            other => Err(format!("unknown mesh format '{other}'")),
        }
    }
}

pub fn load_primal(path: impl AsRef<Path>, format: MeshFormat) -> Result<PrimalMesh, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        MeshFormat::Text => parse_primal(&text),
    }
}

pub fn parse_primal(text: &str) -> Result<PrimalMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or(MeshError::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let header: Vec<usize> = parse_fields(hline, header)?;
    if header.len() != 4 {
        return Err(MeshError::Parse {
            line: hline,
            message: "header must be `dim nv ne ns`".into(),
        });
    }
    let (dim, nv, ne, ns) = (header[0], header[1], header[2], header[3]);
    if dim != 2 && dim != 3 {
        return Err(MeshError::UnsupportedDimension(dim));
    }

    let mut next = |what: &str| {
        lines.next().ok_or_else(|| MeshError::Parse {
            line: text.lines().count(),
            message: format!("unexpected end of file while reading {what}"),
        })
    };

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = next("vertices")?;
        let c: Vec<f64> = parse_fields(ln, l)?;
        if c.len() != dim {
            return Err(MeshError::Parse {
                line: ln,
                message: format!("expected {dim} coordinates, found {}", c.len()),
            });
        }
        let mut p = [0.0; 3];
        p[..dim].copy_from_slice(&c);
        vertices.push(p);
    }

    let mut elements = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (ln, l) = next("elements")?;
        let v: Vec<usize> = parse_fields(ln, l)?;
        if v.len() != dim + 1 {
            return Err(MeshError::Parse {
                line: ln,
                message: format!("expected {} vertex indices, found {}", dim + 1, v.len()),
            });
        }
        elements.push(v);
    }

    let mut tagged = Vec::with_capacity(ns);
    for _ in 0..ns {
        let (ln, l) = next("sides")?;
        let v: Vec<usize> = parse_fields(ln, l)?;
        if v.len() != dim + 1 {
            return Err(MeshError::Parse {
                line: ln,
                message: format!("expected {dim} vertex indices and a tag"),
            });
        }
        let tag = u8::try_from(v[dim])
            .ok()
            .and_then(BoundaryTag::from_code)
            .ok_or_else(|| MeshError::Parse {
                line: ln,
                message: format!("invalid boundary tag {}", v[dim]),
            })?;
        tagged.push((v[..dim].to_vec(), tag));
    }
    if let Some((ln, _)) = lines.next() {
        return Err(MeshError::Parse {
            line: ln,
            message: "trailing data after the declared sections".into(),
        });
    }

    PrimalMesh::from_parts(dim, vertices, elements, &tagged)
}

fn parse_fields<T: std::str::FromStr>(line: usize, text: &str) -> Result<Vec<T>, MeshError> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|_| MeshError::Parse {
                line,
                message: format!("invalid token '{tok}'"),
            })
        })
        .collect()
}

/// Serializes a mesh in the text format, listing every boundary side with
/// its tag. Coordinates are written with 17 significant digits.
pub fn write_primal(mesh: &PrimalMesh) -> String {
    let dim = mesh.dim();
    let boundary: Vec<usize> = (0..mesh.num_sides()).filter(|&s| mesh.is_boundary_side(s)).collect();
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {} {}", dim, mesh.num_vertices(), mesh.num_elements(), boundary.len());
    for v in mesh.vertices() {
        let coords: Vec<String> = v[..dim].iter().map(|x| format!("{x:.16e}")).collect();
        let _ = writeln!(out, "{}", coords.join(" "));
    }
    for el in mesh.elements() {
        let idx: Vec<String> = el.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", idx.join(" "));
    }
    for s in boundary {
        let idx: Vec<String> = mesh.sides()[s].iter().map(|v| v.to_string()).collect();
        let tag = mesh.boundary_tag(s).map(BoundaryTag::code).unwrap_or(0);
        let _ = writeln!(out, "{} {}", idx.join(" "), tag);
    }
    out
}
