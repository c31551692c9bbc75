//! Field output: legacy ASCII VTK and per-dual-volume CSV.

use std::fmt::Write as _;

use thiserror::Error;

use crate::mesh::PrimalMesh;
use crate::scheme::State;

#[derive(Debug, Error)]
pub enum FieldReadError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty field file")]
    Empty,
}

/// Legacy VTK unstructured grid. Points are side barycentres; each element
/// contributes the simplex spanned by its side barycentres.
pub fn write_vtk(mesh: &PrimalMesh, state: &State) -> String {
    let dim = mesh.dim();
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "porflow step {} t={:.16e}", state.step, state.time);
    let _ = writeln!(out, "ASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", mesh.num_sides());
    for s in 0..mesh.num_sides() {
        let q = mesh.side_barycentre(s);
        let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", q[0], q[1], q[2]);
    }
    let ne = mesh.num_elements();
    let per = dim + 1;
    let _ = writeln!(out, "CELLS {} {}", ne, ne * (per + 1));
    for k in 0..ne {
        let sides = mesh.element_sides(k);
        let ids: Vec<String> = sides.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{} {}", sides.len(), ids.join(" "));
    }
    let _ = writeln!(out, "CELL_TYPES {ne}");
    let cell_type = if dim == 2 { 5 } else { 10 };
    for _ in 0..ne {
        let _ = writeln!(out, "{cell_type}");
    }
    let _ = writeln!(out, "POINT_DATA {}", mesh.num_sides());
    let s_g: Vec<f64> = state.s_l.iter().map(|s| 1.0 - s).collect();
    for (name, values) in [("p_l", &state.p_l), ("p_g", &state.p_g), ("s_l", &state.s_l), ("s_g", &s_g)] {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values.iter() {
            let _ = writeln!(out, "{v:.16e}");
        }
    }
    out
}

/// `D,x,y[,z],p_l,p_g,s_l` with 17 significant digits, enough to round-trip.
pub fn write_csv(mesh: &PrimalMesh, state: &State) -> String {
    let dim = mesh.dim();
    let mut out = String::from(if dim == 3 { "D,x,y,z,p_l,p_g,s_l\n" } else { "D,x,y,p_l,p_g,s_l\n" });
    for d in 0..state.len() {
        let q = mesh.side_barycentre(d);
        let _ = write!(out, "{d}");
        for c in q.iter().take(dim) {
            let _ = write!(out, ",{c:.16e}");
        }
        let _ = writeln!(out, ",{:.16e},{:.16e},{:.16e}", state.p_l[d], state.p_g[d], state.s_l[d]);
    }
    out
}

/// Reads the pressure and saturation columns written by [`write_csv`].
pub fn read_csv(text: &str) -> Result<State, FieldReadError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(FieldReadError::Empty)?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| FieldReadError::Parse { line: 1, message: format!("missing column `{name}`") })
    };
    let (id, pl, pg, sl) = (col("D")?, col("p_l")?, col("p_g")?, col("s_l")?);
    let mut state = State { p_l: Vec::new(), p_g: Vec::new(), s_l: Vec::new(), step: 0, time: 0.0 };
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(FieldReadError::Parse {
                line: i + 1,
                message: format!("expected {} columns, got {}", columns.len(), fields.len()),
            });
        }
        let number = |c: usize| {
            fields[c]
                .parse::<f64>()
                .map_err(|e| FieldReadError::Parse { line: i + 1, message: format!("`{}`: {e}", fields[c]) })
        };
        let d: usize = fields[id]
            .parse()
            .map_err(|e| FieldReadError::Parse { line: i + 1, message: format!("`{}`: {e}", fields[id]) })?;
        if d != state.p_l.len() {
            return Err(FieldReadError::Parse { line: i + 1, message: format!("expected D = {}, got {d}", state.p_l.len()) });
        }
        state.p_l.push(number(pl)?);
        state.p_g.push(number(pg)?);
        state.s_l.push(number(sl)?);
    }
    Ok(state)
}
