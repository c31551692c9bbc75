use std::fmt::Write;

use super::LEMMA_NAMES;
use crate::solver::TimestepReport;

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `key = value` lines, one per field.
pub fn write_key_values(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// One CSV row per accepted timestep.
pub fn write_reports_csv(reports: &[TimestepReport]) -> String {
    let mut out = String::from(
        "step,time,dt,substeps,iterations,residual_l,residual_g,line_search,projection,projection_flagged,\
         max_principle,s_min,s_max,worst_dual,e_p_l,e_p_g,e_global,e_b,e_pbar,e_ptilde",
    );
    for name in LEMMA_NAMES {
        let _ = write!(out, ",margin_{name}");
    }
    out.push('\n');
    for r in reports {
        let e = &r.energy;
        let _ = write!(
            out,
            "{},{:.16e},{:.16e},{},{},{:.16e},{:.16e},{},{:.16e},{},{},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.step,
            r.time,
            r.dt,
            r.substeps,
            r.iterations,
            r.residual_norms[0],
            r.residual_norms[1],
            r.line_search_activations,
            r.projection,
            r.projection_flagged,
            if r.max_principle.passed { "pass" } else { "fail" },
            r.max_principle.min[0],
            r.max_principle.max[0],
            opt(r.max_principle.worst.map(|w| w.dual)),
            e.e_p[0],
            e.e_p[1],
            e.e_global,
            e.e_b,
            e.e_pbar,
            e.e_ptilde,
        );
        for m in r.lemma.margins {
            let _ = write!(out, ",{m:.16e}");
        }
        out.push('\n');
    }
    out
}
