//! The `simulate`, `check-mesh` and `convergence` commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use super::config::{self, ConfigError, InitialGas, RunConfig};
use super::output::{write_csv, write_vtk};
use crate::assembly::{assemble, transmissibility_signs, AssemblyError};
use crate::diagnostics::{
    check_max_principle, write_key_values, write_reports_csv, RefinementError, RefinementTable, LEMMA_NAMES,
};
use crate::mesh::{load_primal, BoundaryTag, DualMesh, MeshError, MeshFormat};
use crate::physics::{Tensor, TensorField};
use crate::scheme::{Scheme, SchemeError, Sources, State};
use crate::solver::{Solver, SolverError, TimestepReport, Trajectory};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("setup failed: {0}")]
    Setup(#[from] SchemeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Refinement(#[from] RefinementError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CommandError {
    /// 2 for numerical failures during a solve, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Solver(_) | CommandError::Refinement(RefinementError::Linear(_)) => 2,
            _ => 1,
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CommandError> {
    fs::write(path, contents).map_err(|source| CommandError::Io { path: path.display().to_string(), source })
}

fn create_dir(path: &Path) -> Result<(), CommandError> {
    fs::create_dir_all(path).map_err(|source| CommandError::Io { path: path.display().to_string(), source })
}

/// Scheme, initial state and sources described by a run configuration.
pub struct Problem {
    pub scheme: Scheme,
    pub initial: State,
    pub sources: Sources,
}

impl Problem {
    pub fn from_config(config: &RunConfig) -> Result<Self, CommandError> {
        let mesh = config.build_mesh()?;
        let model = config.model.build(mesh.dim())?;
        let scheme = Scheme::new(mesh, model)?;
        let p_l = &config.initial_p_l;
        let initial = match &config.initial_gas {
            InitialGas::Pressure(p_g) => scheme.project_initial(|x| p_l.eval_or_nan(x, 0.0), |x| p_g.eval_or_nan(x, 0.0))?,
            InitialGas::Saturation(s_l) => {
                let model = scheme.model().clone();
                scheme.project_initial(
                    |x| p_l.eval_or_nan(x, 0.0),
                    |x| p_l.eval_or_nan(x, 0.0) + model.capillary_pressure(s_l.eval_or_nan(x, 0.0).clamp(0.0, 1.0)),
                )?
            }
        };
        let expr_fn = |e: &super::expr::Expression| {
            let e = e.clone();
            Arc::new(move |x: &crate::mesh::Point, t: f64| e.eval_or_nan(x, t)) as crate::scheme::SpaceTimeFn
        };
        let sources = Sources {
            production: expr_fn(&config.production),
            injection: expr_fn(&config.injection),
            injected_liquid_saturation: expr_fn(&config.injected_liquid_saturation),
        };
        Ok(Problem { scheme, initial, sources })
    }
}

#[derive(Debug)]
pub struct SimulationSummary {
    pub output_dir: PathBuf,
    pub trajectory: Trajectory,
}

/// Runs a simulation and writes fields every `cadence` steps, `reports.csv`,
/// `summary.txt` and `last_state.csv` into the output directory. On solver
/// failure the reports of the accepted steps and the last accepted state are
/// still written.
pub fn simulate(config_path: impl AsRef<Path>) -> Result<SimulationSummary, CommandError> {
    let config = RunConfig::load(config_path)?;
    let problem = Problem::from_config(&config)?;
    let out = config.output.directory.clone();
    create_dir(&out)?;
    let solver = Solver::new(&problem.scheme, config.solver.clone()).map_err(CommandError::Solver)?;

    let mesh = problem.scheme.mesh();
    let mut reports: Vec<TimestepReport> = Vec::new();
    let mut last: Option<State> = None;
    let mut write_error: Option<CommandError> = None;
    let result = solver.run_with(problem.initial.clone(), config.t_final, config.dt, &problem.sources, |state, report| {
        if let Some(r) = report {
            reports.push(r.clone());
        }
        last = Some(state.clone());
        if write_error.is_some() || state.step % config.output.cadence != 0 {
            return;
        }
        let mut emit = |ext: &str, body: String| {
            if write_error.is_none() {
                if let Err(e) = write_file(&out.join(format!("state_{:05}.{ext}", state.step)), &body) {
                    write_error = Some(e);
                }
            }
        };
        if config.output.vtk {
            emit("vtk", write_vtk(mesh, state));
        }
        if config.output.csv {
            emit("csv", write_csv(mesh, state));
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    write_file(&out.join("reports.csv"), &write_reports_csv(&reports))?;
    if let Some(state) = &last {
        write_file(&out.join("last_state.csv"), &write_csv(mesh, state))?;
    }
    match result {
        Ok(trajectory) => {
            write_file(&out.join("summary.txt"), &summary(&problem.scheme, &trajectory, None))?;
            Ok(SimulationSummary { output_dir: out, trajectory })
        }
        Err(e) => {
            let partial = Trajectory { states: last.into_iter().collect(), reports, energy: Default::default() };
            write_file(&out.join("summary.txt"), &summary(&problem.scheme, &partial, Some(&e)))?;
            Err(e.into())
        }
    }
}

fn summary(scheme: &Scheme, trajectory: &Trajectory, failure: Option<&SolverError>) -> String {
    let mut kv: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: String| kv.push((k.to_string(), v));
    push("status", failure.map_or("ok".to_string(), |e| format!("failed: {e}")));
    push("dual_volumes", scheme.dual().len().to_string());
    push("unknowns", scheme.num_unknowns().to_string());
    push("accepted_steps", trajectory.reports.len().to_string());
    if let Some(last) = trajectory.states.last() {
        push("final_time", format!("{:.16e}", last.time));
        let mass = scheme.total_mass(last);
        push("final_mass_liquid", format!("{:.16e}", mass[0]));
        push("final_mass_gas", format!("{:.16e}", mass[1]));
    }
    let r = &trajectory.reports;
    push("newton_iterations", r.iter().map(|r| r.iterations).sum::<usize>().to_string());
    push("max_substeps", r.iter().map(|r| r.substeps).max().unwrap_or(0).to_string());
    push("line_search_activations", r.iter().map(|r| r.line_search_activations).sum::<usize>().to_string());
    push("projection_flagged_steps", r.iter().filter(|r| r.projection_flagged).count().to_string());
    let mp_fail = r.iter().filter(|r| !r.max_principle.passed).count();
    push("max_principle", if mp_fail == 0 { "pass".into() } else { format!("fail ({mp_fail} steps)") });
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &trajectory.states {
        let v = check_max_principle(s);
        lo = lo.min(v.min[0]);
        hi = hi.max(v.max[0]);
    }
    for rep in r {
        lo = lo.min(rep.max_principle.min[0]);
        hi = hi.max(rep.max_principle.max[0]);
    }
    push("s_l_min", format!("{lo:.16e}"));
    push("s_l_max", format!("{hi:.16e}"));
    if failure.is_none() {
        let e = &trajectory.energy;
        let names = ["e_p_liquid", "e_p_gas", "e_global", "e_b", "e_pbar", "e_ptilde", "e_b_weighted"];
        for (name, v) in names.iter().zip(e.values()) {
            push(name, format!("{v:.16e}"));
        }
        push("b_bound", if e.b_bound_holds() { "pass".into() } else { "fail".into() });
        for (i, name) in LEMMA_NAMES.iter().enumerate() {
            push(&format!("lemma_{name}_worst_margin"), format!("{:.6e}", e.lemma.margins[i]));
        }
        push("lemma", if e.lemma.passed() { "pass".into() } else { "fail".into() });
    }
    write_key_values(&kv)
}

/// Mesh regularity, dual-volume statistics and transmissibility signs.
pub fn check_mesh(path: impl AsRef<Path>, lambda: Option<&[f64]>) -> Result<String, CommandError> {
    let mesh = load_primal(path, MeshFormat::Text)?;
    let dim = mesh.dim();
    let tensor = match lambda {
        None => Tensor::isotropic(dim, 1.0),
        Some([c]) => Tensor::isotropic(dim, *c),
        Some(e) if e.len() == dim => Tensor::diagonal(dim, e),
        Some(e) if e.len() == dim * dim => Tensor::new(dim, e),
        Some(e) => {
            return Err(CommandError::Usage(format!(
                "--lambda takes 1, {dim} or {} values for a {dim}-dimensional mesh, got {}",
                dim * dim,
                e.len()
            )))
        }
    };
    let dual = DualMesh::build(&mesh);
    let stiffness = assemble(&mesh, &dual, &TensorField::Constant(tensor))?;
    let reg = mesh.regularity();
    let signs = transmissibility_signs(&stiffness);
    let measures: Vec<f64> = dual.volumes().iter().map(|v| v.measure).collect();
    let count = |tag: BoundaryTag| (0..mesh.num_sides()).filter(|&s| mesh.boundary_tag(s) == Some(tag)).count();

    let mut kv: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: String| kv.push((k.to_string(), v));
    push("dim", dim.to_string());
    push("vertices", mesh.num_vertices().to_string());
    push("elements", mesh.num_elements().to_string());
    push("sides", mesh.num_sides().to_string());
    push("dirichlet_sides", count(BoundaryTag::Dirichlet).to_string());
    push("impervious_sides", count(BoundaryTag::Impervious).to_string());
    push("kappa", format!("{:.6e}", reg.kappa));
    push("h", format!("{:.6e}", reg.h));
    push("worst_element", reg.worst_element.to_string());
    push("dual_volume_min", format!("{:.6e}", measures.iter().copied().fold(f64::INFINITY, f64::min)));
    push("dual_volume_max", format!("{:.6e}", measures.iter().copied().fold(0.0, f64::max)));
    push("dual_volume_total", format!("{:.16e}", dual.total_measure()));
    push("c_lambda", format!("{:.6e}", stiffness.c_lambda()));
    push("neighbour_pairs", signs.pairs.to_string());
    push("negative_transmissibilities", signs.negative.len().to_string());
    push("nonnegative_fraction", format!("{:.6}", signs.nonnegative_fraction));
    for (d, e, m) in signs.negative.iter().take(20) {
        push(&format!("negative_{d}_{e}"), format!("{m:.6e}"));
    }
    Ok(write_key_values(&kv))
}

/// Runs the manufactured-solution study and writes `convergence.csv`.
pub fn convergence(config_path: impl AsRef<Path>, levels: Option<usize>) -> Result<(RefinementTable, PathBuf), CommandError> {
    let (conv, output) = config::load_convergence(config_path)?;
    let table = crate::diagnostics::refinement_study(conv.problem, conv.base_n, levels.unwrap_or(conv.levels))?;
    create_dir(&output.directory)?;
    let path = output.directory.join("convergence.csv");
    write_file(&path, &table.to_csv())?;
    Ok((table, path))
}
