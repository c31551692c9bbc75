//! C ABI over the `porflow` simulator.
//!
//! Every function returns a [`PorflowStatus`]; outputs are written through
//! pointer arguments only on success. The message of the most recent failure
//! on the calling thread is available from [`porflow_last_error`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use porflow::assembly::{assemble, StiffnessMatrix};
use porflow::io::commands::Problem;
use porflow::io::config::RunConfig;
use porflow::mesh::{load_primal, DualMesh, MeshFormat, PrimalMesh};
use porflow::physics::{Tensor, TensorField};
use porflow::scheme::{Scheme, Sources, State};
use porflow::solver::{Solver, SolverConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PorflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Mesh = 4,
    Solver = 5,
    BufferTooSmall = 6,
    Finished = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PorflowStatus, String);

fn fail<T>(status: PorflowStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, message.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PorflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PorflowStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            PorflowStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, Failure> {
    if path.is_null() {
        return fail(PorflowStatus::NullPointer, "path is null");
    }
    CStr::from_ptr(path).to_str().or_else(|_| fail(PorflowStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, Failure> {
    h.as_ref().map_or_else(|| fail(PorflowStatus::NullPointer, format!("{what} handle is null")), Ok)
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return fail(PorflowStatus::NullPointer, "output pointer is null");
    }
    out.write(value);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (nul-terminated,
/// truncated to `len`) and returns the full message length excluding the
/// terminator, or 0 when no error has occurred.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn porflow_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Primal mesh with its dual.
pub struct PorflowMesh {
    mesh: PrimalMesh,
    dual: DualMesh,
}

/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn porflow_mesh_load(path: *const c_char, out: *mut *mut PorflowMesh) -> PorflowStatus {
    guard(|| {
        let path = path_arg(path)?;
        let mesh = load_primal(path, MeshFormat::Text).or_else(|e| fail(PorflowStatus::Mesh, e.to_string()))?;
        let dual = DualMesh::build(&mesh);
        write_out(out, Box::into_raw(Box::new(PorflowMesh { mesh, dual })))
    })
}

/// # Safety
/// `mesh` must be null or a handle from [`porflow_mesh_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn porflow_mesh_free(mesh: *mut PorflowMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Number of sides, which is also the number of dual volumes.
///
/// # Safety
/// `mesh` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn porflow_mesh_num_sides(mesh: *const PorflowMesh, out: *mut usize) -> PorflowStatus {
    guard(|| write_out(out, handle(mesh, "mesh")?.mesh.num_sides()))
}

/// Regularity `kappa` and mesh size `h`.
///
/// # Safety
/// `mesh` must be a live handle; `kappa` and `h` writable.
#[no_mangle]
pub unsafe extern "C" fn porflow_mesh_regularity(mesh: *const PorflowMesh, kappa: *mut f64, h: *mut f64) -> PorflowStatus {
    guard(|| {
        let r = handle(mesh, "mesh")?.mesh.regularity();
        if kappa.is_null() || h.is_null() {
            return fail(PorflowStatus::NullPointer, "output pointer is null");
        }
        write_out(kappa, r.kappa)?;
        write_out(h, r.h)
    })
}

/// Assembled stiffness matrix for a constant permeability.
pub struct PorflowStiffness {
    matrix: StiffnessMatrix,
}

/// Assembles the stiffness matrix for a constant permeability given as 1
/// (isotropic), `d` (diagonal) or `d*d` (row-major) entries.
///
/// # Safety
/// `mesh` must be a live handle, `lambda` point to `n` readable values and
/// `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn porflow_stiffness_assemble(
    mesh: *const PorflowMesh,
    lambda: *const f64,
    n: usize,
    out: *mut *mut PorflowStiffness,
) -> PorflowStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        if lambda.is_null() {
            return fail(PorflowStatus::NullPointer, "lambda is null");
        }
        let entries = std::slice::from_raw_parts(lambda, n);
        let dim = m.mesh.dim();
        let tensor = match n {
            1 => Tensor::isotropic(dim, entries[0]),
            _ if n == dim => Tensor::diagonal(dim, entries),
            _ if n == dim * dim => Tensor::new(dim, entries),
            _ => return fail(PorflowStatus::InvalidArgument, format!("lambda needs 1, {dim} or {} entries, got {n}", dim * dim)),
        };
        let matrix = assemble(&m.mesh, &m.dual, &TensorField::Constant(tensor))
            .or_else(|e| fail(PorflowStatus::InvalidArgument, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(PorflowStiffness { matrix })))
    })
}

/// # Safety
/// `stiffness` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn porflow_stiffness_free(stiffness: *mut PorflowStiffness) {
    if !stiffness.is_null() {
        drop(Box::from_raw(stiffness));
    }
}

/// Inner-product entry `A[d][e]`; the flux transmissibility is its negation
/// for `d != e`. Entries outside the sparsity pattern are 0.
///
/// # Safety
/// `stiffness` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn porflow_stiffness_entry(stiffness: *const PorflowStiffness, d: usize, e: usize, out: *mut f64) -> PorflowStatus {
    guard(|| {
        let s = handle(stiffness, "stiffness")?;
        if d >= s.matrix.len() || e >= s.matrix.len() {
            return fail(PorflowStatus::InvalidArgument, format!("index ({d}, {e}) out of range {}", s.matrix.len()));
        }
        write_out(out, s.matrix.get(d, e))
    })
}

/// A simulation configured from an INI file, advanced step by step.
pub struct PorflowSimulation {
    scheme: Scheme,
    sources: Sources,
    solver: SolverConfig,
    state: State,
    dt: f64,
    steps: usize,
}

/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn porflow_simulation_from_config(path: *const c_char, out: *mut *mut PorflowSimulation) -> PorflowStatus {
    guard(|| {
        let config = RunConfig::load(path_arg(path)?).or_else(|e| fail(PorflowStatus::Config, e.to_string()))?;
        let problem = Problem::from_config(&config).or_else(|e| fail(PorflowStatus::Config, e.to_string()))?;
        let ratio = config.t_final / config.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return fail(PorflowStatus::Config, "t_final is not an integer multiple of dt");
        }
        let sim = PorflowSimulation {
            scheme: problem.scheme,
            sources: problem.sources,
            solver: config.solver,
            state: problem.initial,
            dt: config.dt,
            steps: ratio.round() as usize,
        };
        write_out(out, Box::into_raw(Box::new(sim)))
    })
}

/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn porflow_simulation_free(sim: *mut PorflowSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

fn advance(sim: &mut PorflowSimulation) -> Result<(), Failure> {
    if sim.state.step >= sim.steps {
        return fail(PorflowStatus::Finished, "final time reached");
    }
    let solver = Solver::new(&sim.scheme, sim.solver.clone()).or_else(|e| fail(PorflowStatus::Config, e.to_string()))?;
    let (mut next, _) =
        solver.solve_timestep(&sim.state, sim.dt, &sim.sources).or_else(|e| fail(PorflowStatus::Solver, e.to_string()))?;
    next.time = next.step as f64 * sim.dt;
    sim.state = next;
    Ok(())
}

/// Advances one timestep. Returns `Finished` once the final time is reached;
/// on `Solver` failure the state is left unchanged.
///
/// # Safety
/// `sim` must be a live handle not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn porflow_simulation_step(sim: *mut PorflowSimulation) -> PorflowStatus {
    guard(|| match sim.as_mut() {
        Some(s) => advance(s),
        None => fail(PorflowStatus::NullPointer, "simulation handle is null"),
    })
}

/// Advances to the final time.
///
/// # Safety
/// `sim` must be a live handle not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn porflow_simulation_run(sim: *mut PorflowSimulation) -> PorflowStatus {
    guard(|| {
        let Some(s) = sim.as_mut() else { return fail(PorflowStatus::NullPointer, "simulation handle is null") };
        while s.state.step < s.steps {
            advance(s)?;
        }
        Ok(())
    })
}

/// Current step index and time.
///
/// # Safety
/// `sim` must be a live handle; `step` and `time` writable.
#[no_mangle]
pub unsafe extern "C" fn porflow_simulation_progress(sim: *const PorflowSimulation, step: *mut usize, time: *mut f64) -> PorflowStatus {
    guard(|| {
        let s = handle(sim, "simulation")?;
        if step.is_null() || time.is_null() {
            return fail(PorflowStatus::NullPointer, "output pointer is null");
        }
        write_out(step, s.state.step)?;
        write_out(time, s.state.time)
    })
}

/// Number of dual volumes, the length of each state array.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn porflow_simulation_len(sim: *const PorflowSimulation, out: *mut usize) -> PorflowStatus {
    guard(|| write_out(out, handle(sim, "simulation")?.state.len()))
}

/// Copies the current `p_l`, `p_g` and `s_l` into caller buffers of length
/// `len`. Any of the three pointers may be null to skip that field.
///
/// # Safety
/// `sim` must be a live handle; non-null buffers must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn porflow_simulation_copy_state(
    sim: *const PorflowSimulation,
    p_l: *mut f64,
    p_g: *mut f64,
    s_l: *mut f64,
    len: usize,
) -> PorflowStatus {
    guard(|| {
        let s = handle(sim, "simulation")?;
        let n = s.state.len();
        if len < n {
            return fail(PorflowStatus::BufferTooSmall, format!("need {n} values, buffer holds {len}"));
        }
        for (dst, src) in [(p_l, &s.state.p_l), (p_g, &s.state.p_g), (s_l, &s.state.s_l)] {
            if !dst.is_null() {
                ptr::copy_nonoverlapping(src.as_ptr(), dst, n);
            }
        }
        Ok(())
    })
}

/// Total mass per phase `[liquid, gas]`.
///
/// # Safety
/// `sim` must be a live handle and `out` point to 2 writable values.
#[no_mangle]
pub unsafe extern "C" fn porflow_simulation_mass(sim: *const PorflowSimulation, out: *mut f64) -> PorflowStatus {
    guard(|| {
        let s = handle(sim, "simulation")?;
        if out.is_null() {
            return fail(PorflowStatus::NullPointer, "output pointer is null");
        }
        let m = s.scheme.total_mass(&s.state);
        ptr::copy_nonoverlapping(m.as_ptr(), out, 2);
        Ok(())
    })
}
