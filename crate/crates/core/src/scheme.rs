//! Fully implicit combined scheme: discrete state, sources, upwind fluxes
//! and the residual of both phase equations on every free dual volume.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::assembly::{assemble, assemble_identity, AssemblyError, StiffnessMatrix};
use crate::mesh::geometry::{dot, sub};
use crate::mesh::{DualMesh, Point, PrimalMesh};
use crate::physics::{DerivedFunctions, FluidModel, Phase, PhysicsError, DEFAULT_TABLE_RESOLUTION};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("model dimension {model} does not match mesh dimension {mesh}")]
    DimensionMismatch { mesh: usize, model: usize },
    #[error("porosity {value} on dual volume {dual} is not positive")]
    Porosity { dual: usize, value: f64 },
    #[error("invalid source on dual volume {dual}: {message}")]
    Source { dual: usize, message: String },
    #[error("closure failed on dual volume {dual}: {source}")]
    Closure { dual: usize, source: PhysicsError },
}

/// Discrete state at one time level. Vectors are indexed by dual volume and
/// include the Dirichlet volumes, which hold `p_l = p_g = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub p_l: Vec<f64>,
    pub p_g: Vec<f64>,
    pub s_l: Vec<f64>,
    pub step: usize,
    pub time: f64,
}

impl State {
    pub fn len(&self) -> usize {
        self.p_l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_l.is_empty()
    }

    pub fn pressure(&self, phase: Phase) -> &[f64] {
        match phase {
            Phase::Liquid => &self.p_l,
            Phase::Gas => &self.p_g,
        }
    }

    pub fn saturation(&self, phase: Phase, d: usize) -> f64 {
        match phase {
            Phase::Liquid => self.s_l[d],
            Phase::Gas => 1.0 - self.s_l[d],
        }
    }
}

pub type SpaceTimeFn = Arc<dyn Fn(&Point, f64) -> f64 + Send + Sync>;

/// Production rate `f_P`, injection rate `f_I` and injected liquid
/// saturation `s^I_l` as functions of space and time.
#[derive(Clone)]
pub struct Sources {
    pub production: SpaceTimeFn,
    pub injection: SpaceTimeFn,
    pub injected_liquid_saturation: SpaceTimeFn,
}

impl fmt::Debug for Sources {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Sources")
    }
}

impl Default for Sources {
    fn default() -> Self {
        Sources::none()
    }
}

impl Sources {
    pub fn none() -> Self {
        Sources {
            production: Arc::new(|_, _| 0.0),
            injection: Arc::new(|_, _| 0.0),
            injected_liquid_saturation: Arc::new(|_, _| 0.0),
        }
    }

    /// Cell-time averages on `[t0, t1]`: midpoint in time, piece centroids
    /// in space.
    pub fn evaluate(&self, scheme: &Scheme, t0: f64, t1: f64) -> Result<SourceField, SchemeError> {
        let t = 0.5 * (t0 + t1);
        let n = scheme.dual.len();
        let mut field = SourceField::zeros(n);
        for d in 0..n {
            let measure = scheme.dual.volume(d).measure;
            let avg = |f: &SpaceTimeFn| {
                scheme.dual.pieces(d).iter().map(|p| p.measure * f(&p.centroid, t)).sum::<f64>() / measure
            };
            field.production[d] = avg(&self.production);
            field.injection[d] = avg(&self.injection);
            field.injected_liquid_saturation[d] = avg(&self.injected_liquid_saturation);
        }
        field.validate()?;
        Ok(field)
    }
}

/// Per-dual-volume source averages for one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceField {
    pub production: Vec<f64>,
    pub injection: Vec<f64>,
    pub injected_liquid_saturation: Vec<f64>,
}

impl SourceField {
    pub fn zeros(n: usize) -> Self {
        SourceField { production: vec![0.0; n], injection: vec![0.0; n], injected_liquid_saturation: vec![0.0; n] }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        for d in 0..self.production.len() {
            let (fp, fi, si) = (self.production[d], self.injection[d], self.injected_liquid_saturation[d]);
            if !(fp >= 0.0) || !(fi >= 0.0) {
                return Err(SchemeError::Source { dual: d, message: format!("rates must be nonnegative (f_P = {fp}, f_I = {fi})") });
            }
            if !(0.0..=1.0).contains(&si) {
                return Err(SchemeError::Source { dual: d, message: format!("injected saturation {si} outside [0, 1]") });
            }
        }
        Ok(())
    }

    pub fn injected_saturation(&self, phase: Phase, d: usize) -> f64 {
        match phase {
            Phase::Liquid => self.injected_liquid_saturation[d],
            Phase::Gas => 1.0 - self.injected_liquid_saturation[d],
        }
    }
}

/// Returns `s_d` when `coupling * (p_E - p_D) <= 0`, else `s_e`.
pub fn upwind_saturation(s_d: f64, s_e: f64, coupling_times_dp: f64) -> f64 {
    if coupling_times_dp <= 0.0 {
        s_d
    } else {
        s_e
    }
}

/// Flux of one phase leaving `D` towards `E`, with phase saturations
/// `s_d`, `s_e` and `gravity = g · η_{D,E}`, where
/// `η_{D,E} = 𝕄_{D,E} (Q_E - Q_D)`. Swapping `D` and `E` (and
/// negating `gravity`) negates the result.
pub fn flux(model: &FluidModel, phase: Phase, s_d: f64, s_e: f64, p_d: f64, p_e: f64, coupling: f64, gravity: f64) -> f64 {
    let rho = model.interface_density(p_d, p_e, phase);
    let s_up = upwind_saturation(s_d, s_e, coupling * (p_e - p_d));
    let diffusive = -model.mobility(phase, s_up) * coupling * (p_e - p_d);
    let gravitational = model.mobility(phase, s_d) * gravity.max(0.0) - model.mobility(phase, s_e) * (-gravity).max(0.0);
    rho * (diffusive + rho * gravitational)
}

/// Upwind choices per dual face and phase; `true` selects the face's `d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Upwind {
    take_d: Vec<[bool; 2]>,
}

/// Triplets `(row, column, value)` in unknown numbering.
pub type Triplets = Vec<(usize, usize, f64)>;

/// Discretisation context: meshes, stiffness couplings, coefficients and the
/// numbering of the unknowns `(p_l, p_g)` on free (non-Dirichlet) volumes.
#[derive(Debug, Clone)]
pub struct Scheme {
    mesh: PrimalMesh,
    dual: DualMesh,
    derived: DerivedFunctions,
    stiffness: StiffnessMatrix,
    identity: StiffnessMatrix,
    porosity: Vec<f64>,
    free_index: Vec<Option<usize>>,
    free: Vec<usize>,
    face_coupling: Vec<f64>,
    face_gravity: Vec<f64>,
}

impl Scheme {
    pub fn new(mesh: PrimalMesh, model: FluidModel) -> Result<Self, SchemeError> {
        Self::with_resolution(mesh, model, DEFAULT_TABLE_RESOLUTION)
    }

    pub fn with_resolution(mesh: PrimalMesh, model: FluidModel, resolution: usize) -> Result<Self, SchemeError> {
        if model.dim != mesh.dim() {
            return Err(SchemeError::DimensionMismatch { mesh: mesh.dim(), model: model.dim });
        }
        let dual = DualMesh::build(&mesh);
        let stiffness = assemble(&mesh, &dual, &model.permeability)?;
        let identity = assemble_identity(&mesh, &dual);
        let mut porosity = Vec::with_capacity(dual.len());
        for d in 0..dual.len() {
            let v = dual.volume(d);
            let phi = dual.pieces(d).iter().map(|p| p.measure * model.porosity.at(&p.centroid)).sum::<f64>() / v.measure;
            if !(phi > 0.0) {
                return Err(SchemeError::Porosity { dual: d, value: phi });
            }
            porosity.push(phi);
        }
        let mut free_index = vec![None; dual.len()];
        let mut free = Vec::new();
        for d in 0..dual.len() {
            if !dual.volume(d).is_dirichlet() {
                free_index[d] = Some(free.len());
                free.push(d);
            }
        }
        let face_coupling: Vec<f64> = dual.faces().iter().map(|f| stiffness.coupling(f.d, f.e)).collect();
        // g · η_{D,E} with η_{D,E} = 𝕄_{D,E} (Q_E - Q_D)
        let face_gravity = dual
            .faces()
            .iter()
            .zip(&face_coupling)
            .map(|(f, m)| m * dot(&model.gravity, &sub(&dual.volume(f.e).barycentre, &dual.volume(f.d).barycentre)))
            .collect();
        Ok(Scheme {
            derived: DerivedFunctions::new(model, resolution),
            mesh,
            dual,
            stiffness,
            identity,
            porosity,
            free_index,
            free,
            face_coupling,
            face_gravity,
        })
    }

    pub fn mesh(&self) -> &PrimalMesh {
        &self.mesh
    }

    pub fn dual(&self) -> &DualMesh {
        &self.dual
    }

    pub fn model(&self) -> &FluidModel {
        self.derived.model()
    }

    pub fn derived(&self) -> &DerivedFunctions {
        &self.derived
    }

    pub fn stiffness(&self) -> &StiffnessMatrix {
        &self.stiffness
    }

    /// Stiffness matrix with `Λ = I`.
    pub fn identity_stiffness(&self) -> &StiffnessMatrix {
        &self.identity
    }

    pub fn porosity(&self, d: usize) -> f64 {
        self.porosity[d]
    }

    /// `𝕄_{D,E}` of dual face `f`.
    pub fn face_coupling(&self, f: usize) -> f64 {
        self.face_coupling[f]
    }

    /// `g · η_{D,E}` of dual face `f`.
    pub fn face_gravity(&self, f: usize) -> f64 {
        self.face_gravity[f]
    }

    /// Dual volumes carrying unknowns, in unknown order.
    pub fn free_volumes(&self) -> &[usize] {
        &self.free
    }

    pub fn free_index(&self, d: usize) -> Option<usize> {
        self.free_index[d]
    }

    pub fn num_unknowns(&self) -> usize {
        2 * self.free.len()
    }

    /// Unknown vector `[p_l(D_0), p_g(D_0), p_l(D_1), ...]` of a state.
    pub fn unknowns(&self, state: &State) -> Vec<f64> {
        self.free.iter().flat_map(|&d| [state.p_l[d], state.p_g[d]]).collect()
    }

    /// Full pressure vectors from an unknown vector; Dirichlet entries are 0.
    pub fn pressures(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut p_l = vec![0.0; self.dual.len()];
        let mut p_g = vec![0.0; self.dual.len()];
        for (i, &d) in self.free.iter().enumerate() {
            p_l[d] = x[2 * i];
            p_g[d] = x[2 * i + 1];
        }
        (p_l, p_g)
    }

    /// Cell averages of the initial pressures followed by capillary closure.
    pub fn project_initial(&self, p_l: impl Fn(&Point) -> f64, p_g: impl Fn(&Point) -> f64) -> Result<State, SchemeError> {
        let n = self.dual.len();
        let average = |f: &dyn Fn(&Point) -> f64, d: usize| {
            self.dual.pieces(d).iter().map(|p| p.measure * f(&p.centroid)).sum::<f64>() / self.dual.volume(d).measure
        };
        let mut state = State { p_l: vec![0.0; n], p_g: vec![0.0; n], s_l: vec![1.0; n], step: 0, time: 0.0 };
        for &d in &self.free {
            state.p_l[d] = average(&p_l, d);
            state.p_g[d] = average(&p_g, d);
        }
        self.close_capillary(&mut state)?;
        Ok(state)
    }

    /// Sets `s_l = p_c^{-1}(p_g - p_l)` on every dual volume.
    pub fn close_capillary(&self, state: &mut State) -> Result<(), SchemeError> {
        for d in 0..state.len() {
            state.s_l[d] = self
                .model()
                .capillary_inverse(state.p_g[d] - state.p_l[d])
                .map_err(|source| SchemeError::Closure { dual: d, source })?;
        }
        Ok(())
    }

    /// State with the given pressures, closed.
    pub fn state_from_pressures(&self, p_l: Vec<f64>, p_g: Vec<f64>, step: usize, time: f64) -> Result<State, SchemeError> {
        let mut state = State { s_l: vec![0.0; p_l.len()], p_l, p_g, step, time };
        self.close_capillary(&mut state)?;
        Ok(state)
    }

    /// `Σ_D |D| φ_D ρ_α(p_{α,D}) s_{α,D}` per phase.
    pub fn total_mass(&self, state: &State) -> [f64; 2] {
        let model = self.model();
        Phase::BOTH.map(|phase| {
            (0..self.dual.len())
                .map(|d| {
                    self.dual.volume(d).measure
                        * self.porosity[d]
                        * model.density(phase, state.pressure(phase)[d])
                        * state.saturation(phase, d)
                })
                .sum()
        })
    }

    /// Liquid saturations `p_c^{-1}(p_g - p_l)` with the linear continuation
    /// outside the capillary range, and their derivatives with respect to
    /// `p_g - p_l`.
    fn extended_saturations(&self, p_l: &[f64], p_g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let cap = &self.model().capillary;
        p_l.iter()
            .zip(p_g)
            .map(|(l, g)| {
                let s = cap.inverse_extended(g - l);
                (s, 1.0 / cap.derivative(s.clamp(0.0, 1.0)))
            })
            .unzip()
    }

    /// Upwind choices from the pressures, per face and phase.
    pub fn upwind_directions(&self, p_l: &[f64], p_g: &[f64]) -> Upwind {
        let take_d = self
            .dual
            .faces()
            .iter()
            .zip(&self.face_coupling)
            .map(|(f, m)| [m * (p_l[f.e] - p_l[f.d]) <= 0.0, m * (p_g[f.e] - p_g[f.d]) <= 0.0])
            .collect();
        Upwind { take_d }
    }

    /// Residual of the discrete phase equations at the pressures `(p_l, p_g)`
    /// (full vectors), with upwind choices taken from those pressures.
    /// Entry `2 i + α` belongs to free volume `i` and phase `α`.
    pub fn residual(&self, p_l: &[f64], p_g: &[f64], prev: &State, dt: f64, sources: &SourceField) -> Vec<f64> {
        let upwind = self.upwind_directions(p_l, p_g);
        self.evaluate(p_l, p_g, prev, dt, sources, &upwind, None)
    }

    /// Residual with frozen upwind choices; appends the analytic Jacobian
    /// with respect to the unknowns to `jacobian` when given.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        &self,
        p_l: &[f64],
        p_g: &[f64],
        prev: &State,
        dt: f64,
        sources: &SourceField,
        upwind: &Upwind,
        mut jacobian: Option<&mut Triplets>,
    ) -> Vec<f64> {
        let model = self.model();
        let (s_l, ds) = self.extended_saturations(p_l, p_g);
        let mut r = vec![0.0; self.num_unknowns()];
        let sat = |phase: Phase, s: f64| match phase {
            Phase::Liquid => s,
            Phase::Gas => 1.0 - s,
        };
        // d s_α / d s_l
        let sign = |phase: Phase| match phase {
            Phase::Liquid => 1.0,
            Phase::Gas => -1.0,
        };
        // ∂(row of `row_dual`, phase)/∂(pressure or s_l of `col_dual`)
        let push = |jac: &mut Option<&mut Triplets>, row_dual: usize, phase: Phase, col_dual: usize, dp: [f64; 2], dsl: f64| {
            let (Some(jac), Some(i), Some(j)) = (jac.as_deref_mut(), self.free_index[row_dual], self.free_index[col_dual]) else {
                return;
            };
            let row = 2 * i + phase.index();
            jac.push((row, 2 * j, dp[0] - dsl * ds[col_dual]));
            jac.push((row, 2 * j + 1, dp[1] + dsl * ds[col_dual]));
        };
        let unit = |phase: Phase, v: f64| match phase {
            Phase::Liquid => [v, 0.0],
            Phase::Gas => [0.0, v],
        };

        for (i, &d) in self.free.iter().enumerate() {
            let measure = self.dual.volume(d).measure;
            let c = measure * self.porosity[d] / dt;
            for phase in Phase::BOTH {
                let p = [p_l[d], p_g[d]][phase.index()];
                let s = sat(phase, s_l[d]);
                let rho = model.density(phase, p);
                let drho = model.density_derivative(phase, p);
                let old = model.density(phase, prev.pressure(phase)[d]) * prev.saturation(phase, d);
                let (fp, fi, si) = (sources.production[d], sources.injection[d], sources.injected_saturation(phase, d));
                r[2 * i + phase.index()] += c * (rho * s - old) + measure * rho * (s * fp - si * fi);
                push(
                    &mut jacobian,
                    d,
                    phase,
                    d,
                    unit(phase, c * drho * s + measure * drho * (s * fp - si * fi)),
                    sign(phase) * rho * (c + measure * fp),
                );
            }
        }

        for (f, face) in self.dual.faces().iter().enumerate() {
            let (d, e) = (face.d, face.e);
            if self.free_index[d].is_none() && self.free_index[e].is_none() {
                continue;
            }
            let m = self.face_coupling[f];
            let g = self.face_gravity[f];
            let (g_plus, g_minus) = (g.max(0.0), (-g).max(0.0));
            for phase in Phase::BOTH {
                let pv = [p_l, p_g][phase.index()];
                let (pd, pe) = (pv[d], pv[e]);
                let (sd, se) = (sat(phase, s_l[d]), sat(phase, s_l[e]));
                let take_d = upwind.take_d[f][phase.index()];
                let s_up = if take_d { sd } else { se };
                let mob_up = model.mobility(phase, s_up);
                let (mob_d, mob_e) = (model.mobility(phase, sd), model.mobility(phase, se));
                let rho = model.interface_density(pd, pe, phase);
                let diffusive = -mob_up * m * (pe - pd);
                let gravitational = mob_d * g_plus - mob_e * g_minus;
                let q = rho * (diffusive + rho * gravitational);
                if let Some(i) = self.free_index[d] {
                    r[2 * i + phase.index()] += q;
                }
                if let Some(i) = self.free_index[e] {
                    r[2 * i + phase.index()] -= q;
                }
                if jacobian.is_none() {
                    continue;
                }
                let (drho_d, drho_e) = model.interface_density_gradient(pd, pe, phase);
                let dq_drho = diffusive + 2.0 * rho * gravitational;
                let dq_dpd = drho_d * dq_drho + rho * mob_up * m;
                let dq_dpe = drho_e * dq_drho - rho * mob_up * m;
                let dmob_up = -rho * model.mobility_derivative(phase, s_up) * m * (pe - pd);
                let mut dq_dsd = rho * rho * model.mobility_derivative(phase, sd) * g_plus;
                let mut dq_dse = -rho * rho * model.mobility_derivative(phase, se) * g_minus;
                if take_d {
                    dq_dsd += dmob_up;
                } else {
                    dq_dse += dmob_up;
                }
                let (dq_dsd, dq_dse) = (sign(phase) * dq_dsd, sign(phase) * dq_dse);
                for (row, sgn) in [(d, 1.0), (e, -1.0)] {
                    push(&mut jacobian, row, phase, d, unit(phase, sgn * dq_dpd), sgn * dq_dsd);
                    push(&mut jacobian, row, phase, e, unit(phase, sgn * dq_dpe), sgn * dq_dse);
                }
            }
        }
        r
    }
}
