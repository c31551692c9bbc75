//! Newton solution of one implicit timestep and the time loop.

pub mod linear;

use std::str::FromStr;

use thiserror::Error;

use crate::diagnostics::{
    check_max_principle, energy_increment, mobility_floor, state_lemma_margins, EnergyIncrement, EnergySums, LemmaWorst,
    MaxPrincipleVerdict,
};
use crate::physics::Phase;
use crate::scheme::{Scheme, SchemeError, SourceField, Sources, State, Triplets, Upwind};
use linear::{solve_direct, solve_iterative, LinearSolveError, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    FiniteDifference,
    Analytic,
}

impl FromStr for JacobianMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "finite-difference" | "fd" => Ok(Self::FiniteDifference),
            "analytic" => Ok(Self::Analytic),
            other => Err(format!("unknown jacobian mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolver {
    Direct,
    Iterative,
}

impl FromStr for LinearSolver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "direct" => Ok(Self::Direct),
            "iterative" => Ok(Self::Iterative),
            other => Err(format!("unknown linear solver `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Converged when `‖F‖ ≤ newton_tol · (‖F_0‖ + residual_floor)`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub line_search_shrink: f64,
    pub line_search_max_halvings: usize,
    pub jacobian: JacobianMode,
    pub linear_solver: LinearSolver,
    pub iterative_tol: f64,
    pub halving_depth: usize,
    /// In scaled residual units (saturation change per step).
    pub residual_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-9,
            newton_max_iter: 30,
            line_search_shrink: 0.5,
            line_search_max_halvings: 8,
            jacobian: JacobianMode::FiniteDifference,
            linear_solver: LinearSolver::Direct,
            iterative_tol: 1e-12,
            halving_depth: 10,
            residual_floor: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("newton_tol", self.newton_tol),
            ("iterative_tol", self.iterative_tol),
            ("residual_floor", self.residual_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(SolverError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(SolverError::Config(format!("line_search_shrink must lie in (0, 1), got {}", self.line_search_shrink)));
        }
        if self.newton_max_iter == 0 {
            return Err(SolverError::Config("newton_max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailureReason {
    MaxIterations,
    LineSearch,
    NonFinite,
    Linear(LinearSolveError),
    Closure(String),
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailureReason::MaxIterations => f.write_str("iteration limit reached"),
            FailureReason::LineSearch => f.write_str("line search found no decrease"),
            FailureReason::NonFinite => f.write_str("non-finite residual"),
            FailureReason::Linear(e) => write!(f, "{e}"),
            FailureReason::Closure(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("final time {t_final} is not an integer multiple of the timestep {dt}")]
    NonIntegerSteps { t_final: f64, dt: f64 },
    #[error("step {step} (t = {time}, dt = {dt:e}) did not converge: {reason} after {iterations} iterations, scaled residual {residual:e}")]
    NonConvergence {
        step: usize,
        time: f64,
        dt: f64,
        iterations: usize,
        residual: f64,
        reason: FailureReason,
        /// Last Newton iterate in unknown order.
        iterate: Vec<f64>,
    },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

/// Record of one accepted timestep, merged over fallback substeps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepReport {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub substeps: usize,
    pub min_substep: f64,
    pub iterations: usize,
    pub initial_residual: f64,
    /// Scaled residual 2-norms per phase at acceptance.
    pub residual_norms: [f64; 2],
    pub line_search_activations: usize,
    /// Largest shift of `p_g - p_l` into the capillary range on the
    /// accepted iterate.
    pub projection: f64,
    pub projection_flagged: bool,
    pub max_principle: MaxPrincipleVerdict,
    pub energy: EnergyIncrement,
    pub lemma: LemmaWorst,
}

#[derive(Debug, Clone, PartialEq)]
struct NewtonStats {
    iterations: usize,
    initial_residual: f64,
    residual_norms: [f64; 2],
    line_search_activations: usize,
    projection: f64,
}

struct NewtonFailure {
    iterations: usize,
    residual: f64,
    reason: FailureReason,
    iterate: Vec<f64>,
}

/// Accepted states and per-step reports of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub reports: Vec<TimestepReport>,
    pub energy: EnergySums,
}

pub struct Solver<'a> {
    scheme: &'a Scheme,
    config: SolverConfig,
    colors: Vec<Vec<usize>>,
    m0: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl<'a> Solver<'a> {
    pub fn new(scheme: &'a Scheme, config: SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        Ok(Solver { scheme, colors: distance2_coloring(scheme), m0: mobility_floor(scheme.model()), config })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn scheme(&self) -> &Scheme {
        self.scheme
    }

    /// Row weights `Δt / (|D| φ_D ρ_α(p_prev))`.
    fn weights(&self, prev: &State, dt: f64) -> Vec<f64> {
        let s = self.scheme;
        let model = s.model();
        s.free_volumes()
            .iter()
            .flat_map(|&d| {
                let c = s.dual().volume(d).measure * s.porosity(d);
                Phase::BOTH.map(|phase| dt / (c * model.density(phase, prev.pressure(phase)[d])))
            })
            .collect()
    }

    fn scaled_residual(&self, x: &[f64], prev: &State, dt: f64, src: &SourceField, w: &[f64]) -> Vec<f64> {
        let (p_l, p_g) = self.scheme.pressures(x);
        let mut r = self.scheme.residual(&p_l, &p_g, prev, dt, src);
        r.iter_mut().zip(w).for_each(|(a, b)| *a *= b);
        r
    }

    /// Shifts `p_l` and `p_g` symmetrically so that `p_g - p_l` lies in the
    /// capillary range; returns the largest shift of the difference.
    fn project(&self, x: &mut [f64]) -> f64 {
        let model = self.scheme.model();
        let (lo, hi) = (model.capillary_pressure(1.0), model.capillary_pressure(0.0));
        let mut worst: f64 = 0.0;
        for pair in x.chunks_exact_mut(2) {
            let pc = pair[1] - pair[0];
            let excess = pc - pc.clamp(lo, hi);
            if excess != 0.0 {
                pair[0] += 0.5 * excess;
                pair[1] -= 0.5 * excess;
                worst = worst.max(excess.abs());
            }
        }
        worst
    }

    /// Jacobian of the unscaled residual under frozen upwind choices.
    pub fn jacobian(&self, x: &[f64], prev: &State, dt: f64, src: &SourceField, upwind: &Upwind) -> SparseMatrix {
        let n = self.scheme.num_unknowns();
        let (p_l, p_g) = self.scheme.pressures(x);
        let mut triplets: Triplets = Vec::new();
        match self.config.jacobian {
            JacobianMode::Analytic => {
                self.scheme.evaluate(&p_l, &p_g, prev, dt, src, upwind, Some(&mut triplets));
            }
            JacobianMode::FiniteDifference => {
                let r0 = self.scheme.evaluate(&p_l, &p_g, prev, dt, src, upwind, None);
                let p_scale = self.scheme.model().capillary_range().max(x.iter().fold(0.0, |m, v| m.max(v.abs())));
                let dual = self.scheme.dual();
                for color in &self.colors {
                    for var in 0..2 {
                        let mut xp = x.to_vec();
                        let mut steps = Vec::with_capacity(color.len());
                        for &i in color {
                            let j = 2 * i + var;
                            let h = (1e-7 * x[j].abs()).max(1e-7 * p_scale);
                            xp[j] += h;
                            steps.push(xp[j] - x[j]);
                        }
                        let (a, b) = self.scheme.pressures(&xp);
                        let r = self.scheme.evaluate(&a, &b, prev, dt, src, upwind, None);
                        for (&i, &h) in color.iter().zip(&steps) {
                            let d = self.scheme.free_volumes()[i];
                            let col = 2 * i + var;
                            let rows = std::iter::once(d).chain(dual.neighbors(d).iter().map(|&(e, _)| e));
                            for e in rows {
                                if let Some(k) = self.scheme.free_index(e) {
                                    for row in [2 * k, 2 * k + 1] {
                                        let v = (r[row] - r0[row]) / h;
                                        if v != 0.0 {
                                            triplets.push((row, col, v));
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        SparseMatrix::from_triplets(n, &triplets)
    }

    fn newton(&self, prev: &State, dt: f64, src: &SourceField) -> Result<(Vec<f64>, NewtonStats), NewtonFailure> {
        let cfg = &self.config;
        let w = self.weights(prev, dt);
        let mut x = self.scheme.unknowns(prev);
        let mut projection = self.project(&mut x);
        let mut r = self.scaled_residual(&x, prev, dt, src, &w);
        let mut r_norm = norm(&r);
        let initial = r_norm;
        let target = cfg.newton_tol * (initial + cfg.residual_floor);
        let mut stats = NewtonStats {
            iterations: 0,
            initial_residual: initial,
            residual_norms: [0.0; 2],
            line_search_activations: 0,
            projection,
        };
        let fail = |reason, iterations, residual, x: &[f64]| NewtonFailure { iterations, residual, reason, iterate: x.to_vec() };
        loop {
            if !r_norm.is_finite() {
                return Err(fail(FailureReason::NonFinite, stats.iterations, r_norm, &x));
            }
            if r_norm <= target {
                break;
            }
            if stats.iterations >= cfg.newton_max_iter {
                return Err(fail(FailureReason::MaxIterations, stats.iterations, r_norm, &x));
            }
            stats.iterations += 1;
            let (p_l, p_g) = self.scheme.pressures(&x);
            let upwind = self.scheme.upwind_directions(&p_l, &p_g);
            let mut jac = self.jacobian(&x, prev, dt, src, &upwind);
            jac.scale_rows(&w);
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let delta = match cfg.linear_solver {
                LinearSolver::Direct => solve_direct(&jac, &rhs),
                LinearSolver::Iterative => solve_iterative(&jac, &rhs, cfg.iterative_tol, 20 * rhs.len().max(50)),
            }
            .map_err(|e| fail(FailureReason::Linear(e), stats.iterations, r_norm, &x))?;

            let mut lambda = 1.0;
            let mut best: Option<(Vec<f64>, Vec<f64>, f64, f64)> = None;
            for k in 0..=cfg.line_search_max_halvings {
                let mut trial: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + lambda * b).collect();
                let shift = self.project(&mut trial);
                let rt = self.scaled_residual(&trial, prev, dt, src, &w);
                let nt = norm(&rt);
                if nt.is_finite() && best.as_ref().is_none_or(|b| nt < b.2) {
                    best = Some((trial, rt, nt, shift));
                }
                if nt <= (1.0 - 1e-4 * lambda) * r_norm {
                    break;
                }
                if k < cfg.line_search_max_halvings {
                    stats.line_search_activations += 1;
                    lambda *= cfg.line_search_shrink;
                }
            }
            match best {
                Some((trial, rt, nt, shift)) if nt < r_norm => {
                    x = trial;
                    r = rt;
                    r_norm = nt;
                    projection = shift;
                }
                _ => return Err(fail(FailureReason::LineSearch, stats.iterations, r_norm, &x)),
            }
        }
        stats.projection = projection;
        stats.residual_norms = [0, 1].map(|a| r.iter().skip(a).step_by(2).map(|v| v * v).sum::<f64>().sqrt());
        Ok((x, stats))
    }

    fn advance(&self, prev: &State, t0: f64, dt: f64, sources: &Sources, depth: usize, step: usize) -> Result<(State, TimestepReport), SolverError> {
        let src = sources.evaluate(self.scheme, t0, t0 + dt)?;
        match self.newton(prev, dt, &src) {
            Ok((x, stats)) => {
                let (p_l, p_g) = self.scheme.pressures(&x);
                let state = self.scheme.state_from_pressures(p_l, p_g, step, t0 + dt).map_err(|e| SolverError::NonConvergence {
                    step,
                    time: t0 + dt,
                    dt,
                    iterations: stats.iterations,
                    residual: stats.residual_norms[0].hypot(stats.residual_norms[1]),
                    reason: FailureReason::Closure(e.to_string()),
                    iterate: x.clone(),
                })?;
                let p_max = self.scheme.model().capillary_range();
                let report = TimestepReport {
                    step,
                    time: t0 + dt,
                    dt,
                    substeps: 1,
                    min_substep: dt,
                    iterations: stats.iterations,
                    initial_residual: stats.initial_residual,
                    residual_norms: stats.residual_norms,
                    line_search_activations: stats.line_search_activations,
                    projection: stats.projection,
                    projection_flagged: stats.projection > 1e-9 * p_max,
                    max_principle: check_max_principle(&state),
                    energy: energy_increment(self.scheme, &state, dt),
                    lemma: LemmaWorst::default(),
                };
                Ok((state, report))
            }
            Err(_) if depth > 0 => {
                let half = 0.5 * dt;
                let (mid, a) = self.advance(prev, t0, half, sources, depth - 1, step)?;
                let (end, b) = self.advance(&mid, t0 + half, half, sources, depth - 1, step)?;
                let mut energy = a.energy;
                energy.e_p[0] += b.energy.e_p[0];
                energy.e_p[1] += b.energy.e_p[1];
                energy.e_global += b.energy.e_global;
                energy.e_b += b.energy.e_b;
                energy.e_pbar += b.energy.e_pbar;
                energy.e_ptilde += b.energy.e_ptilde;
                energy.e_b_weighted += b.energy.e_b_weighted;
                energy.signed |= b.energy.signed;
                let mut max_principle = b.max_principle;
                max_principle.passed &= a.max_principle.passed;
                for i in 0..2 {
                    max_principle.min[i] = max_principle.min[i].min(a.max_principle.min[i]);
                    max_principle.max[i] = max_principle.max[i].max(a.max_principle.max[i]);
                }
                if !a.max_principle.passed && b.max_principle.passed {
                    max_principle.worst = a.max_principle.worst;
                }
                let report = TimestepReport {
                    step,
                    time: t0 + dt,
                    dt,
                    substeps: a.substeps + b.substeps,
                    min_substep: a.min_substep.min(b.min_substep),
                    iterations: a.iterations + b.iterations,
                    initial_residual: a.initial_residual,
                    residual_norms: b.residual_norms,
                    line_search_activations: a.line_search_activations + b.line_search_activations,
                    projection: a.projection.max(b.projection),
                    projection_flagged: a.projection_flagged || b.projection_flagged,
                    max_principle,
                    energy,
                    lemma: LemmaWorst::default(),
                };
                Ok((end, report))
            }
            Err(f) => Err(SolverError::NonConvergence {
                step,
                time: t0 + dt,
                dt,
                iterations: f.iterations,
                residual: f.residual,
                reason: f.reason,
                iterate: f.iterate,
            }),
        }
    }

    /// Advances `prev` by `dt`, halving the step on Newton failure up to the
    /// configured depth.
    pub fn solve_timestep(&self, prev: &State, dt: f64, sources: &Sources) -> Result<(State, TimestepReport), SolverError> {
        if !(dt > 0.0) {
            return Err(SolverError::Config(format!("timestep must be positive, got {dt}")));
        }
        let (state, mut report) = self.advance(prev, prev.time, dt, sources, self.config.halving_depth, prev.step + 1)?;
        report.lemma = state_lemma_margins(self.scheme, self.m0, &state);
        Ok((state, report))
    }

    /// Runs `N = t_final / dt` uniform steps; `observer` sees every accepted
    /// state, starting with `initial`.
    pub fn run_with(
        &self,
        initial: State,
        t_final: f64,
        dt: f64,
        sources: &Sources,
        mut observer: impl FnMut(&State, Option<&TimestepReport>),
    ) -> Result<Trajectory, SolverError> {
        if !(dt > 0.0) || !(t_final >= 0.0) {
            return Err(SolverError::Config(format!("need dt > 0 and t_final >= 0 (dt = {dt}, t_final = {t_final})")));
        }
        let ratio = t_final / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(SolverError::NonIntegerSteps { t_final, dt });
        }
        let steps = steps as usize;
        observer(&initial, None);
        let mut states = vec![initial];
        let mut reports = Vec::with_capacity(steps);
        let mut energy = EnergySums::default();
        for n in 1..=steps {
            let prev = states.last().expect("trajectory starts with the initial state");
            let (mut state, report) = self.solve_timestep(prev, dt, sources)?;
            // accumulated times drift; pin t_n = n Δt
            state.time = n as f64 * dt;
            energy.add(&report.energy);
            energy.lemma.merge(&report.lemma);
            observer(&state, Some(&report));
            states.push(state);
            reports.push(report);
        }
        Ok(Trajectory { states, reports, energy })
    }

    pub fn run(&self, initial: State, t_final: f64, dt: f64, sources: &Sources) -> Result<Trajectory, SolverError> {
        self.run_with(initial, t_final, dt, sources, |_, _| {})
    }
}

/// Greedy coloring of the free volumes such that no two volumes of one
/// color are neighbours or share a neighbour.
fn distance2_coloring(scheme: &Scheme) -> Vec<Vec<usize>> {
    let dual = scheme.dual();
    let free = scheme.free_volumes();
    let mut color_of = vec![usize::MAX; dual.len()];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut forbidden: Vec<usize> = Vec::new();
    for (i, &d) in free.iter().enumerate() {
        forbidden.clear();
        for &(e, _) in dual.neighbors(d) {
            forbidden.push(color_of[e]);
            for &(g, _) in dual.neighbors(e) {
                forbidden.push(color_of[g]);
            }
        }
        let c = (0..).find(|c| !forbidden.contains(c)).expect("unbounded search");
        color_of[d] = c;
        if c == classes.len() {
            classes.push(Vec::new());
        }
        classes[c].push(i);
    }
    classes
}
