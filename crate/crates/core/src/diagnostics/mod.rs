//! Runtime verification of discrete properties on computed states:
//! maximum principle, pairwise inequalities and energy sums.

mod refinement;
mod report;

pub use refinement::{refinement_study, ManufacturedProblem, RefinementError, RefinementRow, RefinementTable};
pub use report::{write_key_values, write_reports_csv};

use crate::physics::{DerivedFunctions, FluidModel, Phase};
use crate::scheme::{upwind_saturation, Scheme, State};

/// Saturations may leave `[0, 1]` by at most this much.
pub const MAX_PRINCIPLE_TOLERANCE: f64 = 1e-10;
/// Normalized inequality margins below `-LEMMA_TOLERANCE` are violations.
pub const LEMMA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Offender {
    pub dual: usize,
    pub phase: Phase,
    pub saturation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPrincipleVerdict {
    pub passed: bool,
    /// Per phase `[liquid, gas]`.
    pub min: [f64; 2],
    pub max: [f64; 2],
    /// Largest violation, or the extreme value when none.
    pub worst: Option<Offender>,
}

pub fn check_max_principle(state: &State) -> MaxPrincipleVerdict {
    let mut verdict = MaxPrincipleVerdict { passed: true, min: [f64::INFINITY; 2], max: [f64::NEG_INFINITY; 2], worst: None };
    let mut worst_excess = f64::NEG_INFINITY;
    for d in 0..state.len() {
        for phase in Phase::BOTH {
            let s = state.saturation(phase, d);
            let i = phase.index();
            verdict.min[i] = verdict.min[i].min(s);
            verdict.max[i] = verdict.max[i].max(s);
            let excess = if s.is_nan() { f64::INFINITY } else { (-s).max(s - 1.0) };
            if excess > worst_excess {
                worst_excess = excess;
                verdict.worst = Some(Offender { dual: d, phase, saturation: s });
            }
        }
    }
    verdict.passed = !(worst_excess > MAX_PRINCIPLE_TOLERANCE);
    verdict
}

/// Sampled `m0 = min_s M_l(s) + M_g(1 - s)`.
pub fn mobility_floor(model: &FluidModel) -> f64 {
    let n = 1 << 14;
    (0..=n).map(|k| model.total_mobility(k as f64 / n as f64)).fold(f64::INFINITY, f64::min)
}

/// Values on two neighbouring dual volumes `D`, `E` and their coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairState {
    /// Liquid saturations `[s_D, s_E]`.
    pub s_l: [f64; 2],
    pub p_l: [f64; 2],
    pub p_g: [f64; 2],
    pub coupling: f64,
}

pub const LEMMA_NAMES: [&str; 5] = ["mobility_floor", "global_pressure", "capillary_b", "pbar", "ptilde"];

/// Normalized margins `(rhs - lhs) / scale` of the five pairwise
/// inequalities, in the order of [`LEMMA_NAMES`], with
/// `scale = max(|lhs|, |rhs|, 1e-14 (M_l + M_g + m0) P²)` and `P` the largest
/// pressure magnitude of the pair or the capillary range.
pub fn lemma_margins(derived: &DerivedFunctions, m0: f64, pair: &PairState) -> [f64; 5] {
    let model = derived.model();
    let [sd, se] = pair.s_l;
    let up = |p: [f64; 2], phase: Phase| {
        let (a, b) = match phase {
            Phase::Liquid => (sd, se),
            Phase::Gas => (1.0 - sd, 1.0 - se),
        };
        model.mobility(phase, upwind_saturation(a, b, pair.coupling * (p[1] - p[0])))
    };
    let ml = up(pair.p_l, Phase::Liquid);
    let mg = up(pair.p_g, Phase::Gas);
    let dl = pair.p_l[1] - pair.p_l[0];
    let dg = pair.p_g[1] - pair.p_g[0];
    let rhs = ml * dl * dl + mg * dg * dg;
    let dp = (pair.p_l[1] + derived.pbar(se)) - (pair.p_l[0] + derived.pbar(sd));
    let db = derived.big_b(se) - derived.big_b(sd);
    let dbar = derived.pbar(se) - derived.pbar(sd);
    let dtilde = derived.ptilde(se) - derived.ptilde(sd);
    let p_scale = [pair.p_l[0], pair.p_l[1], pair.p_g[0], pair.p_g[1], model.capillary_range()]
        .iter()
        .fold(0.0_f64, |m, p| m.max(p.abs()));
    let floor = 1e-14 * (ml + mg + m0) * p_scale * p_scale;
    let margin = |lhs: f64, rhs: f64| {
        let scale = lhs.abs().max(rhs.abs()).max(floor);
        if scale == 0.0 {
            0.0
        } else {
            (rhs - lhs) / scale
        }
    };
    [
        margin(m0, ml + mg),
        margin(m0 * dp * dp, rhs),
        margin(db * db, rhs),
        margin(ml * dbar * dbar, rhs),
        margin(mg * dtilde * dtilde, rhs),
    ]
}

/// Worst margin per inequality and the dual face where it occurred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaWorst {
    pub margins: [f64; 5],
    pub faces: [Option<usize>; 5],
    pub steps: [Option<usize>; 5],
}

impl Default for LemmaWorst {
    fn default() -> Self {
        LemmaWorst { margins: [f64::INFINITY; 5], faces: [None; 5], steps: [None; 5] }
    }
}

impl LemmaWorst {
    pub fn passed(&self) -> bool {
        self.margins.iter().all(|&m| !(m < -LEMMA_TOLERANCE))
    }

    pub fn merge(&mut self, other: &LemmaWorst) {
        for i in 0..5 {
            if other.margins[i] < self.margins[i] {
                self.margins[i] = other.margins[i];
                self.faces[i] = other.faces[i];
                self.steps[i] = other.steps[i];
            }
        }
    }
}

/// Pairwise inequalities over every dual face of a state.
pub fn state_lemma_margins(scheme: &Scheme, m0: f64, state: &State) -> LemmaWorst {
    let mut worst = LemmaWorst::default();
    for (f, face) in scheme.dual().faces().iter().enumerate() {
        let pair = PairState {
            s_l: [state.s_l[face.d], state.s_l[face.e]],
            p_l: [state.p_l[face.d], state.p_l[face.e]],
            p_g: [state.p_g[face.d], state.p_g[face.e]],
            coupling: scheme.face_coupling(f),
        };
        let m = lemma_margins(scheme.derived(), m0, &pair);
        for i in 0..5 {
            if m[i] < worst.margins[i] || m[i].is_nan() {
                worst.margins[i] = m[i];
                worst.faces[i] = Some(f);
                worst.steps[i] = Some(state.step);
            }
        }
    }
    worst
}

/// One timestep's contribution `Δt · (...)` to the energy sums.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyIncrement {
    /// `Δt Σ_D Σ_{E∈N(D)} 𝕄 M_α(s_up) (δp_α)²` per phase.
    pub e_p: [f64; 2],
    pub e_global: f64,
    pub e_b: f64,
    pub e_pbar: f64,
    pub e_ptilde: f64,
    /// `Δt Σ_D Σ_{E∈N(D)} 𝕄 (δB)²`, comparable with `e_p`.
    pub e_b_weighted: f64,
    /// Some coupling was negative, so terms may have either sign.
    pub signed: bool,
}

pub fn energy_increment(scheme: &Scheme, state: &State, dt: f64) -> EnergyIncrement {
    let model = scheme.model();
    let derived = scheme.derived();
    let mut inc = EnergyIncrement::default();
    let b: Vec<f64> = state.s_l.iter().map(|&s| derived.big_b(s)).collect();
    for (f, face) in scheme.dual().faces().iter().enumerate() {
        let m = scheme.face_coupling(f);
        if m < 0.0 {
            inc.signed = true;
        }
        let (d, e) = (face.d, face.e);
        for phase in Phase::BOTH {
            let p = state.pressure(phase);
            let dp = p[e] - p[d];
            let s_up = upwind_saturation(state.saturation(phase, d), state.saturation(phase, e), m * dp);
            // both orientations of the pair
            inc.e_p[phase.index()] += 2.0 * dt * m * model.mobility(phase, s_up) * dp * dp;
        }
        inc.e_b_weighted += 2.0 * dt * m * (b[e] - b[d]).powi(2);
    }
    let identity = scheme.identity_stiffness();
    let global: Vec<f64> = (0..state.len()).map(|d| state.p_l[d] + derived.pbar(state.s_l[d])).collect();
    let pbar: Vec<f64> = state.s_l.iter().map(|&s| derived.pbar(s)).collect();
    let ptilde: Vec<f64> = state.s_l.iter().map(|&s| derived.ptilde(s)).collect();
    inc.e_global = dt * identity.quadratic_form(&global);
    inc.e_b = dt * identity.quadratic_form(&b);
    inc.e_pbar = dt * identity.quadratic_form(&pbar);
    inc.e_ptilde = dt * identity.quadratic_form(&ptilde);
    inc
}

/// Cumulative energy sums and the worst pairwise inequality margins.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergySums {
    pub e_p: [f64; 2],
    pub e_global: f64,
    pub e_b: f64,
    pub e_pbar: f64,
    pub e_ptilde: f64,
    pub e_b_weighted: f64,
    pub signed: bool,
    pub lemma: LemmaWorst,
}

impl EnergySums {
    pub fn add(&mut self, inc: &EnergyIncrement) {
        for i in 0..2 {
            self.e_p[i] += inc.e_p[i];
        }
        self.e_global += inc.e_global;
        self.e_b += inc.e_b;
        self.e_pbar += inc.e_pbar;
        self.e_ptilde += inc.e_ptilde;
        self.e_b_weighted += inc.e_b_weighted;
        self.signed |= inc.signed;
    }

    pub fn values(&self) -> [f64; 7] {
        [self.e_p[0], self.e_p[1], self.e_global, self.e_b, self.e_pbar, self.e_ptilde, self.e_b_weighted]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    /// Summed B inequality: `Σ 𝕄(δB)² ≤ E_p(l) + E_p(g)` up to `1e-9` relative.
    pub fn b_bound_holds(&self) -> bool {
        let rhs = self.e_p[0] + self.e_p[1];
        self.e_b_weighted <= rhs + LEMMA_TOLERANCE * rhs.abs().max(self.e_b_weighted.abs())
    }
}

/// Energy sums over the accepted states `states[1..]`, with
/// `Δt_n = t_n - t_{n-1}`.
pub fn accumulate_energy(scheme: &Scheme, states: &[State]) -> EnergySums {
    let m0 = mobility_floor(scheme.model());
    let mut sums = EnergySums { lemma: LemmaWorst::default(), ..Default::default() };
    for w in states.windows(2) {
        sums.add(&energy_increment(scheme, &w[1], w[1].time - w[0].time));
        sums.lemma.merge(&state_lemma_margins(scheme, m0, &w[1]));
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryTag, PrimalMesh};
    use crate::physics::{PresetParameters, DEFAULT_TABLE_RESOLUTION};

    fn state(s: Vec<f64>) -> State {
        let n = s.len();
        State { p_l: vec![0.0; n], p_g: vec![0.0; n], s_l: s, step: 1, time: 0.1 }
    }

    #[test]
    fn max_principle_threshold() {
        assert!(check_max_principle(&state(vec![0.5; 4])).passed);
        let v = check_max_principle(&state(vec![0.5, 1.0 + 1e-6, 0.2]));
        assert!(!v.passed);
        assert_eq!(v.worst.unwrap().dual, 1);
        assert!(check_max_principle(&state(vec![1.0 + 5e-11, -5e-11])).passed);
    }

    fn derived() -> DerivedFunctions {
        DerivedFunctions::new(FluidModel::quadratic_linear(2, &PresetParameters::default()), DEFAULT_TABLE_RESOLUTION)
    }

    fn pair(sd: f64, se: f64, pl_d: f64, pl_e: f64, model: &FluidModel) -> PairState {
        PairState {
            s_l: [sd, se],
            p_l: [pl_d, pl_e],
            p_g: [pl_d + model.capillary_pressure(sd), pl_e + model.capillary_pressure(se)],
            coupling: 1.0,
        }
    }

    #[test]
    fn cocurrent_pairs_satisfy_all_inequalities() {
        let d = derived();
        let m0 = mobility_floor(d.model());
        assert!((m0 - 0.5).abs() < 1e-12);
        let m = lemma_margins(&d, m0, &pair(0.3, 0.35, 0.0, 0.5, d.model()));
        assert!(m.iter().all(|&x| x >= -LEMMA_TOLERANCE), "{m:?}");
    }

    #[test]
    fn counter_current_pair_violates_the_ptilde_inequality() {
        // liquid and gas flow in opposite directions with a nearly immobile gas
        let d = derived();
        let model = d.model();
        let p = pair(0.8508, 1.0, 0.0, 0.002467, model);
        assert!(p.p_g[1] - p.p_g[0] < 0.0 && p.p_l[1] - p.p_l[0] > 0.0);
        let m = lemma_margins(&d, mobility_floor(model), &p);
        assert!(m[4] < -1e-3, "{m:?}");
        assert!(m[0] >= 0.0 && m[1] >= 0.0 && m[2] >= 0.0);
    }

    #[test]
    fn constant_state_has_zero_energy() {
        let mesh = PrimalMesh::unit_square(3, |_| BoundaryTag::Impervious).unwrap();
        let scheme = Scheme::new(mesh, FluidModel::quadratic_linear(2, &PresetParameters::default())).unwrap();
        let s0 = scheme.project_initial(|_| 0.2, |_| 0.9).unwrap();
        let mut s1 = s0.clone();
        s1.step = 1;
        s1.time = 0.5;
        let sums = accumulate_energy(&scheme, &[s0, s1]);
        assert!(sums.values().iter().all(|&v| v.abs() < 1e-14), "{sums:?}");
        assert!(sums.lemma.passed(), "{:?}", sums.lemma);
    }
}
