//! Constitutive laws of the two-phase model and the derived functions of
//! the global pressure formulation.

mod derived;
mod fields;
mod laws;
pub mod quadrature;

use thiserror::Error;

use crate::mesh::Point;

pub use derived::{DerivedFunctions, DEFAULT_TABLE_RESOLUTION};
pub use fields::{PointFn, ScalarField, Tensor, TensorField};
pub use laws::{CapillaryPressure, CustomLaw, Density, RelativePermeability, ScalarFn};

/// Saturation slack tolerated at API boundaries.
pub const SATURATION_SLACK: f64 = 1e-12;
/// Capillary inputs within this fraction of the capillary range are clamped.
pub const CAPILLARY_CLAMP_FRACTION: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("{quantity} = {value} is outside its domain [{lo}, {hi}]")]
    Domain { quantity: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("model assumption violated: {0}")]
    Assumption(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Liquid,
    Gas,
}

impl Phase {
    pub const BOTH: [Phase; 2] = [Phase::Liquid, Phase::Gas];

    pub fn index(self) -> usize {
        match self {
            Phase::Liquid => 0,
            Phase::Gas => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Liquid => "liquid",
            Phase::Gas => "gas",
        }
    }
}

/// Catalogue of coefficients: porosity, permeability, viscosities, relative
/// permeabilities, capillary pressure, densities and gravity.
#[derive(Debug, Clone)]
pub struct FluidModel {
    pub dim: usize,
    pub porosity: ScalarField,
    pub permeability: TensorField,
    /// `[mu_l, mu_g]`
    pub viscosity: [f64; 2],
    pub relative_permeability: [RelativePermeability; 2],
    pub capillary: CapillaryPressure,
    pub density: [Density; 2],
    pub gravity: Point,
}

/// Parameters of the shipped presets.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetParameters {
    pub viscosity: [f64; 2],
    pub relperm_exponent: f64,
    pub p_max: f64,
    pub rho_liquid: f64,
    pub rho_gas_reference: f64,
    /// `c^2` in `rho_g = rho_ref exp(p / c^2)`
    pub gas_c2: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub porosity: f64,
    pub permeability: f64,
}

impl Default for PresetParameters {
    fn default() -> Self {
        PresetParameters {
            viscosity: [1.0, 1.0],
            relperm_exponent: 2.0,
            p_max: 1.0,
            rho_liquid: 1.0,
            rho_gas_reference: 1.0,
            gas_c2: 10.0,
            rho_min: 0.5,
            rho_max: 2.0,
            porosity: 0.2,
            permeability: 1.0,
        }
    }
}

/// Summary of the sampled assumption checks.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// Sampled lower bound of `M_l(s) + M_g(1 - s)`.
    pub m0: f64,
    /// Sampled lower bound of `|p_c'(s)|`.
    pub min_capillary_slope: f64,
    /// Sampled density range per phase.
    pub density_range: [(f64, f64); 2],
}

impl FluidModel {
    /// Quadratic relative permeabilities, linear capillary pressure, constant
    /// liquid density and clamped exponential gas density.
    pub fn quadratic_linear(dim: usize, params: &PresetParameters) -> Self {
        FluidModel {
            dim,
            porosity: ScalarField::Constant(params.porosity),
            permeability: TensorField::Constant(Tensor::isotropic(dim, params.permeability)),
            viscosity: params.viscosity,
            relative_permeability: [
                RelativePermeability::Power { exponent: params.relperm_exponent },
                RelativePermeability::Power { exponent: params.relperm_exponent },
            ],
            capillary: CapillaryPressure::Linear { p_max: params.p_max },
            density: [
                Density::Constant(params.rho_liquid),
                Density::ClampedExponential {
                    reference: params.rho_gas_reference,
                    c2: params.gas_c2,
                    min: params.rho_min,
                    max: params.rho_max,
                },
            ],
            gravity: [0.0; 3],
        }
    }

    /// Same as [`FluidModel::quadratic_linear`] with both densities constant.
    pub fn constant_density(dim: usize, params: &PresetParameters) -> Self {
        let mut model = Self::quadratic_linear(dim, params);
        model.density[1] = Density::Constant(params.rho_gas_reference);
        model
    }

    /// `M_alpha(s) = k_r(s) / mu`, extended by zero for `s <= 0` and by
    /// `M_alpha(1)` for `s >= 1`.
    pub fn mobility(&self, phase: Phase, s: f64) -> f64 {
        let i = phase.index();
        if s <= 0.0 {
            0.0
        } else {
            self.relative_permeability[i].value(s.min(1.0)) / self.viscosity[i]
        }
    }

    pub fn mobility_derivative(&self, phase: Phase, s: f64) -> f64 {
        let i = phase.index();
        if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            self.relative_permeability[i].derivative(s) / self.viscosity[i]
        }
    }

    /// `M(s_l) = M_l(s_l) + M_g(1 - s_l)`
    pub fn total_mobility(&self, s_l: f64) -> f64 {
        self.mobility(Phase::Liquid, s_l) + self.mobility(Phase::Gas, 1.0 - s_l)
    }

    pub fn density(&self, phase: Phase, p: f64) -> f64 {
        self.density[phase.index()].value(p)
    }

    pub fn density_derivative(&self, phase: Phase, p: f64) -> f64 {
        self.density[phase.index()].derivative(p)
    }

    pub fn capillary_pressure(&self, s_l: f64) -> f64 {
        self.capillary.value(s_l)
    }

    pub fn capillary_derivative(&self, s_l: f64) -> f64 {
        self.capillary.derivative(s_l)
    }

    /// `p_c(0) - p_c(1)`
    pub fn capillary_range(&self) -> f64 {
        self.capillary.value(0.0) - self.capillary.value(1.0)
    }

    /// Liquid saturation with `p_c(s) = pc`. Inputs within
    /// `1e-9 * (p_c(0) - p_c(1))` outside the range are clamped to the
    /// nearest endpoint; anything further out is a domain error.
    pub fn capillary_inverse(&self, pc: f64) -> Result<f64, PhysicsError> {
        let (lo, hi) = (self.capillary.value(1.0), self.capillary.value(0.0));
        let slack = CAPILLARY_CLAMP_FRACTION * (hi - lo);
        if pc < lo - slack || pc > hi + slack || pc.is_nan() {
            return Err(PhysicsError::Domain { quantity: "capillary pressure", value: pc, lo, hi });
        }
        if pc <= lo {
            return Ok(1.0);
        }
        if pc >= hi {
            return Ok(0.0);
        }
        Ok(self.capillary.inverse_extended(pc).clamp(0.0, 1.0))
    }

    /// `g_alpha(p) = ∫_0^p dζ / rho_alpha(ζ)`
    pub fn g_alpha(&self, p: f64, phase: Phase) -> f64 {
        self.density[phase.index()].inverse_integral(0.0, p)
    }

    /// Interface density `rho_{D,E}` defined through
    /// `1/rho_{D,E} = (1/(p_E - p_D)) ∫_{p_D}^{p_E} dζ/rho(ζ)`, or `rho(p_D)`
    /// when the pressures coincide. Exactly symmetric in its arguments.
    pub fn interface_density(&self, p_d: f64, p_e: f64, phase: Phase) -> f64 {
        let (a, b) = if p_d <= p_e { (p_d, p_e) } else { (p_e, p_d) };
        if a == b {
            return self.density(phase, a);
        }
        (b - a) / self.density[phase.index()].inverse_integral(a, b)
    }

    /// Partial derivatives of [`FluidModel::interface_density`] with respect
    /// to `(p_d, p_e)`.
    pub fn interface_density_gradient(&self, p_d: f64, p_e: f64, phase: Phase) -> (f64, f64) {
        let dp = p_e - p_d;
        let scale = 1.0 + p_d.abs().max(p_e.abs());
        if dp.abs() <= 1e-5 * scale {
            let half = 0.5 * self.density_derivative(phase, 0.5 * (p_d + p_e));
            return (half, half);
        }
        let integral = self.density[phase.index()].inverse_integral(p_d, p_e);
        let i2 = integral * integral;
        let d_e = (integral - dp / self.density(phase, p_e)) / i2;
        let d_d = (-integral + dp / self.density(phase, p_d)) / i2;
        (d_d, d_e)
    }

    /// Samples assumptions on the mobilities, capillary pressure and
    /// densities on `samples + 1` uniform points.
    pub fn check_assumptions(&self, samples: usize, pressure_range: (f64, f64)) -> Result<AssumptionReport, PhysicsError> {
        for (i, mu) in self.viscosity.iter().enumerate() {
            if !(*mu > 0.0) {
                return Err(PhysicsError::Assumption(format!("viscosity of phase {i} must be positive")));
            }
        }
        for phase in Phase::BOTH {
            if self.mobility(phase, 0.0) != 0.0 || self.relative_permeability[phase.index()].value(0.0) != 0.0 {
                return Err(PhysicsError::Assumption(format!("{} mobility must vanish at zero saturation", phase.name())));
            }
        }
        if self.capillary.value(1.0).abs() > 1e-12 * self.capillary.value(0.0).abs().max(1.0) {
            return Err(PhysicsError::Assumption("p_c(1) must be 0".into()));
        }
        let mut m0 = f64::INFINITY;
        let mut slope = f64::INFINITY;
        for k in 0..=samples {
            let s = k as f64 / samples as f64;
            m0 = m0.min(self.total_mobility(s));
            let d = self.capillary.derivative(s);
            if !(d < 0.0) {
                return Err(PhysicsError::Assumption(format!("p_c must be strictly decreasing (p_c'({s}) = {d})")));
            }
            slope = slope.min(-d);
        }
        if !(m0 > 0.0) {
            return Err(PhysicsError::Assumption("total mobility must stay positive".into()));
        }
        let mut density_range = [(f64::INFINITY, f64::NEG_INFINITY); 2];
        for phase in Phase::BOTH {
            let (lo, hi) = pressure_range;
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=samples {
                let p = lo + (hi - lo) * k as f64 / samples as f64;
                let rho = self.density(phase, p);
                if !(rho > 0.0) || rho < prev {
                    return Err(PhysicsError::Assumption(format!(
                        "{} density must be positive and nondecreasing (rho({p}) = {rho})",
                        phase.name()
                    )));
                }
                prev = rho;
                let r = &mut density_range[phase.index()];
                *r = (r.0.min(rho), r.1.max(rho));
            }
        }
        Ok(AssumptionReport { m0, min_capillary_slope: slope, density_range })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> FluidModel {
        FluidModel::quadratic_linear(2, &PresetParameters::default())
    }

    #[test]
    fn preset_satisfies_assumptions() {
        let report = model().check_assumptions(10_000, (-100.0, 100.0)).unwrap();
        assert!((report.m0 - 0.5).abs() < 1e-12);
        assert_eq!(report.min_capillary_slope, 1.0);
        assert_eq!(report.density_range[1], (0.5, 2.0));
        assert_eq!(report.density_range[0], (1.0, 1.0));
    }

    #[test]
    fn violated_assumptions_are_reported() {
        let mut m = model();
        m.capillary = CapillaryPressure::Custom(CustomLaw::new(|s| (1.0 - s) * (1.0 - s), |s| -2.0 * (1.0 - s)));
        assert!(m.check_assumptions(100, (0.0, 1.0)).is_err());
        let mut m = model();
        m.relative_permeability[0] = RelativePermeability::Custom(CustomLaw::new(|s| 0.1 + s, |_| 1.0));
        assert!(m.check_assumptions(100, (0.0, 1.0)).is_err());
    }

    #[test]
    fn capillary_inverse_examples_and_clamping() {
        let m = model();
        assert_eq!(m.capillary_inverse(1.0).unwrap(), 0.0);
        assert_eq!(m.capillary_inverse(0.0).unwrap(), 1.0);
        assert_eq!(m.capillary_inverse(0.5).unwrap(), 0.5);
        assert_eq!(m.capillary_inverse(1.0 + 5e-10).unwrap(), 0.0);
        assert_eq!(m.capillary_inverse(-5e-10).unwrap(), 1.0);
        assert!(matches!(m.capillary_inverse(1.0 + 1e-6), Err(PhysicsError::Domain { .. })));
        assert!(m.capillary_inverse(-1e-3).is_err());
    }

    #[test]
    fn mobility_is_extended_by_zero() {
        let m = model();
        assert_eq!(m.mobility(Phase::Liquid, -0.1), 0.0);
        assert_eq!(m.mobility(Phase::Gas, 0.0), 0.0);
        assert_eq!(m.mobility(Phase::Gas, 1.3), 1.0);
        assert!((m.mobility(Phase::Liquid, 0.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn g_alpha_examples() {
        let m = model();
        assert_eq!(m.g_alpha(0.0, Phase::Gas), 0.0);
        assert!((m.g_alpha(3.5, Phase::Liquid) - 3.5).abs() < 1e-15);
        let c = FluidModel::constant_density(2, &PresetParameters { rho_gas_reference: 4.0, ..Default::default() });
        assert!((c.g_alpha(2.0, Phase::Gas) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interface_density_branches() {
        let m = model();
        assert_eq!(m.interface_density(1.0, 1.0, Phase::Gas), m.density(Phase::Gas, 1.0));
        assert_eq!(m.interface_density(-3.0, 7.0, Phase::Liquid), 1.0);
        let a = m.interface_density(0.3, 2.9, Phase::Gas);
        let b = m.interface_density(2.9, 0.3, Phase::Gas);
        assert_eq!(a, b);
        assert!(a > m.density(Phase::Gas, 0.3) && a < m.density(Phase::Gas, 2.9));
    }

    #[test]
    fn interface_density_gradient_matches_differences() {
        let m = model();
        for &(pd, pe) in &[(0.3, 2.9), (1.0, 1.0 + 1e-7), (-2.0, 0.5), (60.0, 80.0)] {
            let (gd, ge) = m.interface_density_gradient(pd, pe, Phase::Gas);
            let h = 1e-6;
            let fd_d = (m.interface_density(pd + h, pe, Phase::Gas) - m.interface_density(pd - h, pe, Phase::Gas)) / (2.0 * h);
            let fd_e = (m.interface_density(pd, pe + h, Phase::Gas) - m.interface_density(pd, pe - h, Phase::Gas)) / (2.0 * h);
            assert!((gd - fd_d).abs() < 1e-6, "{pd} {pe}: {gd} vs {fd_d}");
            assert!((ge - fd_e).abs() < 1e-6, "{pd} {pe}: {ge} vs {fd_e}");
        }
    }
}
