use std::fmt;
use std::sync::Arc;

use super::quadrature::adaptive_simpson;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied scalar law together with its derivative.
#[derive(Clone)]
pub struct CustomLaw {
    pub value: ScalarFn,
    pub derivative: ScalarFn,
}

impl CustomLaw {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomLaw { value: Arc::new(value), derivative: Arc::new(derivative) }
    }
}

impl fmt::Debug for CustomLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomLaw")
    }
}

/// Relative permeability `k_r(s)` on `[0, 1]`.
#[derive(Debug, Clone)]
pub enum RelativePermeability {
    /// `k_r(s) = s^exponent`
    Power { exponent: f64 },
    Custom(CustomLaw),
}

impl RelativePermeability {
    pub fn value(&self, s: f64) -> f64 {
        match self {
            RelativePermeability::Power { exponent } => s.powf(*exponent),
            RelativePermeability::Custom(law) => (law.value)(s),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            RelativePermeability::Power { exponent } => {
                if s == 0.0 && *exponent > 1.0 {
                    0.0
                } else {
                    exponent * s.powf(exponent - 1.0)
                }
            }
            RelativePermeability::Custom(law) => (law.derivative)(s),
        }
    }
}

/// Capillary pressure `p_c(s_l)`, strictly decreasing with `p_c(1) = 0`.
#[derive(Debug, Clone)]
pub enum CapillaryPressure {
    /// `p_c(s) = p_max (1 - s)`
    Linear { p_max: f64 },
    Custom(CustomLaw),
}

impl CapillaryPressure {
    pub fn value(&self, s: f64) -> f64 {
        match self {
            CapillaryPressure::Linear { p_max } => p_max * (1.0 - s),
            CapillaryPressure::Custom(law) => (law.value)(s),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            CapillaryPressure::Linear { p_max } => -p_max,
            CapillaryPressure::Custom(law) => (law.derivative)(s),
        }
    }

    /// Inverse on `[p_c(1), p_c(0)]`, continued linearly with the endpoint
    /// slopes outside that range. No clamping.
    pub fn inverse_extended(&self, pc: f64) -> f64 {
        match self {
            CapillaryPressure::Linear { p_max } => 1.0 - pc / p_max,
            CapillaryPressure::Custom(_) => {
                let (lo, hi) = (self.value(1.0), self.value(0.0));
                if pc <= lo {
                    1.0 + (pc - lo) / self.derivative(1.0)
                } else if pc >= hi {
                    (pc - hi) / self.derivative(0.0)
                } else {
                    // p_c decreasing: p_c(a) >= pc >= p_c(b)
                    let (mut a, mut b) = (0.0_f64, 1.0_f64);
                    while b - a > 1e-13 {
                        let m = 0.5 * (a + b);
                        if self.value(m) >= pc {
                            a = m;
                        } else {
                            b = m;
                        }
                    }
                    0.5 * (a + b)
                }
            }
        }
    }
}

/// Phase density `rho(p)`, increasing and bounded in `[rho_m, rho_M]`.
#[derive(Debug, Clone)]
pub enum Density {
    Constant(f64),
    /// `rho(p) = clamp(reference * exp(p / c2), min, max)`
    ClampedExponential { reference: f64, c2: f64, min: f64, max: f64 },
    Custom(CustomLaw),
}

impl Density {
    pub fn value(&self, p: f64) -> f64 {
        match self {
            Density::Constant(rho) => *rho,
            Density::ClampedExponential { reference, c2, min, max } => {
                (reference * (p / c2).exp()).clamp(*min, *max)
            }
            Density::Custom(law) => (law.value)(p),
        }
    }

    pub fn derivative(&self, p: f64) -> f64 {
        match self {
            Density::Constant(_) => 0.0,
            Density::ClampedExponential { reference, c2, min, max } => {
                let raw = reference * (p / c2).exp();
                if raw <= *min || raw >= *max {
                    0.0
                } else {
                    raw / c2
                }
            }
            Density::Custom(law) => (law.derivative)(p),
        }
    }

    /// `∫_a^b dζ / rho(ζ)`.
    pub fn inverse_integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Density::Constant(rho) => (b - a) / rho,
            Density::ClampedExponential { reference, c2, min, max } => {
                if a > b {
                    return -self.inverse_integral(b, a);
                }
                let p_lo = c2 * (min / reference).ln();
                let p_hi = c2 * (max / reference).ln();
                let mut total = 0.0;
                // below the lower clamp
                if a < p_lo {
                    total += (b.min(p_lo) - a) / min;
                }
                // exponential branch, written with expm1 for small intervals
                let (ea, eb) = (a.max(p_lo), b.min(p_hi));
                if eb > ea {
                    total += -(c2 / reference) * (-ea / c2).exp() * (-(eb - ea) / c2).exp_m1();
                }
                if b > p_hi {
                    total += (b - a.max(p_hi)) / max;
                }
                total
            }
            Density::Custom(law) => {
                let f = |z: f64| 1.0 / (law.value)(z);
                adaptive_simpson(&f, a, b, 1e-13 * (b - a).abs() / (law.value)(a).max(1e-300))
            }
        }
    }
}
