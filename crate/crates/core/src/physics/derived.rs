use super::{FluidModel, Phase, PhysicsError, SATURATION_SLACK};

pub const DEFAULT_TABLE_RESOLUTION: usize = 4096;

/// Tabulated artificial pressures `p̄`, `p̃` and capillary term `B` on a
/// uniform saturation grid.
///
/// Nodes are accumulated with one Simpson panel per cell; values between
/// nodes add a Simpson panel over the partial cell, so the tables are only
/// a starting point and any `s` is evaluated to quadrature accuracy.
///
/// The additive constant of `p̃` is chosen so that `p̄(s) - p̃(s) = p_c(s)`,
/// i.e. `p = p_l + p̄(s_l) = p_g + p̃(s_l)` holds identically.
#[derive(Debug, Clone)]
pub struct DerivedFunctions {
    model: FluidModel,
    nodes: usize,
    pbar: Vec<f64>,
    ptilde: Vec<f64>,
    big_b: Vec<f64>,
    holder_exponent: f64,
}

impl DerivedFunctions {
    pub fn new(model: FluidModel, resolution: usize) -> Self {
        let nodes = resolution.max(2);
        let mut out = DerivedFunctions {
            model,
            nodes,
            pbar: vec![0.0; nodes],
            ptilde: vec![0.0; nodes],
            big_b: vec![0.0; nodes],
            holder_exponent: 1.0,
        };
        out.ptilde[0] = -out.model.capillary_pressure(0.0);
        for i in 1..nodes {
            let (a, b) = (out.node(i - 1), out.node(i));
            out.pbar[i] = out.pbar[i - 1] + panel(&|s| out.pbar_integrand(s), a, b);
            out.ptilde[i] = out.ptilde[i - 1] + panel(&|s| out.ptilde_integrand(s), a, b);
            out.big_b[i] = out.big_b[i - 1] + panel(&|s| out.gamma(s), a, b);
        }
        out.holder_exponent = out.estimate_holder_exponent();
        out
    }

    pub fn model(&self) -> &FluidModel {
        &self.model
    }

    pub fn resolution(&self) -> usize {
        self.nodes
    }

    fn node(&self, i: usize) -> f64 {
        i as f64 / (self.nodes - 1) as f64
    }

    fn pbar_integrand(&self, s: f64) -> f64 {
        let m = &self.model;
        m.mobility(Phase::Gas, 1.0 - s) / m.total_mobility(s) * m.capillary_derivative(s)
    }

    fn ptilde_integrand(&self, s: f64) -> f64 {
        let m = &self.model;
        -m.mobility(Phase::Liquid, s) / m.total_mobility(s) * m.capillary_derivative(s)
    }

    /// `gamma(s) = -M_l M_g p_c' / M`, nonnegative and zero at both ends.
    pub fn gamma(&self, s: f64) -> f64 {
        let m = &self.model;
        let ml = m.mobility(Phase::Liquid, s);
        let mg = m.mobility(Phase::Gas, 1.0 - s);
        -ml * mg / m.total_mobility(s) * m.capillary_derivative(s)
    }

    fn lookup(&self, table: &[f64], integrand: impl Fn(f64) -> f64, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        let pos = s * (self.nodes - 1) as f64;
        let i = (pos.floor() as usize).min(self.nodes - 2);
        let a = self.node(i);
        table[i] + panel(&integrand, a, s)
    }

    fn check_saturation(s: f64) -> Result<f64, PhysicsError> {
        if !(-SATURATION_SLACK..=1.0 + SATURATION_SLACK).contains(&s) {
            return Err(PhysicsError::Domain { quantity: "saturation", value: s, lo: 0.0, hi: 1.0 });
        }
        Ok(s.clamp(0.0, 1.0))
    }

    /// `p̄(s) = ∫_0^s M_g/M p_c'`; saturations outside `[0,1]` are clamped.
    pub fn pbar(&self, s: f64) -> f64 {
        self.lookup(&self.pbar, |z| self.pbar_integrand(z), s)
    }

    /// `p̃(s) = -p_c(0) - ∫_0^s M_l/M p_c'`; saturations outside `[0,1]` are clamped.
    pub fn ptilde(&self, s: f64) -> f64 {
        self.lookup(&self.ptilde, |z| self.ptilde_integrand(z), s)
    }

    /// `B(s) = ∫_0^s gamma`; saturations outside `[0,1]` are clamped.
    pub fn big_b(&self, s: f64) -> f64 {
        self.lookup(&self.big_b, |z| self.gamma(z), s)
    }

    /// `B(s)` with a domain check on `s`.
    pub fn big_b_checked(&self, s: f64) -> Result<f64, PhysicsError> {
        Ok(self.big_b(Self::check_saturation(s)?))
    }

    pub fn big_b_max(&self) -> f64 {
        self.big_b[self.nodes - 1]
    }

    /// Inverse of `B` on `[0, B(1)]` by bracketing in the table and bisecting.
    pub fn big_b_inverse(&self, b: f64) -> Result<f64, PhysicsError> {
        let top = self.big_b_max();
        let slack = SATURATION_SLACK * top.max(f64::MIN_POSITIVE);
        if !(b >= -slack && b <= top + slack) {
            return Err(PhysicsError::Domain { quantity: "B", value: b, lo: 0.0, hi: top });
        }
        let b = b.clamp(0.0, top);
        // first node with table value >= b
        let hi_node = self.big_b.partition_point(|&v| v < b).min(self.nodes - 1);
        if self.big_b[hi_node] == b {
            // flat stretches: take the leftmost node reaching b
            return Ok(self.node(hi_node));
        }
        let (mut lo, mut hi) = (self.node(hi_node.saturating_sub(1)), self.node(hi_node));
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.big_b(mid) < b {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `p = p_l + p̄(s_l)`
    pub fn global_pressure(&self, p_l: f64, s_l: f64) -> Result<f64, PhysicsError> {
        Ok(p_l + self.pbar(Self::check_saturation(s_l)?))
    }

    /// `p = p_g + p̃(s_l)`
    pub fn global_pressure_from_gas(&self, p_g: f64, s_l: f64) -> Result<f64, PhysicsError> {
        Ok(p_g + self.ptilde(Self::check_saturation(s_l)?))
    }

    /// Estimated Hölder exponent of `B^{-1}`, from the power-law growth of
    /// `B` next to both endpoints. Metadata only.
    pub fn holder_exponent(&self) -> f64 {
        self.holder_exponent
    }

    fn estimate_holder_exponent(&self) -> f64 {
        let (e1, e2) = (1e-3, 2e-3);
        let top = self.big_b_max();
        let growth = |lo: f64, hi: f64| {
            if lo > 0.0 && hi > lo {
                (hi / lo).ln() / 2f64.ln()
            } else {
                1.0
            }
        };
        let k0 = growth(self.big_b(e1), self.big_b(e2));
        let k1 = growth(top - self.big_b(1.0 - e1), top - self.big_b(1.0 - e2));
        1.0 / k0.max(k1).max(1.0)
    }
}

#[inline]
fn panel(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

#[cfg(test)]
mod tests {
    use super::super::PresetParameters;
    use super::*;

    fn derived() -> DerivedFunctions {
        DerivedFunctions::new(FluidModel::quadratic_linear(2, &PresetParameters::default()), DEFAULT_TABLE_RESOLUTION)
    }

    #[test]
    fn endpoint_values() {
        let d = derived();
        assert_eq!(d.big_b(0.0), 0.0);
        assert_eq!(d.pbar(0.0), 0.0);
        assert_eq!(d.gamma(0.0), 0.0);
        assert_eq!(d.gamma(1.0), 0.0);
        assert_eq!(d.global_pressure(2.5, 0.0).unwrap(), 2.5);
        assert!(d.global_pressure(0.0, 1.1).is_err());
        assert!(d.big_b_checked(-0.01).is_err());
    }

    #[test]
    fn artificial_pressures_differ_by_capillary_pressure() {
        let d = derived();
        for k in 0..=1000 {
            let s = k as f64 / 1000.0;
            let pc = d.model().capillary_pressure(s);
            let diff = d.pbar(s) - d.ptilde(s);
            assert!((diff - pc).abs() <= 1e-10 * pc.abs().max(1.0), "s = {s}");
            let via_l = d.global_pressure(0.3 - pc, s).unwrap();
            let via_g = d.global_pressure_from_gas(0.3, s).unwrap();
            assert!((via_l - via_g).abs() < 1e-10);
        }
    }

    #[test]
    fn b_inverse_endpoints_and_range() {
        let d = derived();
        assert_eq!(d.big_b_inverse(0.0).unwrap(), 0.0);
        assert!((d.big_b_inverse(d.big_b_max()).unwrap() - 1.0).abs() < 1e-12);
        assert!(d.big_b_inverse(-1.0).is_err());
        assert!(d.big_b_inverse(d.big_b_max() * 1.01).is_err());
    }

    #[test]
    fn holder_exponent_of_quadratic_mobilities() {
        // gamma ~ s^2 near both ends, so B ~ s^3 and B^{-1} is 1/3-Hölder
        let theta = derived().holder_exponent();
        assert!((theta - 1.0 / 3.0).abs() < 0.01, "{theta}");
    }
}
