use proptest::prelude::*;

use porflow::assembly::assemble;
use porflow::io::output::{read_csv, write_csv};
use porflow::mesh::{BoundaryTag, DualMesh, PrimalMesh};
use porflow::physics::{DerivedFunctions, FluidModel, Phase, PresetParameters, Tensor, TensorField};
use porflow::scheme::{flux, upwind_saturation, State};

fn preset() -> FluidModel {
    FluidModel::quadratic_linear(2, &PresetParameters::default())
}

fn phase() -> impl Strategy<Value = Phase> {
    prop_oneof![Just(Phase::Liquid), Just(Phase::Gas)]
}

/// Unit square mesh with interior vertices jittered by up to `0.3 h`.
fn jittered_square(n: usize, jitter: &[(f64, f64)]) -> PrimalMesh {
    let base = PrimalMesh::unit_square(n, |_| BoundaryTag::Impervious).unwrap();
    let h = 1.0 / n as f64;
    let mut vertices = base.vertices().to_vec();
    for (i, v) in vertices.iter_mut().enumerate() {
        let interior = v[0] > 0.0 && v[0] < 1.0 && v[1] > 0.0 && v[1] < 1.0;
        if interior {
            let (a, b) = jitter[i % jitter.len()];
            v[0] += 0.3 * h * a;
            v[1] += 0.3 * h * b;
        }
    }
    PrimalMesh::from_parts(2, vertices, base.elements().to_vec(), &[]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flux_is_antisymmetric(
        phase in phase(),
        s_d in 0.0..=1.0f64, s_e in 0.0..=1.0f64,
        p_d in -3.0..3.0f64, p_e in -3.0..3.0f64,
        coupling in -2.0..5.0f64, gravity in -1.0..1.0f64,
    ) {
        let m = preset();
        let forward = flux(&m, phase, s_d, s_e, p_d, p_e, coupling, gravity);
        let backward = flux(&m, phase, s_e, s_d, p_e, p_d, coupling, -gravity);
        prop_assert_eq!(forward, -backward);
    }

    #[test]
    fn interface_density_is_symmetric_and_bracketed(phase in phase(), a in -20.0..20.0f64, b in -20.0..20.0f64) {
        let m = preset();
        let rho = m.interface_density(a, b, phase);
        prop_assert_eq!(rho.to_bits(), m.interface_density(b, a, phase).to_bits());
        let (lo, hi) = {
            let (x, y) = (m.density(phase, a), m.density(phase, b));
            (x.min(y), x.max(y))
        };
        prop_assert!(rho >= lo * (1.0 - 1e-12) && rho <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn upwind_takes_one_of_the_two(s_d in 0.0..=1.0f64, s_e in 0.0..=1.0f64, flow in -1.0..1.0f64) {
        let s = upwind_saturation(s_d, s_e, flow);
        prop_assert!(s == s_d || s == s_e);
        if s_d != s_e {
            prop_assert_eq!(s == s_d, flow <= 0.0);
        }
    }

    #[test]
    fn artificial_pressures_close_to_capillary_pressure(s in 0.0..=1.0f64, p_max in 0.1..10.0f64) {
        let params = PresetParameters { p_max, ..PresetParameters::default() };
        let d = DerivedFunctions::new(FluidModel::quadratic_linear(2, &params), 512);
        let pc = d.model().capillary_pressure(s);
        prop_assert!((d.pbar(s) - d.ptilde(s) - pc).abs() <= 1e-10 * pc.abs().max(1.0));
    }

    #[test]
    fn capillary_inverse_round_trips(s in 0.0..=1.0f64) {
        let m = preset();
        let back = m.capillary_inverse(m.capillary_pressure(s)).unwrap();
        prop_assert!((back - s).abs() < 1e-12);
    }

    #[test]
    fn big_b_is_monotone(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let d = DerivedFunctions::new(preset(), 512);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(d.big_b(lo) <= d.big_b(hi));
    }

    #[test]
    fn stiffness_kills_constants_and_is_symmetric(
        jitter in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..16),
        l11 in 0.5..5.0f64, l22 in 0.5..5.0f64, l12 in -0.4..0.4f64,
    ) {
        let mesh = jittered_square(3, &jitter);
        let dual = DualMesh::build(&mesh);
        let tensor = Tensor::new(2, &[l11, l12, l12, l22]);
        let a = assemble(&mesh, &dual, &TensorField::Constant(tensor)).unwrap();
        let ones = vec![1.0; a.len()];
        let scale = (0..a.len()).map(|d| a.get(d, d).abs()).fold(0.0, f64::max);
        for v in a.apply(&ones) {
            prop_assert!(v.abs() <= 1e-12 * scale);
        }
        for d in 0..a.len() {
            for (e, v) in a.row(d) {
                prop_assert!((a.get(e, d) - v).abs() <= 1e-14 * scale);
            }
        }
        // the CR interpolant of u = x is exact, so its energy is ∫ Λ e_x · e_x
        let u: Vec<f64> = (0..a.len()).map(|d| mesh.side_barycentre(d)[0]).collect();
        prop_assert!((a.quadratic_form(&u) - l11).abs() <= 1e-10 * l11);
    }

    #[test]
    fn csv_round_trip_is_bit_exact(values in prop::collection::vec((any::<f64>(), any::<f64>(), 0.0..=1.0f64), 5)) {
        let mesh = PrimalMesh::unit_square(1, |_| BoundaryTag::Impervious).unwrap();
        prop_assume!(values.iter().all(|(a, b, _)| a.is_finite() && b.is_finite()));
        let state = State {
            p_l: values.iter().map(|v| v.0).collect(),
            p_g: values.iter().map(|v| v.1).collect(),
            s_l: values.iter().map(|v| v.2).collect(),
            step: 0,
            time: 0.0,
        };
        let back = read_csv(&write_csv(&mesh, &state)).unwrap();
        for d in 0..5 {
            prop_assert_eq!(back.p_l[d].to_bits(), state.p_l[d].to_bits());
            prop_assert_eq!(back.p_g[d].to_bits(), state.p_g[d].to_bits());
            prop_assert_eq!(back.s_l[d].to_bits(), state.s_l[d].to_bits());
        }
    }
}
