use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use porflow::mesh::{load_primal, BoundaryTag, MeshFormat, PrimalMesh};
use porflow::physics::{FluidModel, Phase, PresetParameters};
use porflow::scheme::{Scheme, Sources};
use porflow::solver::{Solver, SolverConfig};

fn mesh_file(name: &str) -> PrimalMesh {
    load_primal(format!("{}/meshes/{name}", env!("CARGO_MANIFEST_DIR")), MeshFormat::Text).unwrap()
}

fn preset() -> FluidModel {
    FluidModel::quadratic_linear(2, &PresetParameters::default())
}

fn constant_sources(production: f64, injection: f64, s_i: f64) -> Sources {
    Sources {
        production: Arc::new(move |_, _| production),
        injection: Arc::new(move |_, _| injection),
        injected_liquid_saturation: Arc::new(move |_, _| s_i),
    }
}

/// Monte Carlo average of `f` over each dual volume: points are sampled
/// uniformly in every element and assigned to the sub-simplex of the side
/// opposite their smallest barycentric coordinate.
fn monte_carlo_averages(mesh: &PrimalMesh, f: impl Fn(f64, f64) -> f64, per_element: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut sum = vec![0.0; mesh.num_sides()];
    let mut count = vec![0usize; mesh.num_sides()];
    for k in 0..mesh.num_elements() {
        let p = mesh.element_points(k);
        let sides = mesh.element_sides(k);
        for _ in 0..per_element {
            let (mut a, mut b): (f64, f64) = (rng.random(), rng.random());
            if a + b > 1.0 {
                (a, b) = (1.0 - a, 1.0 - b);
            }
            let lambda = [1.0 - a - b, a, b];
            let x = lambda[0] * p[0][0] + lambda[1] * p[1][0] + lambda[2] * p[2][0];
            let y = lambda[0] * p[0][1] + lambda[1] * p[1][1] + lambda[2] * p[2][1];
            let i = (0..3).min_by(|&i, &j| lambda[i].total_cmp(&lambda[j])).unwrap();
            sum[sides[i]] += f(x, y);
            count[sides[i]] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
}

#[test]
fn initial_projection_matches_monte_carlo_average() {
    let mesh = mesh_file("two_triangles.txt");
    let scheme = Scheme::new(mesh.clone(), preset()).unwrap();
    let p_l = |x: f64, y: f64| 1.0 + 2.0 * x - 0.5 * y;
    let state = scheme.project_initial(|q| p_l(q[0], q[1]), |q| p_l(q[0], q[1]) + 0.4).unwrap();
    let oracle = monte_carlo_averages(&mesh, p_l, 500_000);
    for d in 0..mesh.num_sides() {
        // standard deviation of p_l over a dual volume is below 1
        assert!((state.p_l[d] - oracle[d]).abs() < 5e-3, "D = {d}: {} vs {}", state.p_l[d], oracle[d]);
        assert!((state.s_l[d] - 0.6).abs() < 1e-12);
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) * f(hi) <= 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn single_cell_injection_matches_root_finder() {
    // a spatially uniform state under uniform sources stays uniform, so every
    // dual volume solves the same scalar balance
    let (f_p, f_i, s_i, dt, phi) = (0.2, 0.5, 1.0, 0.1, 0.2);
    let scheme = Scheme::new(mesh_file("unit_triangle.txt"), preset()).unwrap();
    let (s0, p_l0) = (0.4, 0.0);
    let initial = scheme.project_initial(|_| p_l0, |_| p_l0 + (1.0 - s0)).unwrap();
    let solver = Solver::new(&scheme, SolverConfig::default()).unwrap();
    let (state, report) = solver.solve_timestep(&initial, dt, &constant_sources(f_p, f_i, s_i)).unwrap();

    // liquid: phi (s - s0) / dt + s f_P - s_I f_I = 0 with rho_l = 1
    let s = (s0 + dt * s_i * f_i / phi) / (1.0 + dt * f_p / phi);
    // gas: rho_g(p) (1 - s) (1 + dt f_P / phi) = rho_g(p0) (1 - s0), rho_g = e^{p/10}
    let rho = |p: f64| (p / 10.0_f64).exp();
    let p_g0 = p_l0 + (1.0 - s0);
    let p_g = bisect(|p| rho(p) * (1.0 - s) * (1.0 + dt * f_p / phi) - rho(p_g0) * (1.0 - s0), -5.0, 5.0);
    let p_l = p_g - (1.0 - s);
    for d in 0..state.len() {
        assert!((state.s_l[d] - s).abs() < 1e-9, "{} vs {s}", state.s_l[d]);
        assert!((state.p_g[d] - p_g).abs() < 1e-9, "{} vs {p_g}", state.p_g[d]);
        assert!((state.p_l[d] - p_l).abs() < 1e-9);
    }
    assert!(report.max_principle.passed);
}

#[test]
fn mass_changes_telescope_into_source_contributions() {
    let mesh = mesh_file("square_16.txt").with_boundary_tags(|_| BoundaryTag::Impervious);
    let scheme = Scheme::new(mesh, preset()).unwrap();
    let initial = scheme.project_initial(|_| 0.0, |_| 0.7).unwrap();
    let sources = Sources {
        production: Arc::new(|q, _| if q[0] > 0.75 && q[1] > 0.75 { 1.0 } else { 0.0 }),
        injection: Arc::new(|q, _| if q[0] > 0.75 && q[1] < 0.25 { 1.0 } else { 0.0 }),
        injected_liquid_saturation: Arc::new(|_, _| 1.0),
    };
    let solver = Solver::new(&scheme, SolverConfig::default()).unwrap();
    let dt = 0.01;
    let mut prev = initial;
    let initial_mass = scheme.total_mass(&prev);
    let mut expected = initial_mass;
    for n in 0..10 {
        let (next, _) = solver.solve_timestep(&prev, dt, &sources).unwrap();
        let field = sources.evaluate(&scheme, n as f64 * dt, (n + 1) as f64 * dt).unwrap();
        for (i, phase) in Phase::BOTH.into_iter().enumerate() {
            let p = next.pressure(phase);
            expected[i] += dt
                * (0..scheme.dual().len())
                    .map(|d| {
                        let rho = scheme.model().density(phase, p[d]);
                        scheme.dual().volume(d).measure
                            * rho
                            * (field.injected_saturation(phase, d) * field.injection[d]
                                - next.saturation(phase, d) * field.production[d])
                    })
                    .sum::<f64>();
        }
        let mass = scheme.total_mass(&next);
        for i in 0..2 {
            assert!((mass[i] - expected[i]).abs() <= 1e-8 * initial_mass[i], "step {n} phase {i}: {} vs {}", mass[i], expected[i]);
        }
        prev = next;
    }
    assert!(expected[0] > initial_mass[0], "injection should add liquid");
}
