mod common;

use common::random_field;
use layerflow::layer::{recover_pressure_c, run_solver, step};
use layerflow::problems::{model1, model2, ModelParams};
use layerflow::stochastic::generate_path;
use layerflow::{LayerState, Method, MethodParams, PathSummary, SpectralField, WienerPath};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The exact model-2 velocity carries its own pressure through the advection route.
    #[test]
    fn exact_model2_velocity_recovers_exact_pressure(
        t in 0.0f64..3.0,
        w in -3.0f64..3.0,
        integral in -4.0f64..4.0,
        g1 in -1.0f64..1.0,
        g2 in -1.0f64..1.0,
    ) {
        let problem = model2(ModelParams::standard(), [g1, g2]).unwrap();
        let exact = problem.exact.clone().unwrap();
        let summary = PathSummary::new(vec![w], integral);
        let v = exact.velocity_at(t, &summary);
        let zero = SpectralField::vector_zeros(v.cutoff(), v.period());
        let p = recover_pressure_c(&v, &zero).unwrap();
        let reference = exact.pressure_at(t, &summary).resample(p.cutoff()).unwrap();
        prop_assert!(p.sub(&reference).unwrap().max_abs_coeff() <= 1e-14);
    }

    /// Model-1 pressure follows from the same route for every `w(t)`.
    #[test]
    fn exact_model1_velocity_recovers_exact_pressure(t in 0.0f64..3.0, w in -3.0f64..3.0) {
        let problem = model1(ModelParams::standard()).unwrap();
        let exact = problem.exact.clone().unwrap();
        let summary = PathSummary::new(vec![w], 0.0);
        let v = exact.velocity_at(t, &summary);
        let zero = SpectralField::vector_zeros(v.cutoff(), v.period());
        let p = recover_pressure_c(&v, &zero).unwrap();
        let reference = exact.pressure_at(t, &summary).resample(p.cutoff()).unwrap();
        prop_assert!(p.sub(&reference).unwrap().max_abs_coeff() <= 1e-14);
    }

    /// Gradient part of the split has a potential that differentiates back to it.
    #[test]
    fn gradient_part_is_a_gradient(seed in 0u64..1000) {
        let u = random_field(seed, 4, 4, 2, false);
        let pair = u.leray_project().unwrap();
        let g = pair.gradient_part.potential_of_gradient().unwrap();
        let back = g.gradient().unwrap();
        prop_assert!(back.sub(&pair.gradient_part).unwrap().max_abs_coeff() <= 1e-14);
        let again = pair.solenoidal.project().unwrap();
        prop_assert!(again.sub(&pair.solenoidal).unwrap().max_abs_coeff() <= 1e-15);
    }

    /// From rest the first layer is the noise increment for every method.
    #[test]
    fn first_step_from_rest_is_the_noise_increment(dw in -1.0f64..1.0, h in 0.001f64..0.3) {
        let problem = model1(ModelParams::standard()).unwrap();
        let gamma = (problem.noise)(0.0);
        let cutoff = gamma[0].cutoff();
        let rest = LayerState::new(0, 0.0, SpectralField::vector_zeros(cutoff, 1.0));
        let f = (problem.forcing)(0.0);
        let expected = gamma[0].scaled(dw);
        for method in Method::ALL {
            let params = MethodParams::new(0.1, h, cutoff, method).unwrap();
            let next = step(&rest, &f, &gamma, &[dw], &params).unwrap();
            prop_assert!(next.velocity.sub(&expected).unwrap().max_abs_coeff() <= 1e-16);
        }
    }
}

#[test]
fn saved_paths_drive_identical_runs() {
    let dir = tempfile::TempDir::new().unwrap();
    let file = dir.path().join("path.csv");
    let path = generate_path(1, 3.0, 60, 11, 2, true).unwrap();
    path.save(&file).unwrap();
    let loaded = WienerPath::load(&file).unwrap();
    let problem = model2(ModelParams::standard(), [0.5, 0.2]).unwrap();
    let params = MethodParams::new(0.1, 0.05, 2, Method::B).unwrap();
    let a = run_solver(&problem, &params, &path).unwrap();
    let b = run_solver(&problem, &params, &loaded).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.velocity, y.velocity);
        assert_eq!(x.pressure, y.pressure);
    }
}

#[test]
fn every_layer_of_a_run_carries_pressure() {
    let problem = model1(ModelParams::standard()).unwrap();
    let path = generate_path(1, 3.0, 15, 4, 0, false).unwrap();
    for method in Method::ALL {
        let params = MethodParams::new(0.1, 0.2, 2, method).unwrap();
        let layers = run_solver(&problem, &params, &path).unwrap();
        assert_eq!(layers.len(), 16);
        for (k, s) in layers.iter().enumerate() {
            assert_eq!(s.k, k);
            assert!((s.t - 0.2 * k as f64).abs() < 1e-12);
            assert!(s.pressure.as_ref().is_some_and(|p| p.is_finite()));
        }
    }
}
