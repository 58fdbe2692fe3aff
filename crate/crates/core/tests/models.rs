use bmsobs_core::ecm::{discretize_step, simulate, EcmState};
use bmsobs_core::model::{build_original_model, Variant, SOC_INDEX};
use bmsobs_core::ocv::{ocv_eval, OcvPolynomial};
use bmsobs_core::params::{kokam_ocv, kokam_params, KOKAM_OCV_COEFFICIENTS};
use nalgebra::DVector;
use proptest::prelude::*;

#[test]
fn ocv_spot_values() {
    let ocv = kokam_ocv();
    assert!((ocv_eval(&ocv, 0.85, 0) - 4.025).abs() <= 0.005);
    assert!((ocv_eval(&ocv, 0.95, 0) - 4.123).abs() <= 0.005);
    // leading coefficient, printed to three significant figures as 2.83
    let a0 = ocv_eval(&ocv, 0.0, 0);
    assert_eq!(a0, KOKAM_OCV_COEFFICIENTS[0]);
    assert!((a0 - 2.83).abs() < 0.005);
    assert_eq!(ocv_eval(&ocv, 0.4, 13), 0.0);
}

#[test]
fn ocv_slope_matches_finite_differences() {
    let ocv = kokam_ocv();
    let h = 1e-5;
    for k in 0..=90 {
        let z = 0.05 + 0.01 * k as f64;
        let fd = (ocv.eval(z + h, 0) - ocv.eval(z - h, 0)) / (2.0 * h);
        let exact = ocv.eval(z, 1);
        let rel = (fd - exact).abs() / exact.abs().max(1e-3);
        assert!(rel <= 1e-6, "z = {z}: {fd} vs {exact}");
    }
}

#[test]
fn original_model_constants() {
    let p = kokam_params();
    let m = build_original_model(&p, &kokam_ocv()).unwrap();
    let g = m.input_vector();
    assert!((g[0] - 1.0 / 478.0).abs() < 1e-18);
    assert!((g[1] - 1.0 / 18300.0).abs() < 1e-18);
    assert!((g[2] + 1.0 / 2664.0).abs() < 1e-18);
    let j = m.drift_jacobian(&DVector::zeros(3));
    assert!((-1.0 / j[(0, 0)] - 13.623).abs() < 1e-9);
    assert!((-1.0 / j[(1, 1)] - 812.52).abs() < 1e-9);
    assert_eq!(j[(2, 2)], 0.0);
    assert_eq!(m.feedthrough(), -p.rs);
}

#[test]
fn one_hour_at_one_c_is_full_capacity() {
    let p = kokam_params();
    let x = discretize_step(&p, EcmState::at_rest(1.0), 0.74, 3600.0);
    assert!(x.z.abs() < 1e-15);
}

#[test]
fn resting_cell_holds_its_ocv() {
    let p = kokam_params();
    let ocv = kokam_ocv();
    let tr = simulate(&p, &ocv, EcmState::at_rest(0.85), &[0.0; 50], 1.0).unwrap();
    for s in &tr.samples {
        assert_eq!(s.terminal_voltage, ocv.value(0.85));
        assert!((s.terminal_voltage - 4.025).abs() <= 0.005);
    }
}

proptest! {
    #[test]
    fn sub_steps_equal_one_step(
        v1 in -0.1f64..0.1, v2 in -0.1f64..0.1, z in 0.1f64..1.0,
        current in -2.0f64..2.0, dt in 0.1f64..50.0, m in 1usize..40,
    ) {
        let p = kokam_params();
        let x0 = EcmState::new(v1, v2, z);
        let whole = discretize_step(&p, x0, current, dt);
        let mut x = x0;
        for _ in 0..m {
            x = discretize_step(&p, x, current, dt / m as f64);
        }
        for (a, b) in [(x.v1, whole.v1), (x.v2, whole.v2), (x.z, whole.z)] {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn coulomb_counting(currents in proptest::collection::vec(-1.5f64..2.0, 1..300)) {
        let p = kokam_params();
        let tr = simulate(&p, &kokam_ocv(), EcmState::at_rest(0.6), &currents, 1.0).unwrap();
        prop_assume!(tr.saturation_events() == 0);
        // sample k carries the state before current k, so the last sample has seen all but the last current
        let mut z = 0.6;
        for (s, i) in tr.samples.iter().zip(&currents) {
            prop_assert_eq!(s.state.z, z);
            z -= 1.0 * i / p.capacity_q;
        }
        let total: f64 = currents[..currents.len() - 1].iter().sum();
        let last = tr.samples.last().unwrap().state.z;
        prop_assert!((last - (0.6 - total / p.capacity_q)).abs() <= 1e-12);
    }

    #[test]
    fn original_gradient_is_minus_one_minus_one_slope(
        v1 in -0.2f64..0.2, v2 in -0.2f64..0.2, z in 0.0f64..1.0,
    ) {
        let ocv = kokam_ocv();
        let m = build_original_model(&kokam_params(), &ocv).unwrap();
        let x = DVector::from_vec(vec![v1, v2, z]);
        let g = m.output_gradient(&x);
        prop_assert_eq!(g.as_slice(), &[-1.0, -1.0, ocv.eval(z, 1)]);
    }

    #[test]
    fn bias_rows_of_the_drift_are_zero(z in 0.1f64..1.0, b in -0.5f64..0.5) {
        let p = kokam_params();
        for v in [Variant::VoltageBias, Variant::CurrentBias, Variant::DualBias] {
            let m = v.build(&p, &kokam_ocv()).unwrap();
            let mut x = DVector::from_element(m.state_dim(), b);
            x[SOC_INDEX] = z;
            let f = m.drift(&x);
            for i in 3..m.state_dim() {
                prop_assert_eq!(f[i], 0.0);
                prop_assert_eq!(m.input_vector()[i], 0.0);
            }
        }
    }

    #[test]
    fn voltage_bias_shifts_the_output(
        v1 in -0.2f64..0.2, v2 in -0.2f64..0.2, z in 0.0f64..1.0, b in -0.3f64..0.3, u in -2.0f64..2.0,
    ) {
        let p = kokam_params();
        let orig = build_original_model(&p, &kokam_ocv()).unwrap();
        let aug = Variant::VoltageBias.build(&p, &kokam_ocv()).unwrap();
        let y0 = orig.measured_output(&DVector::from_vec(vec![v1, v2, z]), u);
        let y1 = aug.measured_output(&DVector::from_vec(vec![v1, v2, z, b]), u);
        prop_assert!((y1 - (y0 + b)).abs() <= 1e-14);
    }

    #[test]
    fn current_bias_equals_shifted_input(
        delta in -0.3f64..0.3,
        currents in proptest::collection::vec(-1.0f64..2.0, 1..200),
    ) {
        let p = kokam_params();
        let ocv = kokam_ocv();
        let orig = build_original_model(&p, &ocv).unwrap();
        let aug = Variant::CurrentBias.build(&p, &ocv).unwrap();
        let shifted: Vec<f64> = currents.iter().map(|i| i - delta).collect();
        let a = orig.simulate(&DVector::from_vec(vec![0.0, 0.0, 0.7]), &shifted, 1.0).unwrap();
        let b = aug.simulate(&DVector::from_vec(vec![0.0, 0.0, 0.7, delta]), &currents, 1.0).unwrap();
        for ((xa, ya), (xb, yb)) in a.iter().zip(&b) {
            for i in 0..3 {
                prop_assert!((xa[i] - xb[i]).abs() <= 1e-12, "{} vs {}", xa[i], xb[i]);
            }
            prop_assert_eq!(xb[3], delta);
            prop_assert!((ya - yb).abs() <= 1e-11);
        }
    }

    #[test]
    fn dual_gradient_layout(z in 0.0f64..1.0) {
        let p = kokam_params();
        let ocv = kokam_ocv();
        let m = Variant::DualBias.build(&p, &ocv).unwrap();
        let x = DVector::from_vec(vec![0.01, -0.02, z, 0.1, -0.1]);
        let g = m.output_gradient(&x);
        prop_assert_eq!(g.as_slice(), &[-1.0, -1.0, ocv.eval(z, 1), 1.0, p.rs]);
    }
}

#[test]
fn zero_biases_reduce_to_original() {
    let p = kokam_params();
    let ocv = OcvPolynomial::new(KOKAM_OCV_COEFFICIENTS.to_vec()).unwrap();
    let orig = build_original_model(&p, &ocv).unwrap();
    let currents: Vec<f64> = (0..300).map(|k| ((k as f64) * 0.05).sin()).collect();
    let a = orig.simulate(&DVector::from_vec(vec![0.0, 0.0, 0.9]), &currents, 1.0).unwrap();
    for v in [Variant::VoltageBias, Variant::CurrentBias, Variant::DualBias] {
        let m = v.build(&p, &ocv).unwrap();
        let mut x0 = DVector::zeros(m.state_dim());
        x0[SOC_INDEX] = 0.9;
        let b = m.simulate(&x0, &currents, 1.0).unwrap();
        for ((xa, ya), (xb, yb)) in a.iter().zip(&b) {
            assert!((ya - yb).abs() < 1e-12);
            assert!((xa - xb.rows(0, 3)).amax() < 1e-14);
        }
    }
}
