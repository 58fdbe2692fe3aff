use bmsobs_core::model::Variant;
use bmsobs_core::observability::{
    assemble_codistribution, condition_sweep, is_mixed, lie_gradient_closed_form,
    lie_gradient_numeric_detailed, lie_gradient_structural, linearized_observability, rank_test,
    rest_state, soc_grid, Codistribution, RankOptions, Verdict, VectorField, DEFAULT_FD_STEP,
};
use bmsobs_core::ocv::OcvPolynomial;
use bmsobs_core::params::{kokam_ocv, kokam_params};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let mut x = DVector::zeros(n);
    x[0] = rng.random_range(-0.05..0.05);
    x[1] = rng.random_range(-0.05..0.05);
    x[2] = rng.random_range(0.1..1.0);
    for i in 3..n {
        x[i] = rng.random_range(-0.2..0.2);
    }
    x
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

/// All words of length `k` over {f, g}.
fn all_words(k: usize) -> Vec<Vec<VectorField>> {
    (0..1usize << k)
        .map(|bits| {
            (0..k)
                .map(|i| {
                    if bits >> i & 1 == 0 {
                        VectorField::Drift
                    } else {
                        VectorField::Input
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn structural_rows_match_finite_difference_oracle_for_every_word() {
    let p = kokam_params();
    let ocv = kokam_ocv();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for variant in Variant::ALL {
        let m = variant.build(&p, &ocv).unwrap();
        for _ in 0..3 {
            let x = random_state(&mut rng, m.state_dim());
            for k in 0..=3 {
                for word in all_words(k) {
                    let exact = lie_gradient_structural(&m, &word, &x).unwrap();
                    if exact.amax() == 0.0 {
                        continue;
                    }
                    let num = lie_gradient_numeric_detailed(&m, &word, &x, DEFAULT_FD_STEP).unwrap();
                    let e = rel_err(&num.row, &exact);
                    assert!(e < 1e-6, "{variant} {word:?} at {x:?}: {e:e}");
                }
            }
        }
    }
}

#[test]
fn closed_form_rows_match_oracle_up_to_fourth_order() {
    let p = kokam_params();
    let ocv = kokam_ocv();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for variant in Variant::ALL {
        let m = variant.build(&p, &ocv).unwrap();
        for _ in 0..4 {
            let x = random_state(&mut rng, m.state_dim());
            for kind in [VectorField::Drift, VectorField::Input] {
                for k in 1..=4 {
                    let exact = lie_gradient_closed_form(variant, &p, &ocv, kind, k, &x).unwrap();
                    let num = lie_gradient_numeric_detailed(&m, &vec![kind; k], &x, DEFAULT_FD_STEP).unwrap();
                    let e = rel_err(&num.row, &exact);
                    assert!(e < 1e-6, "{variant} {kind}^{k}: {e:e}");
                    assert!(num.relative_error_estimate < 1e-4);
                }
            }
        }
    }
}

#[test]
fn mixed_words_are_constant_on_original_and_voltage_bias_models() {
    let p = kokam_params();
    let ocv = kokam_ocv();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for variant in [Variant::Original, Variant::VoltageBias] {
        let m = variant.build(&p, &ocv).unwrap();
        let states: Vec<_> = (0..5).map(|_| random_state(&mut rng, m.state_dim())).collect();
        for word in (2..=3).flat_map(all_words).filter(|w| is_mixed(w)) {
            for x in &states {
                let r = lie_gradient_structural(&m, &word, x).unwrap();
                assert_eq!(r.amax(), 0.0, "{variant} {word:?}");
            }
        }
    }
}

#[test]
fn mixed_words_depend_on_state_once_current_bias_couples_in() {
    // L_f L_g h = -V''(z) ie / Q^2 for the current-bias model
    let p = kokam_params();
    let ocv = kokam_ocv();
    let m = Variant::CurrentBias.build(&p, &ocv).unwrap();
    let word = [VectorField::Input, VectorField::Drift];
    let a = DVector::from_vec(vec![0.0, 0.0, 0.3, -0.1]);
    let b = DVector::from_vec(vec![0.0, 0.0, 0.8, 0.1]);
    let ra = lie_gradient_structural(&m, &word, &a).unwrap();
    let rb = lie_gradient_structural(&m, &word, &b).unwrap();
    assert!((&ra - &rb).amax() > 1e-3 * ra.amax());
}

#[test]
fn voltage_bias_certificate_rows() {
    let p = kokam_params();
    let ocv = kokam_ocv();
    let m = Variant::VoltageBias.build(&p, &ocv).unwrap();
    let z = 0.5;
    let c = assemble_codistribution(&m, &rest_state(&m, z), 12).unwrap();
    // the first input row whose SOC entry is nonzero completes the certificate
    let k = (1..=11).find(|k| ocv.eval(z, k + 1) != 0.0).unwrap();
    let g_label = format!("dL_g^{k} h");
    let cert = c.select(&["dh", "dL_f^1 h", "dL_f^2 h", &g_label]).unwrap();
    let mat = cert.matrix();
    assert_eq!(mat.row(0).iter().copied().collect::<Vec<_>>(), vec![-1.0, -1.0, ocv.eval(z, 1), 1.0]);
    assert_eq!(mat[(2, 3)], 0.0);
    assert!((mat[(2, 0)] + 1.0 / p.tau1().powi(2)).abs() < 1e-15);
    let r = rank_test(&cert, 4, &RankOptions::default()).unwrap();
    assert_eq!(r.numeric_rank, 4);
}

#[test]
fn voltage_bias_kokam_is_observable_at_midpoint() {
    let m = Variant::VoltageBias.build(&kokam_params(), &kokam_ocv()).unwrap();
    let c = assemble_codistribution(&m, &rest_state(&m, 0.5), 12).unwrap();
    let r = rank_test(&c, 4, &RankOptions::default()).unwrap();
    assert_eq!(r.numeric_rank, 4);
    assert_eq!(r.verdict, Verdict::Observable);
}

#[test]
fn linear_ocv_loses_the_voltage_bias() {
    let ocv = OcvPolynomial::linear(3.4, 0.8).unwrap();
    let m = Variant::VoltageBias.build(&kokam_params(), &ocv).unwrap();
    for z in soc_grid(0.1, 1.0, 0.1).unwrap() {
        let c = assemble_codistribution(&m, &rest_state(&m, z), 12).unwrap();
        let r = rank_test(&c, 4, &RankOptions::default()).unwrap();
        assert_eq!(r.numeric_rank, 3, "z={z}");
        assert_eq!(r.verdict, Verdict::RankDeficient);
    }
}

#[test]
fn linear_ocv_still_reveals_a_current_bias() {
    // With V = a0 + a1 z the bias enters the output as the ramp a1 ie t / Q,
    // which no other state can produce; the output modes {1, t, e^-t/tau1,
    // e^-t/tau2} pin down all four states.
    let p = kokam_params();
    let ocv = OcvPolynomial::linear(3.4, 0.8).unwrap();
    let m = Variant::CurrentBias.build(&p, &ocv).unwrap();
    for z in soc_grid(0.1, 1.0, 0.1).unwrap() {
        let c = assemble_codistribution(&m, &rest_state(&m, z), 12).unwrap();
        assert_eq!(rank_test(&c, 4, &RankOptions::default()).unwrap().numeric_rank, 4);
    }
    // a flat OCV removes the ramp and the rank with it
    let flat = OcvPolynomial::linear(3.4, 0.0).unwrap();
    let m = Variant::CurrentBias.build(&p, &flat).unwrap();
    let c = assemble_codistribution(&m, &rest_state(&m, 0.5), 12).unwrap();
    assert_eq!(rank_test(&c, 4, &RankOptions::default()).unwrap().numeric_rank, 3);
}

#[test]
fn voltage_bias_linearization_is_never_full_rank() {
    let m = Variant::VoltageBias.build(&kokam_params(), &kokam_ocv()).unwrap();
    for z in soc_grid(0.1, 1.0, 0.05).unwrap() {
        let lin = linearized_observability(&m, &rest_state(&m, z), &RankOptions::default()).unwrap();
        assert!(lin.report.numeric_rank <= 3);
        // bias column is [1, 0, 0, 0]
        assert_eq!(lin.matrix.column(3).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
    }
}

#[test]
fn current_and_voltage_bias_verdicts_agree() {
    let p = kokam_params();
    let grid = soc_grid(0.1, 1.0, 0.05).unwrap();
    let ocv = kokam_ocv();
    let opts = RankOptions::default();
    let v = condition_sweep(Variant::VoltageBias, &p, &ocv, &grid, 12, &opts).unwrap();
    let c = condition_sweep(Variant::CurrentBias, &p, &ocv, &grid, 12, &opts).unwrap();
    for (a, b) in v.iter().zip(&c) {
        assert_eq!(a.nonlinear.numeric_rank, b.nonlinear.numeric_rank, "z={}", a.z);
        assert_eq!(a.nonlinear.verdict.is_full_rank(), b.nonlinear.verdict.is_full_rank());
    }
}

#[test]
fn original_sweep_has_full_nonlinear_and_linearized_rank() {
    let pts = condition_sweep(
        Variant::Original,
        &kokam_params(),
        &kokam_ocv(),
        &soc_grid(0.1, 1.0, 0.05).unwrap(),
        12,
        &RankOptions::default(),
    )
    .unwrap();
    for pt in pts {
        assert_eq!(pt.nonlinear.numeric_rank, 3);
        assert_eq!(pt.linearized.numeric_rank, 3);
    }
}

/// `a0 + a1 z + c (z - z0)^m` expanded into ascending monomial coefficients.
fn shifted_power(a0: f64, a1: f64, c: f64, z0: f64, m: usize) -> Vec<f64> {
    let mut coeffs = vec![0.0; m.max(1) + 1];
    let mut binom = 1.0;
    for j in 0..=m {
        coeffs[j] += c * binom * (-z0).powi((m - j) as i32);
        binom = binom * (m - j) as f64 / (j + 1) as f64;
    }
    coeffs[0] += a0;
    coeffs[1] += a1;
    coeffs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rank_is_invariant_to_row_scaling_and_order(
        seed in any::<u64>(),
        z in 0.1f64..1.0,
        scales in proptest::collection::vec(1e-3f64..1e3, 25),
    ) {
        let m = Variant::VoltageBias.build(&kokam_params(), &kokam_ocv()).unwrap();
        let c = assemble_codistribution(&m, &rest_state(&m, z), 12).unwrap();
        let base = rank_test(&c, 4, &RankOptions::default()).unwrap();
        let mut rows = c.rows().to_vec();
        for (r, s) in rows.iter_mut().zip(&scales) {
            r.gradient *= *s;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..rows.len()).rev() {
            rows.swap(i, rng.random_range(0..=i));
        }
        let shuffled = Codistribution::new(c.evaluation_point().clone(), rows).unwrap();
        let r = rank_test(&shuffled, 4, &RankOptions::default()).unwrap();
        prop_assert_eq!(r.numeric_rank, base.numeric_rank);
        prop_assert_eq!(r.verdict, base.verdict);
        prop_assert!((r.condition_number / base.condition_number - 1.0).abs() < 1e-8);
    }

    #[test]
    fn original_rank_three_iff_some_ocv_derivative_survives(
        z0 in 0.15f64..0.95,
        order in 1usize..=8,
        c in prop_oneof![-2.0f64..-0.1, 0.1f64..2.0],
    ) {
        let p = kokam_params();
        let with_curve = OcvPolynomial::new(shifted_power(3.5, 0.0, c, z0, order)).unwrap();
        let m = Variant::Original.build(&p, &with_curve).unwrap();
        let cd = assemble_codistribution(&m, &rest_state(&m, z0), 12).unwrap();
        prop_assert_eq!(rank_test(&cd, 3, &RankOptions::default()).unwrap().numeric_rank, 3);

        let flat = OcvPolynomial::new(vec![3.5, 0.0, 0.0]).unwrap();
        let m = Variant::Original.build(&p, &flat).unwrap();
        let cd = assemble_codistribution(&m, &rest_state(&m, z0), 12).unwrap();
        prop_assert_eq!(rank_test(&cd, 3, &RankOptions::default()).unwrap().numeric_rank, 2);
    }

    #[test]
    fn voltage_bias_rank_four_iff_some_curvature_survives(
        z0 in 0.15f64..0.95,
        order in 2usize..=8,
        slope in 0.1f64..1.5,
        c in prop_oneof![-2.0f64..-0.1, 0.1f64..2.0],
    ) {
        let p = kokam_params();
        let curved = OcvPolynomial::new(shifted_power(3.5, slope, c, z0, order)).unwrap();
        let m = Variant::VoltageBias.build(&p, &curved).unwrap();
        let cd = assemble_codistribution(&m, &rest_state(&m, z0), 12).unwrap();
        prop_assert_eq!(rank_test(&cd, 4, &RankOptions::default()).unwrap().numeric_rank, 4);

        let straight = OcvPolynomial::linear(3.5, slope).unwrap();
        let m = Variant::VoltageBias.build(&p, &straight).unwrap();
        let cd = assemble_codistribution(&m, &rest_state(&m, z0), 12).unwrap();
        prop_assert_eq!(rank_test(&cd, 4, &RankOptions::default()).unwrap().numeric_rank, 3);
    }
}
