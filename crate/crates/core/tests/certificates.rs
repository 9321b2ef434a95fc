mod common;

use common::{act, gaussian, rng};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use pyrcert::certificates::{
    check_assumption, lambda_f, monitor_invariants, spectral_quantities, AssumptionInputs, Certificate, Spectra,
};
use pyrcert::gradients::{train, TrainConfig};
use pyrcert::initializers::{init_section31, synthetic_dataset, tune_gain, DeepStyle, InitConfig};
use pyrcert::{certify, linalg, Dataset, Params, Shape};

/// Singular values from the eigenvalues of `A^T A`.
fn gram_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.transpose() * a)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

#[test]
fn deep_layer_spectra_match_eigen_oracle() {
    let mut r = rng(3);
    let w1 = gaussian(&mut r, 2, 6, 1.0);
    let w2 = gaussian(&mut r, 6, 5, 1.0);
    let w3 = gaussian(&mut r, 5, 3, 1.0);
    let p = Params::new(vec![w1, w2, w3.clone()]).unwrap();
    let s = spectral_quantities(&p).unwrap();
    let sv = gram_singular_values(&w3);
    assert!((s.lambda_min[0] - sv[0]).abs() <= 1e-10);
    assert!((s.lambda_bar[2] - sv[2]).abs() <= 1e-10);
}

#[test]
fn lambda_f_of_duplicate_rows_is_zero() {
    let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, -1.0, 0.5]);
    let w1 = gaussian(&mut rng(4), 2, 8, 1.0);
    assert!(lambda_f(&w1, &x, &act(0.5, 1.0)).unwrap() <= 1e-12);
}

#[test]
fn lambda_f_matches_two_by_two_oracle() {
    let x = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 1.1, 0.4]);
    let w1 = gaussian(&mut rng(5), 2, 3, 1.0);
    let f1 = (&x * &w1).map(|v| common::sigma_ref(0.5, 1.0, v));
    let sv = gram_singular_values(&f1.transpose());
    assert!((lambda_f(&w1, &x, &act(0.5, 1.0)).unwrap() - sv[0]).abs() <= 1e-10);
}

#[test]
fn lambda_f_lower_bound_frequency() {
    // lambda_F >= sqrt(n_1 lambda*) / 2 under LeCun W_1 on sphere data
    let (n, d, n1) = (6, 8, 64);
    let a = act(0.5, 1.0);
    let spec =
        pyrcert::lambda_star::HermiteSpec::compute(pyrcert::lambda_star::Nonlinearity::smoothed(&a), 12, 120).unwrap();
    let mut passes = 0;
    for seed in 0..200u64 {
        let data = synthetic_dataset(n, d, 1, 1.0, seed).unwrap();
        let lstar = pyrcert::lambda_star::gram_hermite(data.x(), &spec, 12)
            .unwrap()
            .lambda_min;
        let w1 = pyrcert::initializers::init_lecun(&Shape::new(d, vec![n1, 1]).unwrap(), seed)
            .weight(1)
            .clone();
        if lambda_f(&w1, data.x(), &a).unwrap() >= (n1 as f64 * lstar).sqrt() / 2.0 {
            passes += 1;
        }
    }
    assert!(passes >= 190, "{passes}/200");
}

#[test]
fn degenerate_data_fails_both_conditions() {
    let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    let y = DMatrix::from_element(3, 1, 1.0);
    let data = Dataset::new(x, y).unwrap();
    let shape = Shape::new(2, vec![8, 3, 1]).unwrap();
    let p = init_section31(
        &shape,
        &data,
        &InitConfig::section31(4.0, 0.0, DeepStyle::ScaledIdentity, 1),
    )
    .unwrap();
    let cert = certify(&p, &data, &act(0.5, 1.0)).unwrap();
    assert!(cert.lambda_f <= 1e-12);
    assert!(!cert.assumption_eq8.holds && !cert.assumption_eq9.holds);
    assert!(!cert.holds());
}

#[test]
fn gain_sweep_eventually_satisfies_first_condition() {
    let data = synthetic_dataset(8, 6, 2, 1.0, 2).unwrap();
    let shape = Shape::new(6, vec![12, 5, 4, 2]).unwrap();
    let a = act(0.5, 1.0);
    let mut flipped = None;
    let mut c = 2.0;
    for _ in 0..60 {
        let p = init_section31(
            &shape,
            &data,
            &InitConfig::section31(c, 0.0, DeepStyle::ScaledIdentity, 2),
        )
        .unwrap();
        if certify(&p, &data, &a).unwrap().assumption_eq8.holds {
            flipped = Some(c);
            break;
        }
        c *= 2.0;
    }
    assert!(flipped.is_some());
}

#[test]
fn inflated_labels_break_the_conditions() {
    let shape = Shape::new(6, vec![12, 5, 4, 2]).unwrap();
    let a = act(0.5, 1.0);
    let data = synthetic_dataset(8, 6, 2, 1.0, 2).unwrap();
    let tuned = tune_gain(
        &shape,
        &data,
        &a,
        &InitConfig::section31(2.0, 0.0, DeepStyle::ScaledIdentity, 2),
        60,
    )
    .unwrap()
    .unwrap();
    assert!(tuned.certificate.holds());
    let big = data.with_targets(data.y() * 1e6).unwrap();
    let cert = certify(&tuned.params, &big, &a).unwrap();
    assert!(!cert.assumption_eq8.holds && !cert.assumption_eq9.holds);
}

#[test]
fn two_layer_certificate_is_flagged_and_gamma_free() {
    let data = synthetic_dataset(4, 5, 1, 1.0, 8).unwrap();
    let shape = Shape::new(5, vec![10, 1]).unwrap();
    let p = pyrcert::initializers::init_lecun(&shape, 8);
    let mut alphas = Vec::new();
    for g in [0.1, 0.25, 0.5, 0.75, 0.95] {
        let cert = certify(&p, &data, &act(g, 1.0)).unwrap();
        assert!(cert.empty_product_convention);
        alphas.push(cert.alpha0 / cert.lambda_f.powi(2));
    }
    for a in &alphas {
        assert!((a - 0.25).abs() <= 1e-15);
    }
}

#[test]
fn certificate_json_reparses() {
    let data = synthetic_dataset(5, 4, 2, 1.0, 1).unwrap();
    let shape = Shape::new(4, vec![8, 3, 2]).unwrap();
    let p = init_section31(
        &shape,
        &data,
        &InitConfig::section31(3.0, 0.0, DeepStyle::ScaledIdentity, 1),
    )
    .unwrap();
    let cert = certify(&p, &data, &act(0.5, 1.0)).unwrap();
    let back = Certificate::from_json(&cert.to_json().unwrap()).unwrap();
    assert_eq!(back, cert);
    let json = cert.to_json().unwrap();
    for key in [
        "lambda_bar",
        "lambda_min",
        "lambda_F",
        "phi0",
        "alpha0",
        "Q0",
        "Q1",
        "R",
        "eta_max",
        "assumption_eq8",
        "assumption_eq9",
    ] {
        assert!(json.contains(&format!("\"{key}\"")), "{key}");
    }
}

fn small_certified() -> (Params, Dataset, Certificate) {
    let data = synthetic_dataset(6, 5, 2, 0.1, 4).unwrap();
    let shape = Shape::new(5, vec![10, 4, 3, 2]).unwrap();
    let tuned = tune_gain(
        &shape,
        &data,
        &act(0.5, 1.0),
        &InitConfig::section31(2.0, 0.0, DeepStyle::ScaledIdentity, 4),
        60,
    )
    .unwrap()
    .unwrap();
    (tuned.params, data, tuned.certificate)
}

#[test]
fn certified_run_has_no_violations() {
    let (p, data, cert) = small_certified();
    let mut cfg = TrainConfig::new(cert.default_eta().unwrap(), 3000, 0.0);
    cfg.log_every = 100;
    let log = train(&p, &data, &act(0.5, 1.0), &cfg, Some(&cert)).unwrap();
    assert_eq!(log.certified_step, Some(true));
    let report = monitor_invariants(&log, &cert);
    assert_eq!(report.first_violation, None);
    assert_eq!(report.tally.total_violations(), 0);
    assert_eq!(report.tally.steps_checked, 3001);
    let first = report.rows[0].1;
    assert!(first.0[..4].iter().all(|f| *f == Some(true)));
}

#[test]
fn uncertified_run_report_is_well_formed() {
    let (p, data, cert) = small_certified();
    let mut cfg = TrainConfig::new(100.0 * cert.eta_max.unwrap(), 200, 0.0);
    cfg.log_every = 10;
    let log = train(&p, &data, &act(0.5, 1.0), &cfg, Some(&cert)).unwrap();
    assert_eq!(log.certified_step, Some(false));
    let report = monitor_invariants(&log, &cert);
    assert_eq!(report.rows.len(), log.records.len());
    assert_eq!(report.flag_names.len(), 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weyl_perturbation(seed in any::<u64>(), rows in 1usize..7, cols in 1usize..7, eps in 0f64..2.0) {
        let mut r = rng(seed);
        let a = gaussian(&mut r, rows, cols, 1.0);
        let b = &a + gaussian(&mut r, rows, cols, eps);
        let sa = linalg::singular_values(&a, "a").unwrap();
        let sb = linalg::singular_values(&b, "b").unwrap();
        let gap = linalg::spectral_norm(&(&a - &b), "d").unwrap();
        for (x, y) in sa.iter().zip(&sb) {
            prop_assert!((x - y).abs() <= gap * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn first_condition_slack_grows_with_lambda_f(lf in 1e-3f64..10.0, bump in 1.01f64..4.0, phi0 in 1e-3f64..1e3) {
        let s = Spectra { lambda_bar: vec![1.2, 0.8, 2.0, 1.5], lambda_min: vec![1.5, 1.0] };
        let inputs = |l: f64| AssumptionInputs { spectra: &s, lambda_f: l, x_fro: 3.0, x_spec: 2.0, phi0, gamma: 0.5 };
        let (lo, _) = check_assumption(&inputs(lf));
        let (hi, _) = check_assumption(&inputs(lf * bump));
        prop_assert!(hi.lhs / hi.rhs > lo.lhs / lo.rhs);
    }
}
