mod common;

use common::{act, dense_gradient, dense_jacobian, fd_gradient, instance, random_dims, vec_cm};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use pyrcert::gradients::{jacobian_block, pl_lower_bound, train, TrainConfig, TrainOutcome};
use pyrcert::{forward, grad, linalg, network, Dataset};

fn mixed_rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[test]
fn gradient_matches_finite_differences() {
    let (params, data) = instance(7, 4, 3, &[5, 3, 2], 1.0);
    let g = grad(&params, &data, &act(0.5, 1.0)).unwrap();
    for l in 1..=3 {
        let fd = fd_gradient(&params, &data, 0.5, 1.0, l, 1e-6);
        for (x, y) in g.block(l).iter().zip(fd.iter()) {
            assert!(mixed_rel(*x, *y) <= 1e-5, "layer {l}: {x} vs {y}");
        }
    }
}

#[test]
fn gradient_matches_dense_kronecker_formula() {
    let (params, data) = instance(7, 4, 3, &[5, 3, 2], 1.0);
    let g = grad(&params, &data, &act(0.5, 1.0)).unwrap();
    for l in 1..=3 {
        let dense = dense_gradient(params.weights(), data.x(), data.y(), 0.5, 1.0, l);
        assert!((vec_cm(g.block(l)) - dense).amax() <= 1e-10);
    }
}

#[test]
fn gradient_norm_total() {
    let (params, data) = instance(8, 4, 3, &[5, 3, 2], 1.0);
    let g = grad(&params, &data, &act(0.5, 1.0)).unwrap();
    let direct: f64 = g.blocks().iter().map(|b| b.norm_squared()).sum();
    assert!((g.sq_norm() - direct).abs() <= 1e-12 * direct);
    assert_eq!(g.flatten().len(), params.num_params());
}

#[test]
fn output_block_has_no_slope_factors() {
    let (params, data) = instance(9, 4, 3, &[5, 3, 2], 1.0);
    let a = act(0.5, 1.0);
    let trace = forward(&params, &data, &a).unwrap();
    let jac = jacobian_block(&params, &data, &a, 3).unwrap();
    let expected = common::kron(&DMatrix::identity(2, 2), trace.layer_output(2));
    assert!((jac - expected).amax() <= 1e-14);
}

#[test]
fn jacobian_matches_dense_formula_and_gradient() {
    let a = act(0.5, 1.0);
    for seed in 0..10 {
        let (n, d, widths) = random_dims(seed, 6, 5, 4);
        let (params, data) = instance(seed, n, d, &widths, 1.0);
        let trace = forward(&params, &data, &a).unwrap();
        let resid = network::vec(&network::residual(&trace, &data));
        let g = grad(&params, &data, &a).unwrap();
        for l in 1..=params.depth() {
            let jac = jacobian_block(&params, &data, &a, l).unwrap();
            let (r, c) = params.weight(l).shape();
            assert_eq!(jac.shape(), (n * params.output_dim(), r * c));
            let dense = dense_jacobian(params.weights(), data.x(), 0.5, 1.0, l);
            assert!((&jac - dense).amax() <= 1e-10);
            assert!((jac.transpose() * &resid - vec_cm(g.block(l))).amax() <= 1e-10);
        }
    }
}

#[test]
fn jacobian_column_matches_finite_difference() {
    let (params, data) = instance(11, 4, 3, &[5, 3, 2], 1.0);
    let a = act(0.5, 1.0);
    let h = 1e-6;
    for l in 1..=3 {
        let jac = jacobian_block(&params, &data, &a, l).unwrap();
        let (r, c) = params.weight(l).shape();
        for j in 0..r * c {
            let (row, col) = (j % r, j / r);
            let mut plus = params.weights().to_vec();
            plus[l - 1][(row, col)] += h;
            let mut minus = params.weights().to_vec();
            minus[l - 1][(row, col)] -= h;
            let fp = common::naive_forward(&plus, data.x(), 0.5, 1.0).1.pop().unwrap();
            let fm = common::naive_forward(&minus, data.x(), 0.5, 1.0).1.pop().unwrap();
            let fd = vec_cm(&((fp - fm) / (2.0 * h)));
            for (x, y) in jac.column(j).iter().zip(fd.iter()) {
                assert!(mixed_rel(*x, *y) <= 1e-5);
            }
        }
    }
}

#[test]
fn jacobian_rejects_layer_out_of_range() {
    let (params, data) = instance(1, 2, 2, &[3, 2], 1.0);
    assert!(jacobian_block(&params, &data, &act(0.5, 1.0), 0).is_err());
    assert!(jacobian_block(&params, &data, &act(0.5, 1.0), 3).is_err());
}

#[test]
fn pl_bound_two_layers_is_empty_product() {
    let (params, data) = instance(12, 3, 3, &[4, 2], 1.0);
    let a = act(0.5, 1.0);
    let trace = forward(&params, &data, &a).unwrap();
    let expected =
        linalg::row_sigma_min(trace.layer_output(1), "F1").unwrap() * network::residual(&trace, &data).norm();
    assert_eq!(pl_lower_bound(&trace, &params, &data, &a).unwrap(), expected);
}

#[test]
fn pl_bound_below_second_layer_gradient() {
    let a = act(0.5, 1.0);
    for seed in 0..30 {
        let (params, data) = instance(seed, 4, 3, &[6, 5, 3, 2], 1.0);
        let trace = forward(&params, &data, &a).unwrap();
        let g = grad(&params, &data, &a).unwrap();
        let bound = pl_lower_bound(&trace, &params, &data, &a).unwrap();
        assert!(bound <= g.block(2).norm() * (1.0 + 1e-12), "seed {seed}");
    }
}

#[test]
fn gradient_norm_bound() {
    let a = act(0.3, 2.0);
    for seed in 0..50 {
        let (n, d, widths) = random_dims(seed, 8, 6, 4);
        let (params, data) = instance(seed, n, d, &widths, 1.5);
        let trace = forward(&params, &data, &a).unwrap();
        let r = network::residual(&trace, &data).norm();
        let norms: Vec<f64> = params
            .weights()
            .iter()
            .map(|w| linalg::spectral_norm(w, "W").unwrap())
            .collect();
        let g = grad(&params, &data, &a).unwrap();
        for l in 1..=params.depth() {
            let others: f64 = norms
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != l - 1)
                .map(|(_, v)| v)
                .product();
            assert!(g.block(l).norm() <= data.x().norm() * others * r * (1.0 + 1e-12) + 1e-12);
        }
    }
}

#[test]
fn zero_step_keeps_parameters() {
    let (params, data) = instance(13, 4, 3, &[5, 3, 2], 1.0);
    let log = train(&params, &data, &act(0.5, 1.0), &TrainConfig::new(0.0, 20, 0.0), None).unwrap();
    assert_eq!(log.final_params, params);
    assert!(log.records.iter().all(|r| r.loss == log.initial_loss));
    assert_eq!(log.records.len(), 21);
}

#[test]
fn tiny_problem_converges() {
    let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let y = DMatrix::from_row_slice(2, 1, &[0.5, -0.3]);
    let data = Dataset::new(x, y).unwrap();
    let (params, _) = instance(14, 2, 2, &[4, 1], 1.0);
    let mut cfg = TrainConfig::new(0.05, 100_000, 1e-10);
    cfg.log_every = 1000;
    let log = train(&params, &data, &act(0.5, 1.0), &cfg, None).unwrap();
    assert_eq!(log.outcome, TrainOutcome::Converged);
    assert!(log.final_loss <= 1e-10);
    assert!(log.steps <= 100_000);
}

#[test]
fn log_indices_increase_and_fit_budget() {
    let (params, data) = instance(15, 4, 3, &[5, 3, 2], 1.0);
    let mut cfg = TrainConfig::new(1e-3, 57, 0.0);
    cfg.log_every = 10;
    let log = train(&params, &data, &act(0.5, 1.0), &cfg, None).unwrap();
    assert!(log.records.len() as u64 <= cfg.max_steps + 1);
    assert!(log.records.windows(2).all(|w| w[0].k < w[1].k));
    assert_eq!(log.records.last().unwrap().k, 57);
}

#[test]
fn huge_step_diverges_with_log() {
    let (params, data) = instance(16, 4, 3, &[5, 3, 2], 2.0);
    let log = train(
        &params,
        &data,
        &act(0.5, 1.0),
        &TrainConfig::new(1e3, 10_000, 0.0),
        None,
    )
    .unwrap();
    assert!(matches!(log.outcome, TrainOutcome::Diverged { .. }));
    assert!(!log.records.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn jacobian_transpose_residual_is_gradient(seed in any::<u64>()) {
        let (n, d, widths) = random_dims(seed, 5, 4, 4);
        let (params, data) = instance(seed, n, d, &widths, 1.0);
        let a = act(0.5, 1.0);
        let trace = forward(&params, &data, &a).unwrap();
        let resid: DVector<f64> = network::vec(&network::residual(&trace, &data));
        let g = grad(&params, &data, &a).unwrap();
        for l in 1..=params.depth() {
            let jac = jacobian_block(&params, &data, &a, l).unwrap();
            prop_assert!((jac.transpose() * &resid - network::vec(g.block(l))).amax() <= 1e-10);
        }
    }
}
