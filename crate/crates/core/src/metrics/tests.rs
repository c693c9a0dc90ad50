use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::*;
use crate::envs::StateEncoding;
use crate::gp::{ExactGp, GpModel, KernelHyperparams, TransitionDataset};
use crate::rng_from_seed;

fn toy_model(n: usize, seed: u64) -> GpModel {
    let enc = StateEncoding::new(2, &[]);
    let mut rng = rng_from_seed(seed);
    let mut ds = TransitionDataset::default();
    for _ in 0..n {
        let s: Vec<f64> = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let a = vec![rng.random_range(-1.0..1.0)];
        let next = vec![s[0] + 0.1 * s[1], s[1] + 0.1 * (s[0].sin() + a[0])];
        ds.push(&enc, &s, &a, &next);
    }
    let hps = vec![
        KernelHyperparams::new(&[0.8, 1.1, 0.9], 1.3, 0.05).unwrap(),
        KernelHyperparams::new(&[1.2, 0.7, 1.5], 0.9, 0.02).unwrap(),
    ];
    GpModel::with_hyperparams(&ds, &enc, 1, hps).unwrap()
}

/// Refits each output GP without point `i` and predicts densely.
fn brute_loo(model: &GpModel, q: &[f64], i: usize) -> Vec<(f64, f64)> {
    let keep: Vec<usize> = (0..model.len()).filter(|&j| j != i).collect();
    let qm = DMatrix::from_row_slice(1, q.len(), q);
    model
        .outputs()
        .iter()
        .map(|gp| {
            let x = gp.inputs().select_rows(&keep);
            let y = DVector::from_iterator(keep.len(), keep.iter().map(|&j| gp.targets()[j]));
            let sub = ExactGp::condition(x, y, gp.hyperparams().clone()).unwrap();
            let (m, c) = sub.predict(&qm, false).unwrap();
            (m[0], c.variances()[0])
        })
        .collect()
}

#[test]
fn rank_one_downdate_matches_refit() {
    let model = toy_model(25, 1);
    let ws = LooWorkspace::new(&model).unwrap();
    let q = model.featurize(&[0.3, -0.2], &[0.5]);
    for i in 0..model.len() {
        let fast = ws.loo_posterior(&q, i).unwrap();
        let slow = brute_loo(&model, &q, i);
        for ((m1, v1), (m2, v2)) in fast.iter().zip(&slow) {
            assert!((m1 - m2).abs() < 1e-8, "mean {m1} vs {m2}");
            assert!((v1 - v2).abs() < 1e-8, "var {v1} vs {v2}");
        }
    }
}

#[test]
fn zeta_matches_brute_force_average() {
    let model = toy_model(20, 2);
    let ws = LooWorkspace::new(&model).unwrap();
    let q = model.featurize(&[-0.4, 0.6], &[-0.2]);
    let qm = DMatrix::from_row_slice(1, q.len(), &q);
    let post = model.predict(&qm, false).unwrap();
    let mut expected = 0.0;
    for i in 0..model.len() {
        for (d, (m, v)) in brute_loo(&model, &q, i).into_iter().enumerate() {
            expected += kl_gaussian(m, v, post.mean[d][0], post.cov[d].variances()[0]).unwrap();
        }
    }
    expected /= model.len() as f64;
    let got = ws.zeta(&q).unwrap();
    assert!((got - expected).abs() <= 1e-8 * expected.max(1.0), "{got} vs {expected}");
}

#[test]
fn two_point_downdate_matches_one_point_fit() {
    let enc = StateEncoding::new(1, &[]);
    let mut ds = TransitionDataset::default();
    ds.push(&enc, &[0.0], &[0.0], &[0.5]);
    ds.push(&enc, &[1.0], &[0.0], &[1.2]);
    let hp = KernelHyperparams::new(&[1.0, 1.0], 2.0, 0.1).unwrap();
    let model = GpModel::with_hyperparams(&ds, &enc, 1, vec![hp]).unwrap();
    let ws = LooWorkspace::new(&model).unwrap();
    let q = model.featurize(&[0.3], &[0.0]);
    let fast = ws.loo_posterior(&q, 0).unwrap();
    let slow = brute_loo(&model, &q, 0);
    assert!((fast[0].0 - slow[0].0).abs() < 1e-10);
    assert!((fast[0].1 - slow[0].1).abs() < 1e-10);
}

#[test]
fn zeta_needs_two_points() {
    let enc = StateEncoding::new(1, &[]);
    let mut ds = TransitionDataset::default();
    ds.push(&enc, &[0.0], &[0.0], &[0.5]);
    let hp = KernelHyperparams::new(&[1.0, 1.0], 1.0, 0.1).unwrap();
    let model = GpModel::with_hyperparams(&ds, &enc, 1, vec![hp]).unwrap();
    let ws = LooWorkspace::new(&model).unwrap();
    assert!(ws.zeta(&[0.0, 0.0]).is_err());
}

#[test]
fn zeta_vanishes_far_from_data() {
    let model = toy_model(30, 3);
    let ws = LooWorkspace::new(&model).unwrap();
    let near = ws.zeta(&model.featurize(&[0.0, 0.0], &[0.0])).unwrap();
    let far = ws.zeta(&model.featurize(&[50.0, -50.0], &[40.0])).unwrap();
    assert!(near > 0.0);
    assert!(far < 1e-12 * near.max(1.0), "far {far} near {near}");
}

#[test]
fn full_subsample_equals_exact() {
    let model = toy_model(15, 4);
    let mut rng = rng_from_seed(0);
    let exact = LooWorkspace::new(&model).unwrap();
    let same = LooWorkspace::with_subsample(&model, 15, &mut rng).unwrap();
    let q = model.featurize(&[0.1, 0.2], &[0.3]);
    assert_eq!(exact.zeta(&q).unwrap(), same.zeta(&q).unwrap());
}

#[test]
fn subsample_averages_selected_points() {
    let model = toy_model(20, 5);
    let mut rng = rng_from_seed(9);
    let ws = LooWorkspace::with_subsample(&model, 6, &mut rng).unwrap();
    let q = model.featurize(&[0.2, -0.1], &[0.0]);
    let exact = LooWorkspace::new(&model).unwrap();
    let got = ws.zeta(&q).unwrap();
    let full = exact.zeta(&q).unwrap();
    assert!(got > 0.0 && full > 0.0);
    // Same moments at the query regardless of subsampling.
    let qm = DMatrix::from_row_slice(1, q.len(), &q);
    let a = &ws.evaluate_batch(&qm).unwrap()[0];
    let b = &exact.evaluate_batch(&qm).unwrap()[0];
    for d in 0..2 {
        assert!((a.mean[d] - b.mean[d]).abs() < 1e-10);
        assert!((a.var[d] - b.var[d]).abs() < 1e-10);
    }
}

#[test]
fn batch_matches_single_queries() {
    let model = toy_model(18, 6);
    let ws = LooWorkspace::new(&model).unwrap();
    let states = vec![vec![0.1, 0.2], vec![-0.5, 0.9], vec![2.0, 2.0]];
    let actions = vec![vec![0.0], vec![0.4], vec![-1.0]];
    let qm = model.featurize_batch(&states, &actions);
    let batch = ws.evaluate(&qm).unwrap();
    for (j, z) in batch.iter().enumerate() {
        let single = ws.zeta(&model.featurize(&states[j], &actions[j])).unwrap();
        assert!((z - single).abs() <= 1e-12 * single.max(1.0));
    }
}

#[test]
fn bootstrap_matches_direct_halves() {
    let model = toy_model(11, 7);
    let perm: Vec<usize> = (0..11).rev().collect();
    let ws = BootstrapWorkspace::from_partitions(&model, &[perm.clone()]).unwrap();
    let q = model.featurize(&[0.3, 0.3], &[0.1]);
    let qm = DMatrix::from_row_slice(1, q.len(), &q);
    let (a, b) = perm.split_at(5);
    let mut expected = 0.0;
    for gp in model.outputs() {
        let fit = |idx: &[usize]| {
            let x = gp.inputs().select_rows(idx);
            let y = DVector::from_iterator(idx.len(), idx.iter().map(|&j| gp.targets()[j]));
            let g = ExactGp::condition(x, y, gp.hyperparams().clone()).unwrap();
            let (m, c) = g.predict(&qm, false).unwrap();
            (m[0], c.variances()[0])
        };
        let (m1, v1) = fit(a);
        let (m2, v2) = fit(b);
        expected += symmetric_kl(m1, v1, m2, v2).unwrap();
    }
    let got = ws.zeta_batch(&qm).unwrap()[0];
    assert!((got - expected).abs() <= 1e-10 * expected.max(1.0));
}

#[test]
fn bootstrap_rejects_bad_partition() {
    let model = toy_model(6, 8);
    assert!(BootstrapWorkspace::from_partitions(&model, &[vec![0, 1, 2, 3, 4, 4]]).is_err());
    assert!(BootstrapWorkspace::from_partitions(&model, &[vec![0, 1, 2]]).is_err());
    let mut rng = rng_from_seed(1);
    assert!(BootstrapWorkspace::new(&model, 0, &mut rng).is_err());
}

#[test]
fn bootstrap_is_non_negative() {
    let model = toy_model(12, 9);
    let mut rng = rng_from_seed(2);
    let ws = BootstrapWorkspace::new(&model, 4, &mut rng).unwrap();
    let qm = model.featurize_batch(&[vec![0.0, 0.0], vec![3.0, -3.0]], &[vec![0.0], vec![1.0]]);
    assert!(ws.evaluate(&qm).unwrap().iter().all(|&z| z >= 0.0));
}

#[test]
fn entropy_matches_closed_form() {
    let model = toy_model(10, 10);
    let q = model.featurize(&[0.5, 0.5], &[0.0]);
    let qm = DMatrix::from_row_slice(1, q.len(), &q);
    let post = model.predict(&qm, false).unwrap();
    let expected: f64 = post
        .cov
        .iter()
        .map(|c| 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * c.variances()[0]).ln())
        .sum();
    let got = EntropyMetric::new(&model).evaluate(&qm).unwrap()[0];
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn discounted_sum_by_hand() {
    assert_eq!(discounted_sum(&[], 0.9), 0.0);
    let v = discounted_sum(&[1.0, 2.0, 4.0], 0.5);
    assert!((v - (1.0 + 1.0 + 1.0)).abs() < 1e-15);
}

#[test]
fn trajectory_metric_rejects_bad_input() {
    let model = toy_model(5, 11);
    let ws = LooWorkspace::new(&model).unwrap();
    assert!(zeta_trajectory(&ws, &DMatrix::zeros(0, 3), 0.9).is_err());
    assert!(zeta_trajectory(&ws, &DMatrix::zeros(1, 3), 1.5).is_err());
    let qm = model.featurize_batch(&[vec![0.0, 0.0], vec![0.1, 0.1]], &[vec![0.0], vec![0.0]]);
    let per = ws.evaluate(&qm).unwrap();
    let total = zeta_trajectory(&ws, &qm, 0.9).unwrap();
    assert!((total - (per[0] + 0.9 * per[1])).abs() < 1e-12);
}

#[test]
fn grid_csv_round_trip() {
    let model = toy_model(10, 12);
    let ws = LooWorkspace::new(&model).unwrap();
    let spec = GridSpec {
        axes: [
            GridAxis { dim: 0, min: -1.0, max: 1.0, resolution: 4 },
            GridAxis { dim: 1, min: -2.0, max: 2.0, resolution: 3 },
        ],
        base_state: vec![0.0, 0.0],
        action: vec![0.0],
    };
    let grid = metric_grid(&model, &ws, &spec).unwrap();
    assert_eq!(grid.values.len(), 12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    grid.write_csv(&path).unwrap();
    let rows = MetricGrid::read_csv(&path).unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows[1].0, -1.0);
    assert_eq!(rows[1].1, 0.0);
    let direct = ws.zeta(&model.featurize(&[-1.0, 0.0], &[0.0])).unwrap();
    assert!((rows[1].2 - direct).abs() <= 1e-12 * direct.max(1.0));
}

#[test]
fn grid_spec_validation() {
    let mut spec = GridSpec {
        axes: [
            GridAxis { dim: 0, min: 0.0, max: 1.0, resolution: 2 },
            GridAxis { dim: 0, min: 0.0, max: 1.0, resolution: 2 },
        ],
        base_state: vec![0.0, 0.0],
        action: vec![0.0],
    };
    assert!(spec.validate(2, 1).is_err());
    spec.axes[1].dim = 1;
    assert!(spec.validate(2, 1).is_ok());
    spec.axes[1].resolution = 0;
    assert!(spec.validate(2, 1).is_err());
}
