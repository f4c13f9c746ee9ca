use bnfuse::data::sample_records;
use bnfuse::eval::average_precision;
use bnfuse::profile::simsum_network;
use bnfuse::text::{
    fit_mlp, fold_assignment, train_concat_baseline, train_fixed_epochs, train_mlp, MlpModel,
    MlpTrainConfig, TabularEncoder,
};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
}

fn small_cfg(seed: u64) -> MlpTrainConfig {
    MlpTrainConfig {
        hidden: 16,
        learning_rate: 5e-3,
        seed,
        ..MlpTrainConfig::default()
    }
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for classes in [2, 3] {
        let x = gaussian(&mut rng, 7, 5);
        let y: Vec<usize> = (0..7).map(|i| i % classes).collect();
        let mut model = MlpModel::init("s", classes, 5, 8, 3);
        let mut theta = model.parameters();
        for t in theta.iter_mut() {
            *t += rng.random_range(-0.3..0.3);
        }
        model.set_parameters(&theta);
        let wd = 1e-2;
        let (_, grad) = model.loss_and_gradient(x.view(), &y, wd, None).unwrap();
        let analytic: Vec<f64> = grad
            .w1
            .iter()
            .chain(&grad.b1)
            .chain(grad.w2.iter())
            .chain(&grad.b2)
            .copied()
            .collect();
        let h = 1e-4;
        for j in 0..theta.len() {
            let mut probe = model.clone();
            let mut plus = theta.clone();
            plus[j] += h;
            probe.set_parameters(&plus);
            let lp = probe.loss_and_gradient(x.view(), &y, wd, None).unwrap().0;
            let mut minus = theta.clone();
            minus[j] -= h;
            probe.set_parameters(&minus);
            let lm = probe.loss_and_gradient(x.view(), &y, wd, None).unwrap().0;
            let numeric = (lp - lm) / (2.0 * h);
            let rel =
                (analytic[j] - numeric).abs() / analytic[j].abs().max(numeric.abs()).max(1e-6);
            assert!(
                rel < 1e-3,
                "classes {classes}, param {j}: {} vs {numeric}",
                analytic[j]
            );
        }
    }
}

#[test]
fn separable_data_is_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    while labels.len() < 500 {
        let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        if (a + b).abs() < 0.2 {
            continue;
        }
        rows.extend([a, b]);
        labels.push(usize::from(a + b > 0.0));
    }
    let x = Array2::from_shape_vec((500, 2), rows).unwrap();
    let model = train_mlp("s", 2, x.view(), &labels, &MlpTrainConfig::default()).unwrap();
    let correct = model
        .predict_proba(x.view())
        .unwrap()
        .iter()
        .zip(&labels)
        .filter(|(p, &y)| p.argmax() == y)
        .count();
    assert!(
        correct as f64 / 500.0 >= 0.99,
        "accuracy {}",
        correct as f64 / 500.0
    );
}

#[test]
fn shuffled_labels_give_chance_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 600;
    let x = gaussian(&mut rng, n, 8);
    let mut labels: Vec<usize> = (0..n).map(|i| usize::from(i % 10 < 3)).collect();
    labels.shuffle(&mut rng);
    let train = 400;
    let xt = x.slice(ndarray::s![..train, ..]);
    let xv = x.slice(ndarray::s![train.., ..]);
    let model = train_mlp("s", 2, xt, &labels[..train], &small_cfg(0)).unwrap();
    let scores: Vec<f64> = model
        .predict_proba(xv)
        .unwrap()
        .iter()
        .map(|p| p.probs[1])
        .collect();
    let y: Vec<bool> = labels[train..].iter().map(|&l| l == 1).collect();
    let base = y.iter().filter(|&&b| b).count() as f64 / y.len() as f64;
    let ap = average_precision(&scores, &y).unwrap();
    assert!((ap - base).abs() < 0.1, "ap {ap}, base {base}");
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = gaussian(&mut rng, 120, 6);
    let labels: Vec<usize> = x
        .rows()
        .into_iter()
        .map(|r| usize::from(r[0] > 0.0) + usize::from(r[1] > 1.0))
        .collect();
    let a = fit_mlp("fever", 3, x.view(), &labels, &small_cfg(5)).unwrap();
    let b = fit_mlp("fever", 3, x.view(), &labels, &small_cfg(5)).unwrap();
    assert_eq!(a, b);
    assert!(a.epochs >= 1 && a.fold_epochs.iter().all(|&e| e <= 200));
}

#[test]
fn folds_cover_every_row_once() {
    for (n, folds) in [(10, 5), (654, 5), (101, 3)] {
        let f = fold_assignment(n, folds, 7);
        let mut counts = vec![0; folds];
        for &k in &f {
            counts[k] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), n);
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = gaussian(&mut rng, 50, 3);
    let labels: Vec<usize> = (0..50).map(|i| i % 2).collect();
    let fit = fit_mlp("s", 2, x.view(), &labels, &small_cfg(1)).unwrap();
    assert_eq!(fit.out_of_fold.len(), 50);
}

#[test]
fn out_of_fold_loss_exceeds_in_sample_loss() {
    let mut gap = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = 150;
        let x = gaussian(&mut rng, n, 10);
        let labels: Vec<usize> = x
            .rows()
            .into_iter()
            .map(|r| usize::from(r[0] + 0.5 * rng.sample::<f64, _>(StandardNormal) > 0.0))
            .collect();
        let cfg = small_cfg(seed);
        let fit = fit_mlp("s", 2, x.view(), &labels, &cfg).unwrap();
        let oof: f64 = fit
            .out_of_fold
            .iter()
            .zip(&labels)
            .map(|(p, &y)| -p.probs[y].ln())
            .sum::<f64>()
            / n as f64;
        let in_sample = fit.model.cross_entropy(x.view(), &labels).unwrap();
        gap += oof - in_sample;
    }
    assert!(gap / 10.0 > 0.0, "mean gap {}", gap / 10.0);
}

#[test]
fn concat_uses_tabular_signal() {
    let net = simsum_network();
    let n = 2000;
    let records = sample_records(&net, n, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let emb = gaussian(&mut rng, n, 16);
    let labels: Vec<usize> = records
        .iter()
        .map(|r| r.value("antibiotics").unwrap())
        .collect();
    let (train, test) = (1500, n - 1500);
    let encoder = TabularEncoder::fit(&net, &records[..train]).unwrap();
    let fit = train_concat_baseline(
        &encoder,
        emb.slice(ndarray::s![..train, ..]),
        &records[..train],
        "antibiotics",
        2,
        &labels[..train],
        &small_cfg(0),
    )
    .unwrap();
    // a label that is a deterministic function of one tabular column
    let target: Vec<usize> = records
        .iter()
        .map(|r| r.value("pneumonia").unwrap())
        .collect();
    let fit_det = train_concat_baseline(
        &encoder,
        emb.slice(ndarray::s![..train, ..]),
        &records[..train],
        "pneumonia",
        2,
        &target[..train],
        &small_cfg(0),
    )
    .unwrap();
    let x_test = encoder
        .concat(emb.slice(ndarray::s![train.., ..]), &records[train..])
        .unwrap();
    assert_eq!(x_test.len_of(Axis(0)), test);
    let scores: Vec<f64> = fit_det
        .model
        .predict_proba(x_test.view())
        .unwrap()
        .iter()
        .map(|p| p.probs[1])
        .collect();
    let y: Vec<bool> = target[train..].iter().map(|&v| v == 1).collect();
    let ap = average_precision(&scores, &y).unwrap();
    assert!(ap > 0.9, "ap {ap}");
    assert_eq!(fit.model.input, 16 + encoder.width());
}

#[test]
fn fixed_epoch_training_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = gaussian(&mut rng, 30, 4);
    let labels: Vec<usize> = (0..30).map(|i| i % 2).collect();
    let m = train_fixed_epochs("s", 2, x.view(), &labels, 3, &small_cfg(0)).unwrap();
    assert_eq!(m.input, 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn predictions_are_distributions(seed in 0u64..1000, classes in 2usize..5, rows in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, rows, 4) * 10.0;
        let model = MlpModel::init("s", classes, 4, 8, seed);
        for p in model.predict_proba(x.view()).unwrap() {
            prop_assert_eq!(p.probs.len(), classes);
            prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.probs.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn predictions_are_permutation_equivariant(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, 12, 5);
        let model = MlpModel::init("s", 3, 5, 8, seed);
        let mut perm: Vec<usize> = (0..12).collect();
        perm.shuffle(&mut rng);
        let base = model.predict_proba(x.view()).unwrap();
        let shuffled = model.predict_proba(x.select(Axis(0), &perm).view()).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            for (a, b) in shuffled[k].probs.iter().zip(&base[i].probs) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
