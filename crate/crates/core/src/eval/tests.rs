use super::*;
use crate::datasets::{Manifest, ViewedDataset};
use crate::model::{CorrNetParams, LossTermMask, ReconLoss, Term, TwoViewBatch, ViewTag};
use crate::numerics::{Activation, DenseMatrix, DenseVector, Rng};
use crate::training::TrainConfig;
use proptest::prelude::*;

// Two-pass textbook Pearson, written independently of the library's.
fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

fn oracle_f1(pred: &[bool], truth: &[bool]) -> (f64, f64, f64) {
    let tp = pred.iter().zip(truth).filter(|(p, t)| **p && **t).count() as f64;
    let pp = pred.iter().filter(|p| **p).count() as f64;
    let ap = truth.iter().filter(|t| **t).count() as f64;
    let p = if pp == 0.0 { 0.0 } else { tp / pp };
    let r = if ap == 0.0 { 0.0 } else { tp / ap };
    let f = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f)
}

// O(n^2): every midpoint, F1 recomputed from scratch.
fn oracle_threshold(scores: &[(f64, bool)]) -> (f64, f64, f64) {
    let mut uniq: Vec<f64> = scores.iter().map(|s| s.0).collect();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let truth: Vec<bool> = scores.iter().map(|s| s.1).collect();
    let mut best = (f64::NAN, -1.0, -1.0);
    for w in uniq.windows(2).rev() {
        let t = 0.5 * (w[0] + w[1]);
        let pred: Vec<bool> = scores.iter().map(|s| s.0 > t).collect();
        let (p, _, f) = oracle_f1(&pred, &truth);
        if f > best.2 || (f == best.2 && p >= best.1) {
            best = (t, p, f);
        }
    }
    best
}

#[test]
fn sum_correlation_examples() {
    let h = Rng::seed_from(1).normal_matrix(10, 5);
    assert!((sum_correlation(&h, &h).unwrap() - 5.0).abs() < 1e-12);
    assert!((sum_correlation(&h, &h.map(|v| -v)).unwrap() + 5.0).abs() < 1e-12);
    assert!(sum_correlation(&h, &h.slice_cols(0, 4)).is_err());
    assert!(sum_correlation(&h.slice_rows(0, 1), &h.slice_rows(0, 1)).is_err());
}

#[test]
fn metric_oracles_on_random_instances() {
    let mut rng = Rng::seed_from(2);
    for _ in 0..100 {
        let n = 2 + rng.below(30);
        let k = 1 + rng.below(6);
        let hx = rng.normal_matrix(n, k);
        let hy = rng.normal_matrix(n, k);
        let want: f64 = (0..k)
            .map(|j| oracle_pearson(hx.column(j).as_slice(), hy.column(j).as_slice()))
            .sum();
        assert!((sum_correlation(&hx, &hy).unwrap() - want).abs() < 1e-12);
        assert_eq!(
            sum_correlation(&hx, &hy).unwrap(),
            sum_correlation(&hy, &hx).unwrap()
        );

        let m = 5 + rng.below(40);
        let truth: Vec<bool> = (0..m).map(|_| rng.bernoulli(0.3)).collect();
        let pred: Vec<bool> = (0..m).map(|_| rng.bernoulli(0.4)).collect();
        let (p, r, f) = f1(&pred, &truth).unwrap();
        let (op, or, of) = oracle_f1(&pred, &truth);
        assert!((p - op).abs() < 1e-15 && (r - or).abs() < 1e-15 && (f - of).abs() < 1e-15);

        let mut scores: Vec<(f64, bool)> = (0..m)
            .map(|i| (((rng.normal() * 4.0).round()) / 4.0, truth[i]))
            .collect();
        if !scores.iter().any(|s| s.1) {
            scores[0].1 = true;
        }
        if scores.iter().all(|s| s.1) {
            scores[0].1 = false;
        }
        match tune_threshold(&scores) {
            Ok(t) => {
                let (ot, op, of) = oracle_threshold(&scores);
                assert_eq!((t.threshold, t.precision, t.f1), (ot, op, of));
            }
            Err(_) => assert!(scores.iter().all(|s| s.0 == scores[0].0)),
        }
    }
}

#[test]
fn reconstruction_mse_fixtures() {
    let p = CorrNetParams::zeros(
        3,
        2,
        2,
        Activation::Sigmoid,
        Activation::Identity,
        ReconLoss::Squared,
    );
    let zero = TwoViewBatch::new(DenseMatrix::zeros(4, 3), DenseMatrix::zeros(4, 2)).unwrap();
    assert_eq!(reconstruction_mse(&p, &zero).unwrap(), (0.0, 0.0));

    let mut id = CorrNetParams::zeros(
        3,
        3,
        3,
        Activation::Identity,
        Activation::Identity,
        ReconLoss::Squared,
    );
    id.enc_x = DenseMatrix::identity(3);
    id.dec_x = DenseMatrix::identity(3);
    let b = TwoViewBatch::new(
        Rng::seed_from(3).normal_matrix(5, 3),
        Rng::seed_from(4).normal_matrix(5, 3),
    )
    .unwrap();
    let (s, c) = reconstruction_mse(&id, &b).unwrap();
    assert!(s < 1e-30 && c > 0.0);
}

#[test]
fn reconstruction_mse_matches_loop() {
    let mut rng = Rng::seed_from(5);
    let p = CorrNetParams::new(
        4,
        3,
        2,
        Activation::Tanh,
        Activation::Sigmoid,
        ReconLoss::Squared,
        &mut rng,
    )
    .unwrap();
    let b = TwoViewBatch::new(rng.normal_matrix(6, 4), rng.normal_matrix(6, 3)).unwrap();
    let h = p.encode_x(&b.x).unwrap();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let (mut s, mut c) = (0.0, 0.0);
    for i in 0..6 {
        for r in 0..4 {
            let v =
                sig(p.dec_bias[r] + (0..2).map(|j| p.dec_x.get(r, j) * h.get(i, j)).sum::<f64>());
            s += (v - b.x.get(i, r)).powi(2);
        }
        for r in 0..3 {
            let v =
                sig(p.dec_bias[4 + r]
                    + (0..2).map(|j| p.dec_y.get(r, j) * h.get(i, j)).sum::<f64>());
            c += (v - b.y.get(i, r)).powi(2);
        }
    }
    let (gs, gc) = reconstruction_mse(&p, &b).unwrap();
    assert!((gs - s / 24.0).abs() < 1e-14 && (gc - c / 18.0).abs() < 1e-14);
}

#[test]
fn f1_examples() {
    let t = [true, false, true, false];
    assert_eq!(f1(&t, &t).unwrap(), (1.0, 1.0, 1.0));
    assert_eq!(f1(&[false; 4], &t).unwrap(), (0.0, 0.0, 0.0));
    let mut pred = vec![true; 10];
    pred.extend([false; 2]);
    let mut truth = vec![true; 8];
    truth.extend([false, false, true, true]);
    let (p, r, f) = f1(&pred, &truth).unwrap();
    assert!((p - 0.8).abs() < 1e-15 && (r - 0.8).abs() < 1e-15 && (f - 0.8).abs() < 1e-15);
    assert!(f1(&[true], &t).is_err());
}

#[test]
fn threshold_examples() {
    let s = [(0.9, true), (0.8, true), (0.2, false), (0.1, false)];
    let t = tune_threshold(&s).unwrap();
    assert_eq!(t.f1, 1.0);
    assert!(t.threshold > 0.2 && t.threshold < 0.8);
    assert!(tune_threshold(&[(0.5, true), (0.5, false)]).is_err());
    assert!(tune_threshold(&[(0.5, true), (0.4, true)]).is_err());
    // top one: F1 = 2/3; top three: p = 2/3, r = 1, F1 = 0.8
    let t = tune_threshold(&[(0.9, true), (0.7, false), (0.5, true), (0.1, false)]).unwrap();
    assert!((t.f1 - 0.8).abs() < 1e-12);
}

struct Fixed(DenseMatrix, DenseMatrix);

impl crate::model::TwoViewEncoder for Fixed {
    fn code_dim(&self) -> usize {
        self.0.cols()
    }
    fn view_dim(&self, _: ViewTag) -> usize {
        1
    }
    fn encode_view(&self, view: ViewTag, _: &DenseMatrix) -> crate::Result<DenseMatrix> {
        Ok(if view == ViewTag::X {
            self.0.clone()
        } else {
            self.1.clone()
        })
    }
}

#[test]
fn matching_examples() {
    let h = Rng::seed_from(6).normal_matrix(5, 4);
    let m = Fixed(h.clone(), h.clone());
    let dummy = DenseMatrix::zeros(5, 1);
    assert!(match_by_correlation(&m, &dummy, &dummy, 0.99)
        .unwrap()
        .iter()
        .all(|&b| b));
    assert!(match_by_correlation(&m, &dummy, &dummy, 1.0 + 1e-12)
        .unwrap()
        .iter()
        .all(|&b| !b));
    let narrow = Fixed(h.slice_cols(0, 1), h.slice_cols(0, 1));
    assert!(match_by_correlation(&narrow, &dummy, &dummy, 0.0).is_err());
}

fn blobs(n: usize, d: usize, classes: usize, spread: f64, seed: u64) -> (DenseMatrix, Vec<usize>) {
    let mut rng = Rng::seed_from(seed);
    let centers = rng.normal_matrix(classes, d);
    let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
    let x = DenseMatrix::from_fn(n, d, |r, c| {
        centers.get(labels[r], c) * 3.0 + spread * rng.normal()
    });
    (x, labels)
}

#[test]
fn classifier_separates_toy_data() {
    let x = DenseMatrix::from_rows(&[
        [0.0, 0.0],
        [0.2, 0.1],
        [0.1, 0.3],
        [2.0, 2.0],
        [2.2, 1.9],
        [1.8, 2.3],
    ])
    .unwrap();
    let y = [0, 0, 0, 1, 1, 1];
    let c = fit_classifier(&x, &y, 1e-3).unwrap();
    assert_eq!(c.accuracy(&x, &y).unwrap(), 100.0);
    assert!(fit_classifier(&x, &[1; 6], 1e-3).is_err());
    assert!(fit_classifier(&x, &[0, 1], 1e-3).is_err());
}

#[test]
fn shuffled_labels_give_chance() {
    let (x, _) = blobs(4000, 8, 10, 1.0, 7);
    let mut rng = Rng::seed_from(8);
    let y: Vec<usize> = (0..4000).map(|_| rng.below(10)).collect();
    let c = fit_classifier(&x.slice_rows(0, 2000), &y[..2000], 1e-3).unwrap();
    let acc = c.accuracy(&x.slice_rows(2000, 4000), &y[2000..]).unwrap();
    assert!((acc - 10.0).abs() <= 3.0, "{acc}");
}

#[test]
fn classifier_optimum_is_seed_independent() {
    let (x, y) = blobs(300, 4, 3, 2.0, 9);
    let cfg = ClassifierConfig {
        l2: 0.1,
        max_iter: 5000,
        grad_tol: 1e-10,
    };
    let a = fit_classifier_with(&x, &y, &cfg, None).unwrap();
    let mut rng = Rng::seed_from(10);
    let start = LinearClassifier {
        weights: rng.normal_matrix(3, 4),
        bias: DenseVector::from_vec(vec![1.0, -1.0, 0.5]).unwrap(),
        l2: 0.1,
        iterations: 0,
        final_loss: 0.0,
    };
    let b = fit_classifier_with(&x, &y, &cfg, Some(&start)).unwrap();
    assert!(
        (a.final_loss - b.final_loss).abs() < 1e-6,
        "{} vs {}",
        a.final_loss,
        b.final_loss
    );
}

#[test]
fn folds_are_balanced_and_seeded() {
    let f = fold_assignment(23, 5, 1).unwrap();
    let mut counts = [0; 5];
    f.iter().for_each(|&i| counts[i] += 1);
    assert!(counts.iter().all(|&c| c == 4 || c == 5));
    assert_eq!(f, fold_assignment(23, 5, 1).unwrap());
    assert!(fold_assignment(10, 1, 0).is_err());
    assert!(fold_assignment(3, 5, 0).is_err());
}

fn labelled_views(n: usize, seed: u64) -> ViewedDataset {
    let (x, labels) = blobs(n, 6, 10, 1.0, seed);
    let (y, _) = (x.map(|v| 0.5 * v + 1.0), ());
    ViewedDataset::new(x, y, Some(labels), Manifest::default()).unwrap()
}

#[test]
fn identical_codes_transfer_like_single_view() {
    let d = labelled_views(500, 11);
    let m = Fixed(d.x.clone(), d.x.clone());
    let proto = TransferProtocol::default();
    let t = transfer_accuracy(&m, &d, ViewTag::X, &proto).unwrap();
    let single = cross_view_accuracy(&d.x, &d.x, d.labels().unwrap(), &proto).unwrap();
    assert_eq!(t, single);
    assert!(single > 90.0);
    assert!(
        transfer_accuracy(&m, &d, ViewTag::X, &TransferProtocol { folds: 1, ..proto }).is_err()
    );
}

#[test]
fn untrained_encoder_transfers_poorly() {
    let d = labelled_views(1000, 12);
    let mut rng = Rng::seed_from(13);
    let p = CorrNetParams::new(
        6,
        6,
        8,
        Activation::Sigmoid,
        Activation::Identity,
        ReconLoss::Squared,
        &mut rng,
    )
    .unwrap();
    let proto = TransferProtocol::default();
    let t = transfer_both(&p, &d, &proto).unwrap();
    let same = cross_view_accuracy(
        &p.encode_x(&d.x).unwrap(),
        &p.encode_x(&d.x).unwrap(),
        d.labels().unwrap(),
        &proto,
    )
    .unwrap();
    assert!(
        same > 90.0 && t.l2r < same - 40.0 && t.r2l < same - 40.0,
        "{t:?} vs {same}"
    );
}

#[test]
fn ablation_grid_shapes_and_gain() {
    let d = labelled_views(400, 14);
    let train = TwoViewBatch::new(d.x.clone(), d.y.clone()).unwrap();
    let mut rng = Rng::seed_from(15);
    let init = CorrNetParams::new(
        6,
        6,
        4,
        Activation::Sigmoid,
        Activation::Identity,
        ReconLoss::Squared,
        &mut rng,
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 50,
        learning_rate: 1e-2,
        ..Default::default()
    };
    let proto = TransferProtocol::default();
    let one = ablation_grid(
        &init,
        &train,
        &d,
        &[LossTermMask::corrnet(2.0)],
        &cfg,
        &proto,
    )
    .unwrap();
    assert_eq!(one.len(), 1);
    let masks = [
        LossTermMask::new(&[Term::L7, Term::L8], 0.0).unwrap(),
        LossTermMask::new(&[Term::L7, Term::L8, Term::L4], 2.0).unwrap(),
    ];
    let rows = ablation_grid(&init, &train, &d, &masks, &cfg, &proto).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.mask).collect::<Vec<_>>(),
        masks.to_vec()
    );
    assert!(
        rows[1].l2r > rows[0].l2r && rows[1].r2l > rows[0].r2l,
        "{rows:?}"
    );
    assert!(ablation_grid(&init, &train, &d, &[], &cfg, &proto).is_err());
}

#[test]
fn report_formats() {
    let mut r = EvalReport {
        sum_correlation: Some(45.5),
        transfer_l2r: Some(77.0),
        folds: 5,
        ..Default::default()
    };
    r.metadata.insert("seed".into(), "1".into());
    r.metadata.insert("note".into(), "a,b".into());
    assert_eq!(
        r.to_csv(),
        "sum_correlation,mse_self,mse_cross,transfer_l2r,transfer_r2l,folds,note,seed\n45.5,,,77,,5,\"a,b\",1\n"
    );
    assert!(r.to_text().contains("transfer left->right  77.0000 %"));
    r.validate().unwrap();
    r.transfer_r2l = Some(101.0);
    assert!(r.validate().is_err());
}

#[test]
fn pgm_encoding() {
    let px = encode_pgm(&[0.0, 1.0, 0.5, 2.0, -1.0, 0.25], 2, 3).unwrap();
    assert_eq!(&px[..11], b"P5\n3 2\n255\n");
    assert_eq!(&px[11..], &[0, 255, 128, 255, 0, 64]);
    assert!(encode_pgm(&[0.0], 2, 2).is_err());
}

proptest! {
    #[test]
    fn sum_correlation_is_affine_invariant(seed in 0u64..1000, scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let mut rng = Rng::seed_from(seed);
        let hx = rng.normal_matrix(12, 3);
        let hy = rng.normal_matrix(12, 3);
        let base = sum_correlation(&hx, &hy).unwrap();
        let moved = sum_correlation(&hx.map(|v| scale * v + shift), &hy).unwrap();
        prop_assert!((base - moved).abs() < 1e-9);
        prop_assert!(base.abs() <= 3.0 + 1e-12);
    }
}
