//! End-to-end acceptance suite: one PASS/FAIL line per criterion, non-zero
//! exit if any fails. MNIST is read from `CRLKIT_MNIST_DIR`, else
//! `data/mnist` at the workspace root (`crlkit fetch-mnist` populates it).
//!
//! Shared MNIST setup: left/right 392-pixel halves, k = 50, sigmoid hidden and
//! output units, squared loss, RMSProp (lr 1e-3), batch 100, 15 epochs,
//! lambda 200, seed 0; training rows are a seeded 50k (or 10k) subset of the
//! training set and every metric is measured on the 10k test set.

use std::path::PathBuf;
use std::time::Instant;

use crlkit::baselines::{fit_cca, CcaModel};
use crlkit::checkpoint::{corrnet_from_bytes, corrnet_to_bytes};
use crlkit::datasets::{
    encode_idx_images, encode_idx_labels, mnist_views, parse_idx_images, parse_idx_labels,
    synth_shared_latent, synth_transliteration, TransliterationConfig, ViewedDataset,
    MNIST_TEST_IMAGES, MNIST_TEST_LABELS,
};
use crlkit::deep::{train_deep, DeepCorrNet};
use crlkit::eval::{
    ablation_grid, f1, single_view_accuracy, sum_correlation, transfer_both, tune_threshold,
    tuned_matching, MatchOutcome, TransferProtocol, TransferScores,
};
use crlkit::model::gradcheck::{check_gradient, random_case, standard_masks, GradCheckTolerance};
use crlkit::model::TwoViewEncoder;
use crlkit::numerics::{matmul, pearson, spearman};
use crlkit::training::{train_dataset, train_mae_dataset, OptimizerKind, TrainConfig};
use crlkit::{Activation, CorrNetParams, LossTermMask, ReconLoss, Rng, ViewTag};

const LAMBDA: f64 = 200.0;
const K: usize = 50;

struct Suite {
    failures: usize,
    total: usize,
}

impl Suite {
    fn check(&mut self, id: &str, what: &str, pass: bool, detail: String) {
        self.total += 1;
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} {id:<5} {what}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }

    fn error(&mut self, id: &str, what: &str, err: impl std::fmt::Display) {
        self.check(id, what, false, format!("error: {err}"));
    }
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("CRLKIT_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn mnist_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 15,
        batch_size: 100,
        learning_rate: 1e-3,
        optimizer: OptimizerKind::RmsProp,
        lambda: LAMBDA,
        mask: LossTermMask::corrnet(LAMBDA),
        seed: 0,
        ..Default::default()
    }
}

fn mnist_init(k: usize) -> CorrNetParams {
    CorrNetParams::new(
        392,
        392,
        k,
        Activation::Sigmoid,
        Activation::Sigmoid,
        ReconLoss::Squared,
        &mut Rng::seed_from(0),
    )
    .expect("valid dims")
}

fn codes_corr(m: &impl TwoViewEncoder, d: &ViewedDataset) -> crlkit::Result<f64> {
    sum_correlation(
        &m.encode_view(ViewTag::X, &d.x)?,
        &m.encode_view(ViewTag::Y, &d.y)?,
    )
}

fn fmt_t(t: &TransferScores) -> String {
    format!("{:.2}/{:.2}", t.l2r, t.r2l)
}

fn both(t: &TransferScores, f: impl Fn(f64) -> bool) -> bool {
    f(t.l2r) && f(t.r2l)
}

fn criterion_gradients(s: &mut Suite) {
    let start = Instant::now();
    let mut rng = Rng::seed_from(20_240_601);
    let mut failed = Vec::new();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..20 {
        let act = [Activation::Sigmoid, Activation::Tanh][i % 2];
        let loss = [ReconLoss::Squared, ReconLoss::CrossEntropy][(i / 2) % 2];
        let case = random_case(&mut rng, act, loss);
        for mask in standard_masks(2.0) {
            match check_gradient(
                &case.params,
                &case.batch,
                &mask,
                GradCheckTolerance::default(),
            ) {
                Ok(r) => {
                    checked += r.entries;
                    worst = worst.max(r.max_rel_err);
                    if !r.passed() {
                        failed.push(format!("case {i} {mask}"));
                    }
                }
                Err(e) => failed.push(format!("case {i} {mask}: {e}")),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    s.check(
        "1",
        "analytic gradients match central differences (20 cases x 9 masks, rel 1e-6 / abs 1e-8)",
        failed.is_empty(),
        format!("{checked} entries, max rel err {worst:.2e}, failures {failed:?}"),
    );
    s.check(
        "1.t",
        "gradient check runtime < 30 s",
        secs < 30.0,
        format!("{secs:.1} s"),
    );
}

struct Mnist {
    train: ViewedDataset,
    train10k: ViewedDataset,
    test: ViewedDataset,
}

fn load_mnist() -> crlkit::Result<Mnist> {
    let dir = mnist_dir();
    let (train, test) = mnist_views(&dir, 50_000, 0)?;
    let (train10k, _) = mnist_views(&dir, 10_000, 0)?;
    Ok(Mnist {
        train,
        train10k,
        test,
    })
}

fn train_corrnet(
    data: &ViewedDataset,
    cfg: &TrainConfig,
    k: usize,
) -> crlkit::Result<CorrNetParams> {
    Ok(train_dataset(mnist_init(k), &data.to_batch(), cfg, &mut ())?.0)
}

fn train_mae(data: &ViewedDataset, cfg: &TrainConfig) -> crlkit::Result<CorrNetParams> {
    Ok(train_mae_dataset(mnist_init(K), &data.to_batch(), cfg, &mut ())?.0)
}

fn criteria_mnist(s: &mut Suite, m: &Mnist) -> crlkit::Result<()> {
    let protocol = TransferProtocol::default();
    let cfg = mnist_cfg();

    // 2: sum correlation
    let start = Instant::now();
    let corrnet = train_corrnet(&m.train, &cfg, K)?;
    let corrnet_secs = start.elapsed().as_secs_f64();
    let mae = train_mae(&m.train, &cfg)?;
    let cca = fit_cca(&m.train.x, &m.train.y, K, crlkit::baselines::DEFAULT_RIDGE)?;
    let (c_corr, m_corr, k_corr) = (
        codes_corr(&corrnet, &m.test)?,
        codes_corr(&mae, &m.test)?,
        codes_corr(&cca, &m.test)?,
    );
    let totals = format!("CorrNet {c_corr:.2}, MAE {m_corr:.2}, CCA {k_corr:.2}");
    s.check(
        "2.1",
        "CorrNet sum correlation >= 40",
        c_corr >= 40.0,
        totals.clone(),
    );
    s.check(
        "2.2",
        "CorrNet >= MAE + 10",
        c_corr >= m_corr + 10.0,
        totals.clone(),
    );
    s.check(
        "2.3",
        "CorrNet >= CCA + 15",
        c_corr >= k_corr + 15.0,
        totals,
    );
    s.check(
        "2.t",
        "CorrNet training within 60 CPU minutes",
        corrnet_secs <= 3600.0,
        format!("{corrnet_secs:.0} s"),
    );

    // 3: transfer
    let t_corrnet = transfer_both(&corrnet, &m.test, &protocol)?;
    let t_mae = transfer_both(&mae, &m.test, &protocol)?;
    let t_raw = single_view_accuracy(&m.test, &protocol)?;
    s.check(
        "3.1",
        "CorrNet transfer >= 70% both directions",
        both(&t_corrnet, |v| v >= 70.0),
        fmt_t(&t_corrnet),
    );
    s.check(
        "3.2",
        "CorrNet >= MAE + 5 both directions",
        t_corrnet.l2r >= t_mae.l2r + 5.0 && t_corrnet.r2l >= t_mae.r2l + 5.0,
        format!("CorrNet {}, MAE {}", fmt_t(&t_corrnet), fmt_t(&t_mae)),
    );
    s.check(
        "3.3",
        "single-view raw-pixel accuracy >= CorrNet transfer",
        t_raw.l2r >= t_corrnet.l2r && t_raw.r2l >= t_corrnet.r2l,
        format!(
            "single view {} (left/right), CorrNet {}",
            fmt_t(&t_raw),
            fmt_t(&t_corrnet)
        ),
    );
    let corrnet10k = train_corrnet(&m.train10k, &cfg, K)?;
    let t_10k = transfer_both(&corrnet10k, &m.test, &protocol)?;
    s.check(
        "3.4",
        "CorrNet trained on 10k: transfer >= 70% both directions",
        both(&t_10k, |v| v >= 70.0),
        fmt_t(&t_10k),
    );

    // 4: ablation; the full objective is the CorrNet above (same init, seed and config)
    let masks: Vec<LossTermMask> = ["L7+L8", "L7+L8+L4", "L1", "L1+L4", "L2+L3+L4"]
        .iter()
        .map(|m| {
            let mut mask: LossTermMask = m.parse().expect("valid mask");
            mask.lambda = LAMBDA;
            mask
        })
        .collect();
    let rows = ablation_grid(
        &mnist_init(K),
        &m.train.to_batch(),
        &m.test,
        &masks,
        &cfg,
        &protocol,
    )?;
    let acc = |i: usize| TransferScores {
        l2r: rows[i].l2r,
        r2l: rows[i].r2l,
    };
    let (l78, l784, l1, l14, l234) = (acc(0), acc(1), acc(2), acc(3), acc(4));
    let table = format!(
        "L7L8 {}, L7L8L4 {}, L1 {}, L1L4 {}, L2L3L4 {}, L1234 {}",
        fmt_t(&l78),
        fmt_t(&l784),
        fmt_t(&l1),
        fmt_t(&l14),
        fmt_t(&l234),
        fmt_t(&t_corrnet)
    );
    println!("      ablation: {table}");
    s.check(
        "4.1",
        "acc(L7,L8) <= 15% both directions",
        both(&l78, |v| v <= 15.0),
        fmt_t(&l78),
    );
    s.check(
        "4.2",
        "acc(L7,L8,L4) >= acc(L7,L8) + 40",
        l784.l2r >= l78.l2r + 40.0 && l784.r2l >= l78.r2l + 40.0,
        format!("{} vs {}", fmt_t(&l784), fmt_t(&l78)),
    );
    s.check(
        "4.3",
        "acc(L1,L4) >= acc(L1) + 20",
        l14.l2r >= l1.l2r + 20.0 && l14.r2l >= l1.r2l + 20.0,
        format!("{} vs {}", fmt_t(&l14), fmt_t(&l1)),
    );
    s.check(
        "4.4",
        "acc(L2,L3,L4) and acc(L1,L2,L3,L4) >= 70%",
        both(&l234, |v| v >= 70.0) && both(&t_corrnet, |v| v >= 70.0),
        format!("{} and {}", fmt_t(&l234), fmt_t(&t_corrnet)),
    );

    // 5: optimizer study; CorrNet(123) is the joint objective without the correlation term
    let c123_cfg = TrainConfig {
        mask: LossTermMask::reconstruction_only(),
        lambda: 0.0,
        ..cfg.clone()
    };
    let t_c123 = transfer_both(&train_corrnet(&m.train, &c123_cfg, K)?, &m.test, &protocol)?;
    s.check(
        "5.1",
        "RMSProp: CorrNet(123) >= MAE both directions",
        t_c123.l2r >= t_mae.l2r && t_c123.r2l >= t_mae.r2l,
        format!("CorrNet(123) {}, MAE {}", fmt_t(&t_c123), fmt_t(&t_mae)),
    );
    let sgd = |c: &TrainConfig| TrainConfig {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 1e-4,
        ..c.clone()
    };
    let t_c123_sgd = transfer_both(
        &train_corrnet(&m.train, &sgd(&c123_cfg), K)?,
        &m.test,
        &protocol,
    )?;
    let t_mae_sgd = transfer_both(&train_mae(&m.train, &sgd(&cfg))?, &m.test, &protocol)?;
    s.check(
        "5.2",
        "SGD: |CorrNet(123) - MAE| <= 3 both directions",
        (t_c123_sgd.l2r - t_mae_sgd.l2r).abs() <= 3.0
            && (t_c123_sgd.r2l - t_mae_sgd.r2l).abs() <= 3.0,
        format!(
            "CorrNet(123) {}, MAE {}",
            fmt_t(&t_c123_sgd),
            fmt_t(&t_mae_sgd)
        ),
    );

    // 6: deep stacking on 10k
    let base = train_corrnet(&m.train10k, &cfg, 500)?;
    let batch10k = m.train10k.to_batch();
    let mut rng = Rng::seed_from(1);
    let (shallow, _) = train_deep(
        DeepCorrNet::from_shallow(base.clone()).stack(50, &mut rng)?,
        &batch10k,
        &cfg,
        &mut (),
    )?;
    let mut rng = Rng::seed_from(1);
    let (mid, _) = train_deep(
        DeepCorrNet::from_shallow(base).stack(300, &mut rng)?,
        &batch10k,
        &cfg,
        &mut (),
    )?;
    let (deep, _) = train_deep(mid.stack(50, &mut rng)?, &batch10k, &cfg, &mut ())?;
    let t_shallow = transfer_both(&shallow, &m.test, &protocol)?;
    let t_deep = transfer_both(&deep, &m.test, &protocol)?;
    s.check(
        "6.1",
        "CorrNet-500-300-50 transfer >= CorrNet-500-50 - 1 both directions",
        t_deep.l2r >= t_shallow.l2r - 1.0 && t_deep.r2l >= t_shallow.r2l - 1.0,
        format!(
            "500-300-50 {}, 500-50 {}",
            fmt_t(&t_deep),
            fmt_t(&t_shallow)
        ),
    );
    let (corr_shallow, corr_deep) = (codes_corr(&shallow, &m.test)?, codes_corr(&deep, &m.test)?);
    s.check(
        "6.2",
        "deep sum correlation >= 0.8 x shallow",
        corr_deep >= 0.8 * corr_shallow,
        format!("500-300-50 {corr_deep:.2}, 500-50 {corr_shallow:.2}"),
    );

    // 10 (MNIST parts): real IDX files round-trip, checkpoints are exact and reproducible
    let dir = mnist_dir();
    let img_bytes = std::fs::read(dir.join(MNIST_TEST_IMAGES))?;
    let lab_bytes = std::fs::read(dir.join(MNIST_TEST_LABELS))?;
    let idx_ok = encode_idx_images(&parse_idx_images(&img_bytes)?) == img_bytes
        && encode_idx_labels(&parse_idx_labels(&lab_bytes)?) == lab_bytes;
    s.check(
        "10.1",
        "IDX parse/encode round trip is bitwise exact (t10k files)",
        idx_ok,
        format!("{} bytes", img_bytes.len()),
    );
    let bytes = corrnet_to_bytes(&corrnet);
    let back = corrnet_from_bytes(&bytes)?;
    let bitwise = corrnet
        .blocks()
        .iter()
        .zip(back.blocks().iter())
        .all(|(a, b)| {
            a.len() == b.len()
                && a.iter()
                    .zip(b.iter())
                    .all(|(p, q)| p.to_bits() == q.to_bits())
        });
    s.check(
        "10.2",
        "checkpoint write/read reproduces parameters bitwise",
        bitwise && corrnet_to_bytes(&back) == bytes,
        format!("{} bytes", bytes.len()),
    );
    let deep_bytes = deep.to_bytes();
    s.check(
        "10.3",
        "deep checkpoint round trip is exact",
        DeepCorrNet::from_bytes(&deep_bytes)?.to_bytes() == deep_bytes,
        format!("{} bytes", deep_bytes.len()),
    );
    let short = TrainConfig {
        epochs: 2,
        ..cfg.clone()
    };
    let a = corrnet_to_bytes(&train_corrnet(&m.train10k, &short, K)?);
    let b = corrnet_to_bytes(&train_corrnet(&m.train10k, &short, K)?);
    s.check(
        "10.4",
        "two same-seed training runs give identical checkpoints",
        a == b,
        "10k rows, 2 epochs".into(),
    );
    Ok(())
}

fn criterion_cca(s: &mut Suite) -> crlkit::Result<()> {
    let (d, truth) = synth_shared_latent(10_000, 5, 5, 3, 1.0, 5)?;
    let m = fit_cca(&d.x, &d.y, 3, 0.0)?;
    let err = m
        .correlations
        .as_slice()
        .iter()
        .zip(&truth)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    s.check(
        "7.1",
        "CCA recovers the generator's canonical correlations within 0.02",
        err <= 0.02,
        format!(
            "fitted {:?}, closed form {truth:.4?}, max err {err:.4}",
            m.correlations.as_slice()
        ),
    );
    let mut rng = Rng::seed_from(14);
    let mut a = rng.normal_matrix(5, 5);
    for i in 0..5 {
        a.set(i, i, a.get(i, i) + 3.0);
    }
    let mut xt = matmul(&d.x, &a)?;
    xt.add_row_vector(&[1.0, -2.0, 3.0, 0.5, 7.0])?;
    let moved = fit_cca(&xt, &d.y, 3, 0.0)?;
    let drift = m
        .correlations
        .as_slice()
        .iter()
        .zip(moved.correlations.as_slice())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    s.check(
        "7.2",
        "CCA correlations are invariant to an affine map of x within 1e-6",
        drift <= 1e-6,
        format!("max change {drift:.2e}"),
    );
    Ok(())
}

// Brute-force oracles, written independently of the library versions.

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let cov: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - sx / n) * (b - sy / n))
        .sum::<f64>()
        / (n - 1.0);
    let vx: f64 = x.iter().map(|a| (a - sx / n).powi(2)).sum::<f64>() / (n - 1.0);
    let vy: f64 = y.iter().map(|b| (b - sy / n).powi(2)).sum::<f64>() / (n - 1.0);
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_f1(pred: &[bool], truth: &[bool]) -> (f64, f64, f64) {
    let tp = pred.iter().zip(truth).filter(|(p, t)| **p && **t).count() as f64;
    let pp = pred.iter().filter(|p| **p).count() as f64;
    let ap = truth.iter().filter(|t| **t).count() as f64;
    let p = if pp == 0.0 { 0.0 } else { tp / pp };
    let r = if ap == 0.0 { 0.0 } else { tp / ap };
    (
        p,
        r,
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        },
    )
}

/// Every midpoint between distinct scores, each evaluated from scratch.
fn oracle_threshold(scores: &[(f64, bool)]) -> (f64, f64, f64) {
    let mut values: Vec<f64> = scores.iter().map(|s| s.0).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let truth: Vec<bool> = scores.iter().map(|s| s.1).collect();
    let mut best: Option<(f64, f64, f64)> = None; // (f1, precision, threshold)
    for w in values.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        let pred: Vec<bool> = scores.iter().map(|s| s.0 > t).collect();
        let (p, _, f) = oracle_f1(&pred, &truth);
        let better = match best {
            None => true,
            Some((bf, bp, bt)) => f > bf || (f == bf && (p > bp || (p == bp && t < bt))),
        };
        if better {
            best = Some((f, p, t));
        }
    }
    best.expect("two distinct scores")
}

fn criterion_metrics(s: &mut Suite) -> crlkit::Result<()> {
    let mut rng = Rng::seed_from(8);
    let (mut corr_err, mut pearson_err, mut spearman_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let (mut f1_bad, mut thr_bad) = (0, 0);
    for _ in 0..100 {
        let n = 3 + rng.below(40);
        let k = 1 + rng.below(6);
        let hx = rng.normal_matrix(n, k);
        let mut hy = rng.normal_matrix(n, k);
        for v in hy.as_mut_slice().iter_mut() {
            // coarse values so ties occur
            *v = (*v * 2.0).round();
        }
        let cols =
            |m: &crlkit::DenseMatrix, j: usize| (0..n).map(|i| m.get(i, j)).collect::<Vec<f64>>();
        let want: f64 = (0..k)
            .map(|j| oracle_pearson(&cols(&hx, j), &cols(&hy, j)))
            .sum();
        corr_err = corr_err.max((sum_correlation(&hx, &hy)? - want).abs());
        let (a, b) = (cols(&hx, 0), cols(&hy, 0));
        pearson_err = pearson_err.max((pearson(&a, &b)? - oracle_pearson(&a, &b)).abs());
        spearman_err = spearman_err
            .max((spearman(&a, &b)? - oracle_pearson(&oracle_ranks(&a), &oracle_ranks(&b))).abs());

        let truth: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.4)).collect();
        let pred: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
        let (p, r, f) = f1(&pred, &truth)?;
        if (p, r, f) != oracle_f1(&pred, &truth) {
            f1_bad += 1;
        }
        let mut scores: Vec<(f64, bool)> = (0..n)
            .map(|i| ((rng.normal() * 3.0).round() / 3.0, truth[i]))
            .collect();
        scores[0].1 = true;
        scores[1].1 = false;
        scores[0].0 = 10.0;
        let got = tune_threshold(&scores)?;
        let (bf, bp, bt) = oracle_threshold(&scores);
        if (got.f1, got.precision, got.threshold) != (bf, bp, bt) {
            thr_bad += 1;
        }
    }
    s.check(
        "8.1",
        "sum_correlation matches brute force within 1e-12 (100 instances)",
        corr_err <= 1e-12,
        format!("max err {corr_err:.1e}"),
    );
    s.check(
        "8.2",
        "pearson matches brute force within 1e-12",
        pearson_err <= 1e-12,
        format!("max err {pearson_err:.1e}"),
    );
    s.check(
        "8.3",
        "spearman matches brute force within 1e-12 (with ties)",
        spearman_err <= 1e-12,
        format!("max err {spearman_err:.1e}"),
    );
    s.check(
        "8.4",
        "f1 matches brute force exactly",
        f1_bad == 0,
        format!("{f1_bad} mismatches"),
    );
    s.check(
        "8.5",
        "tune_threshold matches exhaustive search exactly",
        thr_bad == 0,
        format!("{thr_bad} mismatches"),
    );
    Ok(())
}

/// Each method picks its own hyperparameter by tuning-split F1.
fn criterion_transliteration(s: &mut Suite) -> crlkit::Result<()> {
    let d = synth_transliteration(&TransliterationConfig::default())?;
    let best = |outcomes: Vec<(f64, MatchOutcome)>| {
        outcomes
            .into_iter()
            .fold(None::<(f64, MatchOutcome)>, |acc, (h, m)| match acc {
                Some((_, b)) if b.tuned.f1 >= m.tuned.f1 => acc,
                _ => Some((h, m)),
            })
    };
    let mut corrnet_runs = Vec::new();
    for lambda in [2.0, 20.0, 200.0] {
        let init = CorrNetParams::new(
            d.x_vocab.len(),
            d.y_vocab.len(),
            K,
            Activation::Sigmoid,
            Activation::Sigmoid,
            ReconLoss::CrossEntropy,
            &mut Rng::seed_from(0),
        )?;
        let cfg = TrainConfig {
            epochs: 30,
            lambda,
            mask: LossTermMask::corrnet(lambda),
            ..Default::default()
        };
        let (p, _) = train_dataset(init, &d.train.to_batch(), &cfg, &mut ())?;
        corrnet_runs.push((lambda, tuned_matching(&p, &d.tune, &d.test)?));
    }
    let mut cca_runs = Vec::new();
    for ridge in [1e-4, 1e-2, 1e-1] {
        let m: CcaModel = fit_cca(&d.train.x, &d.train.y, K, ridge)?;
        cca_runs.push((ridge, tuned_matching(&m, &d.tune, &d.test)?));
    }
    let summary = |runs: &[(f64, MatchOutcome)]| {
        runs.iter()
            .map(|(h, m)| format!("{h}: tune {:.3} test {:.3}", m.tuned.f1, m.f1))
            .collect::<Vec<_>>()
            .join("; ")
    };
    println!(
        "      transliteration CorrNet lambda -> F1: {}",
        summary(&corrnet_runs)
    );
    println!(
        "      transliteration CCA ridge -> F1: {}",
        summary(&cca_runs)
    );
    let (lambda, c) = best(corrnet_runs).expect("three runs");
    let (ridge, k) = best(cca_runs).expect("three runs");
    s.check(
        "9.1",
        "CorrNet tuned-threshold matching F1 >= 0.9",
        c.f1 >= 0.9,
        format!("F1 {:.4} (lambda {lambda})", c.f1),
    );
    s.check(
        "9.2",
        "CorrNet F1 >= CCA F1",
        c.f1 >= k.f1,
        format!(
            "CorrNet {:.4} (lambda {lambda}), CCA {:.4} (ridge {ridge})",
            c.f1, k.f1
        ),
    );
    Ok(())
}

fn main() {
    let mut s = Suite {
        failures: 0,
        total: 0,
    };
    let start = Instant::now();
    criterion_gradients(&mut s);
    if let Err(e) = criterion_cca(&mut s) {
        s.error("7", "CCA oracle", e);
    }
    if let Err(e) = criterion_metrics(&mut s) {
        s.error("8", "metric oracles", e);
    }
    if let Err(e) = criterion_transliteration(&mut s) {
        s.error("9", "transliteration matching", e);
    }
    match load_mnist() {
        Ok(m) => {
            if let Err(e) = criteria_mnist(&mut s, &m) {
                s.error("2-6", "MNIST experiments", e);
            }
        }
        Err(e) => s.error(
            "2-6",
            "MNIST experiments",
            format!(
                "cannot load MNIST from {} ({e}); run `crlkit fetch-mnist` or set CRLKIT_MNIST_DIR",
                mnist_dir().display()
            ),
        ),
    }
    println!(
        "acceptance: {} of {} checks passed in {:.0} s",
        s.total - s.failures,
        s.total,
        start.elapsed().as_secs_f64()
    );
    if s.failures > 0 {
        std::process::exit(1);
    }
}
